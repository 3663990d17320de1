#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolverify/backend.hpp"
#include "toolverify/datagen.hpp"
#include "toolverify/error.hpp"
#include "toolverify/eval.hpp"
#include "toolverify/paramgen.hpp"
#include "toolverify/prompts.hpp"
#include "toolverify/registry.hpp"
#include "toolverify/remote_backend.hpp"
#include "toolverify/scripted_backend.hpp"
#include "toolverify/selector.hpp"
#include "toolverify/similarity.hpp"
#include "toolverify/vq_cache.hpp"

namespace toolverify::cli {

/// Everything a command needs, as parsed from flags.
///
/// Backend specs are either an http(s) URL of a generation endpoint or
/// "script:<path>" for a scripted backend. Several stages naming the same
/// spec share one backend instance.
struct RunConfig {
  std::string registry_path;
  std::string prompts_dir;                        // overrides for built-in templates
  std::string default_backend;                    // empty: TOOLVERIFY_ENDPOINT
  std::map<std::string, std::string> stage_backends;  // stage tag -> spec
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<int> max_tokens;

  bool tool_verify = true;
  bool param_verify = true;
  bool condition_on_instruction = false;
  bool model_construction = false;
  bool lenient_none = false;
  bool randomize_verify_order = false;
  std::size_t n_shots = 3;
  std::size_t workers = 1;
  bool sweep = false;

  bool shuffle = true;
  double hard_ratio = 75.0 / 555.0;
  std::size_t k = 7;
  std::size_t instructions_per_tool = 3;
  std::size_t max_note_tokens = 480;
  std::uint64_t seed = 0;

  bool synthesize = false;  // datagen: expand the registry with generated tools first
  std::size_t library_rounds = 2;
  std::size_t library_per_round = 4;

  std::string cache_path;
  std::string output_dir;
  std::string transcripts_dir;
  std::string log_path;
  std::string report_path;

  std::set<std::string> live_hosts;  // non-empty enables live scoring
};

/// Backends plus the loaded registry and prompts for one command.
struct Session {
  RunConfig config;
  Registry registry;
  prompts::PromptLibrary prompts;
  Backends backends;
  std::map<std::string, std::shared_ptr<ScriptedBackend>> scripted;  // by script path

  Context context() const { return Context{registry, backends, prompts}; }
};

inline std::shared_ptr<Backend> make_backend(Session& session, const std::string& spec) {
  static constexpr std::string_view kScript = "script:";
  if (spec.rfind(kScript, 0) == 0) {
    auto path = spec.substr(kScript.size());
    if (auto it = session.scripted.find(path); it != session.scripted.end()) return it->second;
    auto backend = ScriptedBackend::from_file(path, "script:" + std::filesystem::path(path).filename().string());
    session.scripted[path] = backend;
    return backend;
  }
  if (spec.find("://") == std::string::npos) throw PreconditionError("backend spec must be a URL or script:<path>, got '" + spec + "'");
  auto options = RemoteBackend::options_from_env();
  options.url = spec;
  return std::make_shared<RemoteBackend>(options);
}

/// Builds backends from the config. Unknown stage tags and unreadable paths
/// are reported here, before any generation starts.
inline void configure_backends(Session& session) {
  const auto& config = session.config;
  std::map<std::string, std::shared_ptr<Backend>> by_spec;
  auto get = [&](const std::string& spec) {
    auto& slot = by_spec[spec];
    if (!slot) slot = make_backend(session, spec);
    return slot;
  };

  std::string default_spec = config.default_backend;
  if (default_spec.empty()) default_spec = RemoteBackend::options_from_env().url;
  if (!default_spec.empty()) session.backends.set_default(get(default_spec));

  for (const auto& [tag_name, spec] : config.stage_backends) {
    auto tag = parse_stage_tag(tag_name);
    if (!tag) {
      std::string known;
      for (auto t : kAllStageTags) known += (known.empty() ? "" : ", ") + std::string(to_string(t));
      throw PreconditionError("unknown stage tag '" + tag_name + "' (known: " + known + ")");
    }
    session.backends.route(*tag, get(spec));
  }

  SamplingParams sampling;
  if (config.temperature) sampling.temperature = *config.temperature;
  if (config.top_p) sampling.top_p = *config.top_p;
  if (config.max_tokens) sampling.max_tokens = *config.max_tokens;
  sampling.seed = static_cast<std::int64_t>(config.seed);
  sampling.validate();
  session.backends.set_sampling(sampling);
}

inline Session open_session(const RunConfig& config, bool need_registry = true) {
  Session session;
  session.config = config;
  session.prompts = prompts::PromptLibrary::builtin();
  if (!config.prompts_dir.empty()) session.prompts.load_dir(config.prompts_dir);
  if (need_registry) {
    if (config.registry_path.empty()) throw PreconditionError("--registry is required");
    session.registry = load_registry(config.registry_path);
  }
  configure_backends(session);
  return session;
}

inline PipelineConfig pipeline_config(const RunConfig& config) {
  PipelineConfig p;
  p.label = config.tool_verify ? (config.param_verify ? "both" : "tool-only") : (config.param_verify ? "param-only" : "none");
  p.tool_verify = config.tool_verify;
  p.param_verify = config.param_verify;
  p.condition_on_instruction = config.condition_on_instruction;
  p.construction = config.model_construction ? ConstructionMode::kModel : ConstructionMode::kTemplate;
  p.n_shots = config.n_shots;
  p.verify_options.randomize_order = config.randomize_verify_order;
  p.verify_options.seed = config.seed;
  p.policy.lenient_none = config.lenient_none;
  p.workers = config.workers;
  if (!config.live_hosts.empty()) {
    LiveOptions live;
    live.allowed_hosts = config.live_hosts;
    p.live = LiveOptions::from_env(live);
  }
  return p;
}

inline std::unique_ptr<VQCache> open_cache(const RunConfig& config) {
  return config.cache_path.empty() ? std::make_unique<VQCache>() : std::make_unique<VQCache>(config.cache_path);
}

/// Writes one file per exchange: NN-<tag>.prompt.txt and NN-<tag>.response.txt.
inline void dump_transcripts(const std::string& dir, const std::vector<Transcript>& transcripts) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%02zu-", i + 1);
    auto base = (std::filesystem::path(dir) / (prefix + std::string(to_string(transcripts[i].tag)))).string();
    text::write_file(base + ".prompt.txt", transcripts[i].prompt);
    text::write_file(base + ".response.txt", transcripts[i].response);
  }
}

inline std::string output_path(const RunConfig& config, const std::string& name) {
  if (config.output_dir.empty()) throw PreconditionError("--out is required");
  std::filesystem::create_directories(config.output_dir);
  return (std::filesystem::path(config.output_dir) / name).string();
}

/// Dataset generation: optional registry expansion, then dataset.jsonl and
/// stats.json in the output directory.
inline int cmd_datagen(Session& session, std::ostream& out) {
  const auto& config = session.config;
  if (session.registry.empty()) throw PreconditionError("registry " + config.registry_path + " has no tools");
  const auto dataset_path = output_path(config, "dataset.jsonl");

  Registry registry = session.registry;
  if (config.synthesize) {
    SyntheticRegistryOptions options;
    options.library.rounds = config.library_rounds;
    options.library.per_round = config.library_per_round;
    options.library.seed = static_cast<std::int64_t>(config.seed);
    NgramEmbedder embedder;
    auto synth = build_synthetic_registry(session.backends, session.registry, embedder, options, session.prompts);
    registry = std::move(synth.registry);
    save_registry(registry, output_path(config, "registry.json"));
    for (const auto& name : synth.related_failures) out << "warning: no related tools for " << name << "\n";
  }

  Context ctx{registry, session.backends, session.prompts};
  DatagenConfig dc;
  dc.hard_ratio = config.hard_ratio;
  dc.k = config.k;
  dc.seed = config.seed;
  dc.max_note_tokens = config.max_note_tokens;
  dc.shuffle = config.shuffle;
  dc.instructions_per_tool = config.instructions_per_tool;
  auto result = assemble_dataset(ctx, dc);
  export_finetune(result.samples, dataset_path);
  auto stats = result.stats.to_json();
  stats["hard_fallbacks"] = result.hard_fallbacks;
  stats["skipped_tools"] = result.skipped_tools;
  text::write_file(output_path(config, "stats.json"), stats.dump(2) + "\n");
  out << stats.dump(2) << "\n";
  return 0;
}

inline int cmd_precompute_vq(Session& session, std::ostream& out) {
  if (session.config.cache_path.empty()) throw PreconditionError("--cache is required");
  VQCache cache(session.config.cache_path);
  auto before = cache.size();
  auto generated = precompute_questions(session.context(), cache);
  out << "generated " << generated << " question(s); cache holds " << cache.size() << " (was " << before << ")\n";
  return 0;
}

inline void print_selection(const SelectionTrace& trace, std::ostream& out) {
  out << "candidates: " << text::join(trace.candidates.tools, ", ") << "\n";
  out << "first pick: " << trace.top1 << "\n";
  if (!trace.top2.empty()) out << "second pick: " << trace.top2 << "\n";
  if (!trace.question.empty()) out << "question: " << trace.question << "\n";
  if (!trace.answer.empty()) out << "answer: " << trace.answer << "\n";
  out << "Act: CALLTOOL[" << trace.final_choice << "()]\n";
  for (const auto& f : trace.flags) out << "flag: " << f << "\n";
}

inline SelectionTrace run_selection(Session& session, const std::string& instruction) {
  if (session.registry.empty()) throw PreconditionError("registry has no tools");
  auto cache = open_cache(session.config);
  auto ctx = session.context();
  const auto& c = session.config;
  return verified_select(ctx, instruction, CandidateSet{session.registry.names(), std::nullopt, false}, cache.get(),
                         {c.tool_verify, c.condition_on_instruction});
}

inline int cmd_select(Session& session, const std::string& instruction, std::ostream& out) {
  auto trace = run_selection(session, instruction);
  print_selection(trace, out);
  dump_transcripts(session.config.transcripts_dir, trace.transcripts);
  return 0;
}

/// Full pipeline for one instruction: selection, parameters, call.
inline int cmd_call(Session& session, const std::string& instruction, std::ostream& out) {
  auto trace = run_selection(session, instruction);
  print_selection(trace, out);
  auto transcripts = trace.transcripts;

  auto ctx = session.context();
  const auto& config = session.config;
  const auto pipeline = pipeline_config(config);
  const auto& tool = session.registry.at(trace.final_choice);
  auto primary = generate_parameters(ctx, instruction, tool, config.n_shots);
  transcripts.insert(transcripts.end(), primary.transcripts.begin(), primary.transcripts.end());
  VerifiedParamSet params;
  if (config.param_verify && !tool.params.empty()) {
    auto secondary = second_opinion(ctx, instruction, tool, config.n_shots);
    transcripts.insert(transcripts.end(), secondary.transcripts.begin(), secondary.transcripts.end());
    params = verify_all(ctx, instruction, tool, primary.values, secondary.values, pipeline.verify_options);
    transcripts.insert(transcripts.end(), params.transcripts.begin(), params.transcripts.end());
  } else {
    params = unverified(tool, primary.values);
  }
  for (const auto& p : params.predictions) {
    out << "param " << p.param << ": " << p.final_value;
    if (p.primary_value != p.secondary_value || p.verdict != Verdict::kAgree)
      out << " (" << p.primary_value << " vs " << p.secondary_value << ", " << to_string(p.verdict) << ")";
    out << "\n";
    for (const auto& f : p.flags) out << "flag: " << p.param << ": " << f << "\n";
  }
  auto built = construct_call(ctx, tool, params, pipeline.construction, instruction, config.n_shots);
  transcripts.insert(transcripts.end(), built.transcripts.begin(), built.transcripts.end());
  for (const auto& f : built.flags) out << "flag: " << f << "\n";
  out << "call: " << built.call << "\n";
  dump_transcripts(config.transcripts_dir, transcripts);
  return 0;
}

/// Batch evaluation: one config from the toggles, or the four-row ablation
/// sweep. Writes the table to `out`, plus optional log and report files.
inline int cmd_eval(Session& session, const std::string& task_path, std::ostream& out) {
  const auto samples = load_task_file(task_path);
  const auto base = pipeline_config(session.config);
  const auto configs = session.config.sweep ? ablation_configs(base) : std::vector<PipelineConfig>{base};
  auto cache = open_cache(session.config);
  auto ctx = session.context();

  std::vector<TaskReport> reports;
  std::string log;
  for (const auto& c : configs) {
    auto run = run_eval(ctx, samples, c, cache.get());
    reports.insert(reports.end(), run.reports.begin(), run.reports.end());
    log += format_sample_log(run);
  }
  out << format_report_table(reports);
  if (!session.config.log_path.empty()) text::write_file(session.config.log_path, log);
  if (!session.config.report_path.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) j.push_back(report_to_json(r));
    text::write_file(session.config.report_path, j.dump(2) + "\n");
  }
  return 0;
}

/// Statistics of an existing dataset file.
inline int cmd_stats(const std::string& dataset_path, std::ostream& out) {
  auto samples = import_dataset(dataset_path);
  std::set<std::string> tools;
  for (const auto& s : samples) tools.insert(s.candidates.tools.begin(), s.candidates.tools.end());
  out << compute_stats(samples, tools.size()).to_json().dump(2) << "\n";
  return 0;
}

}  // namespace toolverify::cli
