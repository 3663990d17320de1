#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolverify/call.hpp"
#include "toolverify/error.hpp"
#include "toolverify/live.hpp"
#include "toolverify/paramgen.hpp"
#include "toolverify/registry.hpp"
#include "toolverify/selector.hpp"
#include "toolverify/text.hpp"
#include "toolverify/vq_cache.hpp"

namespace toolverify {

struct TaskSample {
  std::string instruction;
  std::string gold_call;
  std::string task;
  std::string tool;  // optional in the file; inferred from gold_call when empty
};

/// Reads a task file: one {"instruction", "gold_call", "task"[, "tool"]}
/// object per line.
inline std::vector<TaskSample> parse_task_file(std::string_view content, const std::string& source = "<tasks>") {
  std::vector<TaskSample> out;
  std::size_t line_no = 0;
  for (const auto& raw : text::split_lines(content)) {
    ++line_no;
    auto line = text::trim_view(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto where = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ": " + e.what(), e.byte);
    }
    try {
      TaskSample s;
      s.instruction = j.at("instruction").get<std::string>();
      s.gold_call = j.at("gold_call").get<std::string>();
      s.task = j.value("task", std::string("default"));
      s.tool = j.value("tool", std::string());
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what(), 0);
    }
  }
  return out;
}

inline std::vector<TaskSample> load_task_file(const std::string& path) { return parse_task_file(text::read_file(path), path); }

namespace detail {

inline constexpr std::string_view kSlot = "zzTVSLOTzz";

/// True when `url` matches `pattern`, where each kSlot in the pattern stands
/// for one non-empty run of characters without '/'.
inline bool slot_match(std::string_view pattern, std::string_view url) {
  auto at = pattern.find(kSlot);
  if (at == std::string_view::npos) return pattern == url;
  if (url.substr(0, at) != pattern.substr(0, at)) return false;
  auto rest_pattern = pattern.substr(at + kSlot.size());
  for (std::size_t end = at + 1; end <= url.size(); ++end) {
    if (url[end - 1] == '/') break;
    if (slot_match(rest_pattern, url.substr(end))) return true;
  }
  return false;
}

}  // namespace detail

/// Which registry tool a gold call invokes, decided by verb and URL shape.
/// Ties between tools sharing an endpoint go to the one whose query keys
/// match the call's.
inline std::string infer_gold_tool(const Registry& registry, const CanonicalCall& gold) {
  const ToolSpec* best = nullptr;
  int best_score = -1;
  bool tie = false;
  for (const auto& tool : registry.tools()) {
    if (tool.call_template.empty()) continue;
    ParamValues slots;
    for (const auto& p : tool.params) slots[p.name] = std::string(detail::kSlot);
    CanonicalCall shape;
    try {
      shape = parse_call(render_call_template(tool, slots));
    } catch (const ParseError&) {
      continue;
    }
    if (shape.method != gold.method || !detail::slot_match(shape.base_url, gold.base_url)) continue;
    int score = 0;
    for (const auto& [k, v] : shape.params) score += gold.params.count(k) ? 1 : -1;
    for (const auto& [k, v] : gold.params) score -= shape.params.count(k) ? 0 : 1;
    if (score > best_score) {
      best = &tool;
      best_score = score;
      tie = false;
    } else if (score == best_score) {
      tie = true;
    }
  }
  if (!best) throw PreconditionError("gold call " + gold.to_string() + " matches no registry tool");
  if (tie) throw PreconditionError("gold call " + gold.to_string() + " matches more than one registry tool equally");
  return best->name;
}

/// The four ablation axes plus scoring policy.
struct PipelineConfig {
  std::string label = "both";
  bool tool_verify = true;
  bool param_verify = true;
  bool condition_on_instruction = false;
  ConstructionMode construction = ConstructionMode::kTemplate;
  std::size_t n_shots = 3;
  VerifyOptions verify_options;
  EquivalencePolicy policy;
  std::size_t workers = 1;
  std::optional<LiveOptions> live;  // response-equality scoring instead of canonical equivalence
};

/// The four rows of an ablation sweep, in table order.
inline std::vector<PipelineConfig> ablation_configs(const PipelineConfig& base = {}) {
  std::vector<PipelineConfig> out;
  for (auto [label, tool, param] : {std::tuple{"none", false, false}, std::tuple{"tool-only", true, false},
                                     std::tuple{"param-only", false, true}, std::tuple{"both", true, true}}) {
    auto c = base;
    c.label = label;
    c.tool_verify = tool;
    c.param_verify = param;
    out.push_back(c);
  }
  return out;
}

struct EvalRecord {
  std::size_t index = 0;
  std::string task;
  std::string instruction;
  std::string gold_call;
  std::string gold_tool;
  std::string predicted_tool;
  std::string predicted_call;
  bool selection_correct = false;
  bool call_success = false;
  bool unscored = false;     // live execution could not be performed
  std::string failure;       // "", "selection", "parameters", "construction", "call-mismatch", "error"
  std::string detail;
  std::string top1, top2, question, answer;
  std::vector<std::string> flags;
};

struct TaskReport {
  std::string config;
  std::string task;
  std::size_t n = 0;          // scored samples
  std::size_t unscored = 0;
  std::size_t selected = 0;
  std::size_t succeeded = 0;
  double selection_accuracy = 0;  // percent
  double success_rate = 0;        // percent
  std::map<std::string, std::size_t> failures;
};

/// Aggregates records for one task ("" means all). Independent of record order.
inline TaskReport summarize(const std::vector<EvalRecord>& records, const std::string& task, const std::string& config = {}) {
  TaskReport r;
  r.config = config;
  r.task = task.empty() ? "all" : task;
  for (const auto& rec : records) {
    if (!task.empty() && rec.task != task) continue;
    if (rec.unscored) {
      ++r.unscored;
      continue;
    }
    ++r.n;
    if (rec.selection_correct) ++r.selected;
    if (rec.call_success) ++r.succeeded;
    if (!rec.failure.empty()) ++r.failures[rec.failure];
  }
  if (r.n) {
    r.selection_accuracy = 100.0 * static_cast<double>(r.selected) / static_cast<double>(r.n);
    r.success_rate = 100.0 * static_cast<double>(r.succeeded) / static_cast<double>(r.n);
  }
  return r;
}

struct EvalRun {
  std::string config;
  std::vector<EvalRecord> records;  // task-file order
  std::vector<TaskReport> reports;  // per task in first-seen order, then "all"
};

/// Runs one sample through selection, parameter generation, construction and
/// scoring. Errors become failures on the record.
inline EvalRecord evaluate_sample(const Context& ctx, const TaskSample& sample, const std::vector<std::string>& pool,
                                  const PipelineConfig& config, VQCache* cache, std::size_t index = 0) {
  EvalRecord rec;
  rec.index = index;
  rec.task = sample.task;
  rec.instruction = sample.instruction;
  rec.gold_call = sample.gold_call;
  rec.gold_tool = sample.tool;

  const char* stage = "selection";
  try {
    auto gold = parse_call(sample.gold_call);
    if (rec.gold_tool.empty()) rec.gold_tool = infer_gold_tool(ctx.registry, gold);

    CandidateSet candidates{pool, rec.gold_tool, false};
    auto trace = verified_select(ctx, sample.instruction, candidates, cache,
                                 {config.tool_verify, config.condition_on_instruction});
    rec.predicted_tool = trace.final_choice;
    rec.top1 = trace.top1;
    rec.top2 = trace.top2;
    rec.question = trace.question;
    rec.answer = trace.answer;
    rec.flags = trace.flags;
    rec.selection_correct = rec.predicted_tool == rec.gold_tool;

    stage = "parameters";
    const auto& tool = ctx.registry.at(rec.predicted_tool);
    auto primary = generate_parameters(ctx, sample.instruction, tool, config.n_shots);
    VerifiedParamSet params;
    if (config.param_verify && !tool.params.empty()) {
      auto secondary = second_opinion(ctx, sample.instruction, tool, config.n_shots);
      auto options = config.verify_options;
      options.seed = mix_seed(options.seed, index);
      params = verify_all(ctx, sample.instruction, tool, primary.values, secondary.values, options);
    } else {
      params = unverified(tool, primary.values);
    }
    for (const auto& p : params.predictions) {
      for (const auto& f : p.flags) rec.flags.push_back(p.param + ": " + f);
    }

    stage = "construction";
    auto built = construct_call(ctx, tool, params, config.construction, sample.instruction, config.n_shots);
    rec.predicted_call = built.call;
    for (const auto& f : built.flags) rec.flags.push_back(f);

    if (!rec.selection_correct) {
      rec.failure = "selection";
      return rec;
    }
    stage = "scoring";
    if (config.live) {
      try {
        rec.call_success = execute_live(rec.predicted_call, *config.live) == execute_live(sample.gold_call, *config.live);
      } catch (const LiveError& e) {
        rec.unscored = true;
        rec.detail = e.what();
        return rec;
      }
    } else {
      rec.call_success = calls_equivalent(parse_call(rec.predicted_call), gold, config.policy);
    }
    if (!rec.call_success) rec.failure = "call-mismatch";
  } catch (const std::exception& e) {
    rec.call_success = false;
    const std::string_view where = stage;
    if (where == "scoring") {
      rec.failure = "error";
    } else {
      // a wrong pick is the root cause even when a later stage also fails
      rec.failure = where != "selection" && !rec.selection_correct ? "selection" : std::string(where);
    }
    rec.detail = e.what();
  }
  return rec;
}

/// Evaluates every sample against the full registry as the candidate pool.
inline EvalRun run_eval(const Context& ctx, const std::vector<TaskSample>& samples, const PipelineConfig& config,
                        VQCache* cache = nullptr) {
  if (ctx.registry.empty()) throw PreconditionError("run_eval: empty registry");
  for (const auto& s : samples) {
    auto gold = parse_call(s.gold_call);
    if (!s.tool.empty()) {
      ctx.registry.at(s.tool);
    } else {
      infer_gold_tool(ctx.registry, gold);
    }
  }
  const auto pool = ctx.registry.names();

  EvalRun run;
  run.config = config.label;
  run.records.resize(samples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < samples.size();) {
      run.records[i] = evaluate_sample(ctx, samples[i], pool, config, cache, i);
    }
  };
  const auto n_workers = std::max<std::size_t>(1, std::min(config.workers, samples.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::vector<std::string> tasks;
  for (const auto& s : samples) {
    if (std::find(tasks.begin(), tasks.end(), s.task) == tasks.end()) tasks.push_back(s.task);
  }
  for (const auto& t : tasks) run.reports.push_back(summarize(run.records, t, config.label));
  run.reports.push_back(summarize(run.records, "", config.label));
  return run;
}

inline std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Plain-text report table, one row per (config, task).
inline std::string format_report_table(const std::vector<TaskReport>& reports) {
  std::vector<std::array<std::string, 6>> rows;
  rows.push_back({"config", "task", "n", "selection_accuracy", "success_rate", "unscored"});
  for (const auto& r : reports) {
    rows.push_back({r.config, r.task, std::to_string(r.n), format_percent(r.selection_accuracy), format_percent(r.success_rate),
                    std::to_string(r.unscored)});
  }
  std::array<std::size_t, 6> width{};
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      auto pad = std::string(width[c] - row[c].size(), ' ');
      line += c < 2 ? row[c] + pad : pad + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

inline nlohmann::json record_to_json(const EvalRecord& r, const std::string& config = {}) {
  nlohmann::json j = {{"index", r.index},
                      {"task", r.task},
                      {"instruction", r.instruction},
                      {"gold_call", r.gold_call},
                      {"gold_tool", r.gold_tool},
                      {"predicted_tool", r.predicted_tool},
                      {"predicted_call", r.predicted_call},
                      {"selection_correct", r.selection_correct},
                      {"call_success", r.call_success},
                      {"unscored", r.unscored},
                      {"failure", r.failure},
                      {"detail", r.detail},
                      {"top1", r.top1},
                      {"top2", r.top2},
                      {"question", r.question},
                      {"answer", r.answer},
                      {"flags", r.flags}};
  if (!config.empty()) j["config"] = config;
  return j;
}

inline nlohmann::json report_to_json(const TaskReport& r) {
  return {{"config", r.config},
          {"task", r.task},
          {"n", r.n},
          {"unscored", r.unscored},
          {"selection_accuracy", r.selection_accuracy},
          {"success_rate", r.success_rate},
          {"failures", r.failures}};
}

/// Per-sample log: one JSON object per line.
inline std::string format_sample_log(const EvalRun& run) {
  std::string out;
  for (const auto& r : run.records) out += record_to_json(r, run.config).dump() + "\n";
  return out;
}

}  // namespace toolverify
