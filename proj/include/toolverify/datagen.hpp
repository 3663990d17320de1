#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolverify/error.hpp"
#include "toolverify/prompts.hpp"
#include "toolverify/registry.hpp"
#include "toolverify/rng.hpp"
#include "toolverify/selector.hpp"
#include "toolverify/similarity.hpp"
#include "toolverify/text.hpp"

namespace toolverify {

using NamedTool = std::pair<std::string, std::string>;  // (name, description)

/// Few-shot pool shown to the tool generator. Newly accepted tools replace
/// their most similar member once the pool is full.
struct SeedPool {
  std::vector<NamedTool> tools;
  std::size_t capacity = 8;

  void validate() const {
    if (capacity == 0) throw PreconditionError("seed pool capacity must be positive");
    if (tools.size() > capacity) throw PreconditionError("seed pool exceeds its capacity");
    std::set<std::string> seen;
    for (const auto& [name, _] : tools) {
      if (!seen.insert(name).second) throw PreconditionError("seed pool has duplicate tool '" + name + "'");
    }
  }
};

/// Consecutive "Name: ..." / "Description: ..." pairs. Incomplete pairs and
/// other lines are ignored.
inline std::vector<NamedTool> parse_tool_generation(std::string_view generated) {
  std::vector<NamedTool> out;
  std::optional<std::string> pending;
  for (const auto& raw : text::split_lines(generated)) {
    auto line = text::trim_view(raw);
    if (line.empty()) continue;
    if (line.rfind("Name:", 0) == 0) {
      auto name = text::trim(line.substr(5));
      pending = name.empty() ? std::nullopt : std::optional<std::string>(name);
    } else if (line.rfind("Description:", 0) == 0 && pending) {
      auto description = text::trim(line.substr(12));
      if (!description.empty()) out.emplace_back(std::move(*pending), std::move(description));
      pending.reset();
    } else {
      pending.reset();
    }
  }
  return out;
}

struct LibraryOptions {
  std::size_t rounds = 2;
  std::size_t per_round = 4;
  double dedup_threshold = kDefaultDedupThreshold;
  bool name_only_similarity = false;
  std::int64_t seed = 0;
};

struct LibraryResult {
  std::vector<NamedTool> tools;  // seed tools first, then accepted ones
  SeedPool final_pool;
  std::vector<std::pair<std::string, std::string>> replacements;  // (replaced, added)
  std::size_t skipped_rounds = 0;
  std::size_t rejected_duplicates = 0;
};

/// Iterative few-shot tool generation. Each round prompts with the current
/// pool; each accepted tool then takes the place of the pool member most
/// similar to it. Near-duplicates of any library tool are rejected.
inline LibraryResult generate_tool_library(const Context& ctx, const SeedPool& seed, const Embedder& embedder,
                                           const LibraryOptions& options = {}) {
  seed.validate();
  if (seed.tools.empty()) throw PreconditionError("generate_tool_library: empty seed pool");
  if (options.rounds == 0 || options.per_round == 0) throw PreconditionError("generate_tool_library: rounds and per_round must be >= 1");

  auto embed_tool = [&](const NamedTool& t) {
    return embedder.embed(tool_similarity_text(t.first, t.second, options.name_only_similarity));
  };

  LibraryResult result;
  result.final_pool = seed;
  std::vector<Embedding> library_vecs;
  for (const auto& t : seed.tools) {
    result.tools.push_back(t);
    library_vecs.push_back(embed_tool(t));
  }

  for (std::size_t round = 0; round < options.rounds; ++round) {
    auto reply = ctx.ask(prompts::Stage::kToolGen, {{"tool_examples", prompts::format_tool_examples(result.final_pool.tools)}}, nullptr,
                         options.seed + static_cast<std::int64_t>(round));
    auto parsed = parse_tool_generation("Name:" + reply);
    if (parsed.empty()) {
      ++result.skipped_rounds;
      continue;
    }
    std::size_t accepted = 0;
    for (auto& tool : parsed) {
      if (accepted == options.per_round) break;
      auto vec = embed_tool(tool);
      bool duplicate = false;
      for (std::size_t i = 0; i < result.tools.size() && !duplicate; ++i) {
        duplicate = text::normalize_name(result.tools[i].first) == text::normalize_name(tool.first) ||
                    cosine(vec, library_vecs[i]) > options.dedup_threshold;
      }
      if (duplicate) {
        ++result.rejected_duplicates;
        continue;
      }
      auto& pool = result.final_pool.tools;
      if (pool.size() < result.final_pool.capacity) {
        pool.push_back(tool);
      } else {
        std::size_t best = 0;
        double best_sim = -2.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
          double sim = cosine(vec, embed_tool(pool[i]));
          if (sim > best_sim) {
            best_sim = sim;
            best = i;
          }
        }
        result.replacements.emplace_back(pool[best].first, tool.first);
        pool[best] = tool;
      }
      result.tools.push_back(tool);
      library_vecs.push_back(std::move(vec));
      ++accepted;
    }
  }
  return result;
}

struct RelatedResult {
  std::vector<std::string> names;  // two names on success
  bool ok = false;
  std::size_t attempts = 0;
};

namespace detail {

inline std::string first_line(std::string_view s) {
  for (const auto& line : text::split_lines(s)) {
    auto t = text::trim(line);
    if (!t.empty()) return t;
  }
  return {};
}

}  // namespace detail

/// Two related tool names, generated one after another with different
/// seeds. Names must differ (after normalization) from the tool, from each
/// other, and from everything in `taken`. Gives up after `max_attempts`
/// tries per name.
inline RelatedResult generate_related_tools(const Context& ctx, const std::string& tool_name, const std::set<std::string>& taken = {},
                                            std::int64_t seed = 0, std::size_t max_attempts = 3) {
  RelatedResult result;
  std::set<std::string> used = taken;
  used.insert(text::normalize_name(tool_name));
  std::int64_t next_seed = seed;
  for (int slot = 0; slot < 2; ++slot) {
    bool found = false;
    for (std::size_t attempt = 0; attempt < max_attempts && !found; ++attempt) {
      ++result.attempts;
      auto reply = slot == 0 ? ctx.ask(prompts::Stage::kRelatedGen, {{"name", tool_name}}, nullptr, next_seed++)
                             : ctx.ask(prompts::Stage::kRelatedGenNext, {{"name", tool_name}, {"related1", result.names[0]}}, nullptr,
                                       next_seed++);
      auto name = detail::first_line(reply);
      auto key = text::normalize_name(name);
      if (key.empty() || used.count(key)) continue;
      used.insert(key);
      result.names.push_back(name);
      found = true;
    }
    if (!found) {
      result.names.clear();
      return result;
    }
  }
  result.ok = true;
  return result;
}

/// Description for a generated name, by continuing the tool-generation pool.
inline std::string describe_tool(const Context& ctx, const SeedPool& pool, const std::string& name, std::int64_t seed = 0) {
  auto reply = ctx.ask(prompts::Stage::kToolDescribe, {{"tool_examples", prompts::format_tool_examples(pool.tools)}, {"name", name}}, nullptr,
                       seed);
  return detail::first_line(reply);
}

/// `n` distinct, non-empty instructions for a tool, one generation each.
/// Blank or repeated generations are resampled up to `max_resamples` times.
inline std::vector<std::string> generate_instructions(const Context& ctx, const ToolSpec& tool, std::size_t n = 3, std::int64_t seed = 0,
                                                      std::size_t max_resamples = 4) {
  if (n == 0) throw PreconditionError("generate_instructions: n must be >= 1");
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::size_t resamples = 0;
  std::int64_t next_seed = seed;
  while (out.size() < n) {
    std::string previous;
    for (std::size_t i = 0; i < out.size(); ++i) previous += "Instruction " + std::to_string(i + 1) + ": " + out[i] + "\n";
    auto reply = ctx.ask(prompts::Stage::kInstructionGen,
                         {{"name", tool.name},
                          {"description", tool.description},
                          {"previous", previous},
                          {"index", std::to_string(out.size() + 1)}},
                         nullptr, next_seed++);
    auto instruction = text::strip_quotes(detail::first_line(reply));
    auto key = text::to_lower(instruction);
    if (instruction.empty() || !seen.insert(key).second) {
      if (++resamples > max_resamples)
        throw GenerationError("instruction generation for " + tool.name + " exceeded " + std::to_string(max_resamples) + " resamples");
      continue;
    }
    out.push_back(std::move(instruction));
  }
  return out;
}

/// Why the ground-truth tool fits, truncated to `max_tokens` words. Falls
/// back to a templated note when the model returns nothing.
inline std::string generate_reasoning_note(const Context& ctx, const std::string& instruction, const CandidateSet& candidates,
                                           const std::string& ground_truth, std::size_t max_tokens = 480, std::int64_t seed = 0) {
  if (!candidates.contains(ground_truth)) throw PreconditionError("generate_reasoning_note: ground truth is not a candidate");
  if (max_tokens == 0) throw PreconditionError("generate_reasoning_note: max_tokens must be >= 1");
  auto reply = ctx.ask(prompts::Stage::kReasoningGen,
                       {{"candidate_list", prompts::format_candidate_list(ctx.registry, candidates.tools)},
                        {"instruction", instruction},
                        {"name", ground_truth}},
                       nullptr, seed);
  auto note = text::truncate_words(reply, max_tokens);
  if (note.empty()) note = text::truncate_words("The tool \"" + ground_truth + "\" is the most suitable choice for this request.", max_tokens);
  return note;
}

struct TrainingSample {
  std::string instruction;
  CandidateSet candidates;
  std::string ground_truth;
  std::string reasoning_note;
  std::string target;
  std::string input;  // rendered selection prompt
  bool hard = false;

  bool operator==(const TrainingSample& o) const {
    return instruction == o.instruction && candidates.tools == o.candidates.tools && candidates.ground_truth == o.candidates.ground_truth &&
           candidates.hard == o.candidates.hard && ground_truth == o.ground_truth && reasoning_note == o.reasoning_note &&
           target == o.target && input == o.input && hard == o.hard;
  }
};

struct DatasetStats {
  std::size_t n_samples = 0;
  std::size_t n_tools = 0;
  std::size_t n_hard = 0;
  double avg_candidates = 0.0;
  std::size_t min_candidates = 0;
  std::size_t max_candidates = 0;
  double avg_note_chars = 0.0;

  nlohmann::json to_json() const {
    return {{"n_samples", n_samples},         {"n_tools", n_tools},
            {"n_hard", n_hard},               {"avg_candidates", avg_candidates},
            {"min_candidates", min_candidates}, {"max_candidates", max_candidates},
            {"avg_note_chars", avg_note_chars}};
  }
};

inline DatasetStats compute_stats(const std::vector<TrainingSample>& samples, std::size_t n_tools) {
  DatasetStats s;
  s.n_samples = samples.size();
  s.n_tools = n_tools;
  if (samples.empty()) return s;
  s.min_candidates = SIZE_MAX;
  double cand_total = 0, note_total = 0;
  for (const auto& x : samples) {
    s.n_hard += x.hard;
    auto c = x.candidates.tools.size();
    cand_total += static_cast<double>(c);
    s.min_candidates = std::min(s.min_candidates, c);
    s.max_candidates = std::max(s.max_candidates, c);
    note_total += static_cast<double>(x.reasoning_note.size());
  }
  s.avg_candidates = cand_total / static_cast<double>(samples.size());
  s.avg_note_chars = note_total / static_cast<double>(samples.size());
  return s;
}

struct DatagenConfig {
  double hard_ratio = 75.0 / 555.0;
  std::size_t k = 7;
  std::uint64_t seed = 0;
  std::size_t max_note_tokens = 480;
  bool shuffle = true;
  std::size_t instructions_per_tool = 3;
};

struct DatasetResult {
  std::vector<TrainingSample> samples;
  DatasetStats stats;
  std::size_t hard_fallbacks = 0;  // hard samples for tools without related tools
  std::vector<std::string> skipped_tools;  // instruction generation failed
};

/// Builds the tool-selection corpus from the registry in `ctx`: instructions
/// per tool, a candidate set per instruction (a `hard_ratio` share restricted
/// to related tools), and a reasoning-note target per sample.
inline DatasetResult assemble_dataset(const Context& ctx, const DatagenConfig& config = {}) {
  if (ctx.registry.empty()) throw PreconditionError("assemble_dataset: empty registry");
  if (config.hard_ratio < 0.0 || config.hard_ratio > 1.0) throw PreconditionError("hard_ratio must lie in [0, 1]");

  DatasetResult result;
  struct Pending {
    std::string tool;
    std::string instruction;
  };
  std::vector<Pending> pending;
  const auto& tools = ctx.registry.tools();
  for (std::size_t t = 0; t < tools.size(); ++t) {
    try {
      auto seed = static_cast<std::int64_t>(config.seed) * 1000 + static_cast<std::int64_t>(t) * 10;
      for (auto& ins : generate_instructions(ctx, tools[t], config.instructions_per_tool, seed)) pending.push_back({tools[t].name, std::move(ins)});
    } catch (const GenerationError&) {
      result.skipped_tools.push_back(tools[t].name);
    }
  }

  std::vector<std::size_t> order(pending.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng(mix_seed(config.seed, 0x4841524455ULL)).shuffle(order);
  const auto n_hard = static_cast<std::size_t>(std::llround(config.hard_ratio * static_cast<double>(pending.size())));
  std::vector<bool> want_hard(pending.size(), false);
  for (std::size_t i = 0; i < n_hard; ++i) want_hard[order[i]] = true;

  for (std::size_t i = 0; i < pending.size(); ++i) {
    const auto& [gt, instruction] = pending[i];
    const auto& tool = ctx.registry.at(gt);
    const auto set_seed = mix_seed(config.seed, i);
    CandidateSet set;
    if (want_hard[i] && !tool.related.empty()) {
      set = ctx.registry.build_candidate_set(gt, CandidateMode::kRelatedOnly, config.k, set_seed);
    } else {
      if (want_hard[i]) ++result.hard_fallbacks;
      set = ctx.registry.build_candidate_set(gt, CandidateMode::kRandomK, config.k, set_seed);
    }
    if (!config.shuffle) {
      std::stable_partition(set.tools.begin(), set.tools.end(), [&](const std::string& n) { return n == gt; });
    }
    TrainingSample sample;
    sample.instruction = instruction;
    sample.candidates = set;
    sample.ground_truth = gt;
    sample.hard = set.hard;
    sample.reasoning_note = generate_reasoning_note(ctx, instruction, set, gt, config.max_note_tokens,
                                                    static_cast<std::int64_t>(config.seed) * 1000 + static_cast<std::int64_t>(i));
    sample.target = prompts::serialize_target(sample.reasoning_note, gt);
    sample.input = ctx.prompts.render(prompts::Stage::kSelect0Shot,
                                      {{"candidate_list", prompts::format_candidate_list(ctx.registry, set.tools)}, {"instruction", instruction}});
    result.samples.push_back(std::move(sample));
  }
  result.stats = compute_stats(result.samples, ctx.registry.size());
  return result;
}

inline nlohmann::json sample_to_json(const TrainingSample& s) {
  return {{"input", s.input},
          {"output", s.target},
          {"instruction", s.instruction},
          {"ground_truth", s.ground_truth},
          {"candidates", s.candidates.tools},
          {"hard", s.hard},
          {"reasoning_note", s.reasoning_note}};
}

inline TrainingSample sample_from_json(const nlohmann::json& j) {
  TrainingSample s;
  s.input = j.at("input").get<std::string>();
  s.target = j.at("output").get<std::string>();
  s.instruction = j.at("instruction").get<std::string>();
  s.ground_truth = j.at("ground_truth").get<std::string>();
  s.candidates.tools = j.at("candidates").get<std::vector<std::string>>();
  s.candidates.ground_truth = s.ground_truth;
  s.hard = j.at("hard").get<bool>();
  s.candidates.hard = s.hard;
  s.reasoning_note = j.value("reasoning_note", std::string{});
  return s;
}

/// Serializes samples as JSON lines. Every target must parse back to its
/// ground truth; nothing is written otherwise.
inline std::string format_dataset(const std::vector<TrainingSample>& samples) {
  std::string out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    std::string parsed;
    try {
      parsed = parse_tool_action(s.target);
    } catch (const SelectionError&) {
    }
    if (parsed != s.ground_truth)
      throw PreconditionError("sample #" + std::to_string(i) + ": target does not name its ground truth '" + s.ground_truth + "'");
    if (!s.candidates.contains(s.ground_truth))
      throw PreconditionError("sample #" + std::to_string(i) + ": ground truth is not among the candidates");
    out += sample_to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline std::size_t export_finetune(const std::vector<TrainingSample>& samples, const std::string& path) {
  text::write_file(path, format_dataset(samples));
  return samples.size();
}

inline std::vector<TrainingSample> import_dataset(const std::string& path) {
  std::vector<TrainingSample> out;
  auto lines = text::split_lines(text::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim_view(lines[i]).empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(i + 1) + ": bad dataset record: " + e.what(), i + 1);
    }
  }
  return out;
}

struct SyntheticRegistryOptions {
  LibraryOptions library;
  std::size_t pool_capacity = 8;
  bool generate_library = true;
  bool generate_related = true;
};

struct SyntheticRegistryResult {
  Registry registry;
  LibraryResult library;
  std::vector<std::string> related_failures;
};

/// Seed tools -> generated library -> two described related tools per
/// library tool. Each tool family (tool plus its related tools) is linked
/// both ways so every member can anchor a hard sample.
inline SyntheticRegistryResult build_synthetic_registry(const Backends& backends, const Registry& seed_registry, const Embedder& embedder,
                                                        const SyntheticRegistryOptions& options = {},
                                                        const prompts::PromptLibrary& library = prompts::PromptLibrary::builtin()) {
  if (seed_registry.empty()) throw PreconditionError("seed registry is empty");
  const Registry none;
  Context ctx{none, backends, library};

  SeedPool pool;
  pool.capacity = options.pool_capacity;
  for (const auto& t : seed_registry.tools()) {
    if (pool.tools.size() == pool.capacity) break;
    pool.tools.emplace_back(t.name, t.description);
  }

  SyntheticRegistryResult result;
  if (options.generate_library) {
    result.library = generate_tool_library(ctx, pool, embedder, options.library);
  } else {
    result.library.final_pool = pool;
    result.library.tools = pool.tools;
  }

  std::vector<ToolSpec> specs;
  std::set<std::string> taken;
  for (const auto& t : seed_registry.tools()) taken.insert(text::normalize_name(t.name));
  for (const auto& [n, d] : result.library.tools) taken.insert(text::normalize_name(n));

  // Library = seed pool prefix + generated tools; keep every seed tool as given.
  std::vector<ToolSpec> base(seed_registry.tools().begin(), seed_registry.tools().end());
  for (std::size_t i = pool.tools.size(); i < result.library.tools.size(); ++i) {
    ToolSpec t;
    t.name = result.library.tools[i].first;
    t.description = result.library.tools[i].second;
    t.synthetic = true;
    base.push_back(std::move(t));
  }

  std::int64_t seed = options.library.seed * 1000 + 500;
  for (auto& tool : base) {
    if (!options.generate_related || !tool.related.empty()) {
      specs.push_back(tool);
      continue;
    }
    auto related = generate_related_tools(ctx, tool.name, taken, seed);
    seed += 10;
    if (!related.ok) {
      result.related_failures.push_back(tool.name);
      specs.push_back(tool);
      continue;
    }
    std::vector<ToolSpec> family{tool};
    for (const auto& name : related.names) {
      taken.insert(text::normalize_name(name));
      ToolSpec r;
      r.name = name;
      r.description = describe_tool(ctx, result.library.final_pool, name, seed++);
      if (r.description.empty()) r.description = "A variant of " + tool.name + ".";
      r.synthetic = true;
      family.push_back(std::move(r));
    }
    for (auto& member : family) {
      for (const auto& other : family) {
        if (other.name != member.name) member.related.push_back(other.name);
      }
    }
    for (auto& member : family) specs.push_back(std::move(member));
  }
  result.registry = Registry(std::move(specs));
  return result;
}

}  // namespace toolverify
