#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolverify/backend.hpp"
#include "toolverify/error.hpp"
#include "toolverify/prompts.hpp"
#include "toolverify/registry.hpp"
#include "toolverify/text.hpp"
#include "toolverify/vq_cache.hpp"

namespace toolverify {

/// One prompt/response exchange with a backend.
struct Transcript {
  StageTag tag;
  std::string prompt;
  std::string response;
};

/// What the pipeline stages need: tools, backends, and prompt templates.
struct Context {
  const Registry& registry;
  const Backends& backends;
  const prompts::PromptLibrary& prompts = prompts::PromptLibrary::builtin();

  std::string ask(prompts::Stage stage, const prompts::Bindings& bindings, std::vector<Transcript>* log,
                  std::optional<std::int64_t> seed = {}) const {
    auto prompt = prompts.render(stage, bindings);
    auto tag = prompts::backend_tag(stage);
    auto response = backends.generate(tag, prompt, seed);
    if (log) log->push_back({tag, std::move(prompt), response.text});
    return std::move(response.text);
  }
};

/// Extracts the tool named by the first "CALLTOOL[Name(" in `reply`. Without
/// an action, falls back to the longest candidate name that appears verbatim
/// (the zero-shot prompt asks for just the name).
inline std::string parse_tool_action(std::string_view reply, const std::vector<std::string>& candidates = {}) {
  static constexpr std::string_view kAction = "CALLTOOL[";
  if (auto at = reply.find(kAction); at != std::string_view::npos) {
    auto start = at + kAction.size();
    auto end = reply.find_first_of("(]", start);
    if (end != std::string_view::npos) {
      auto name = text::trim(reply.substr(start, end - start));
      if (!name.empty()) return name;
    }
  }
  const std::string* best = nullptr;
  std::size_t best_pos = std::string_view::npos;
  for (const auto& c : candidates) {
    if (c.empty()) continue;
    auto pos = reply.find(c);
    if (pos == std::string_view::npos) continue;
    if (!best || c.size() > best->size() || (c.size() == best->size() && pos < best_pos)) {
      best = &c;
      best_pos = pos;
    }
  }
  if (best) return *best;
  throw SelectionError(SelectionError::Kind::kUnparseable, "selection reply names no tool: \"" + text::trim(reply.substr(0, 200)) + "\"");
}

/// One zero-shot selection pass over `candidates`.
inline std::string select_once(const Context& ctx, const std::string& instruction, const std::vector<std::string>& candidates,
                               std::vector<Transcript>* log = nullptr) {
  if (candidates.empty()) throw PreconditionError("select_once: empty candidate list");
  auto reply = ctx.ask(prompts::Stage::kSelect0Shot,
                       {{"candidate_list", prompts::format_candidate_list(ctx.registry, candidates)}, {"instruction", instruction}}, log);
  auto name = parse_tool_action(reply, candidates);
  if (std::find(candidates.begin(), candidates.end(), name) == candidates.end())
    throw SelectionError(SelectionError::Kind::kOutOfSet, "selected tool '" + name + "' is not a candidate");
  return name;
}

/// First pick over all candidates, second pick with the first removed.
inline std::pair<std::string, std::string> top_two(const Context& ctx, const std::string& instruction,
                                                   const std::vector<std::string>& candidates, std::vector<Transcript>* log = nullptr) {
  if (candidates.size() < 2) throw PreconditionError("top_two needs at least two candidates");
  auto first = select_once(ctx, instruction, candidates, log);
  std::vector<std::string> rest;
  for (const auto& c : candidates) {
    if (c != first) rest.push_back(c);
  }
  auto second = select_once(ctx, instruction, rest, log);
  return {std::move(first), std::move(second)};
}

/// Instruction-free contrastive question for a tool pair, served from the
/// cache when present.
inline std::string contrastive_question(const Context& ctx, const ToolSpec& a, const ToolSpec& b, VQCache* cache,
                                        std::vector<Transcript>* log = nullptr) {
  if (a.name == b.name) throw PreconditionError("contrastive_question needs two distinct tools");
  if (cache) {
    if (auto hit = cache->find(VQCacheKey::of(a, b))) return *hit;
  }
  auto question = text::trim(ctx.ask(prompts::Stage::kVqGen,
                                     {{"name1", a.name}, {"description1", a.description}, {"name2", b.name}, {"description2", b.description}},
                                     log));
  if (cache && !question.empty()) cache->insert(a, b, question);
  return question;
}

/// Question generation conditioned on the user instruction. Never cached.
inline std::string conditioned_question(const Context& ctx, const ToolSpec& a, const ToolSpec& b, const std::string& instruction,
                                        std::vector<Transcript>* log = nullptr) {
  return text::trim(ctx.ask(prompts::Stage::kVqGenConditioned,
                            {{"instruction", instruction},
                             {"name1", a.name},
                             {"description1", a.description},
                             {"name2", b.name},
                             {"description2", b.description}},
                            log));
}

/// Answer to a verification question; empty when the model returned nothing.
inline std::string answer_question(const Context& ctx, const std::string& question, const std::string& instruction,
                                   std::vector<Transcript>* log = nullptr) {
  if (text::trim_view(question).empty()) throw PreconditionError("answer_question: empty question");
  return text::trim(ctx.ask(prompts::Stage::kVqAnswer, {{"instruction", instruction}, {"question", question}}, log));
}

/// Fills a verification cache with a question for every unordered pair of
/// registry tools. Returns the number of newly generated questions.
inline std::size_t precompute_questions(const Context& ctx, VQCache& cache) {
  std::size_t generated = 0;
  const auto& tools = ctx.registry.tools();
  for (std::size_t i = 0; i < tools.size(); ++i) {
    for (std::size_t j = i + 1; j < tools.size(); ++j) {
      if (cache.find(VQCacheKey::of(tools[i], tools[j]))) continue;
      contrastive_question(ctx, tools[i], tools[j], &cache);
      ++generated;
    }
  }
  return generated;
}

struct SelectionOptions {
  bool verify = true;
  bool condition_on_instruction = false;
};

struct SelectionTrace {
  std::string instruction;
  CandidateSet candidates;
  std::string top1;
  std::string top2;  // empty when no second pass ran
  std::string question;
  std::string answer;
  std::string final_choice;
  std::vector<Transcript> transcripts;
  std::vector<std::string> flags;  // downgrades and skipped steps

  bool flagged() const { return !flags.empty(); }
};

/// Select, and optionally verify the choice between the top two picks with a
/// contrastive question whose answer is shown to a final two-way selection.
/// Failures after the first pick fall back to it and are flagged.
inline SelectionTrace verified_select(const Context& ctx, const std::string& instruction, const CandidateSet& candidates,
                                      VQCache* cache, const SelectionOptions& options = {}) {
  if (candidates.tools.empty()) throw PreconditionError("verified_select: empty candidate set");
  SelectionTrace trace;
  trace.instruction = instruction;
  trace.candidates = candidates;
  trace.top1 = select_once(ctx, instruction, candidates.tools, &trace.transcripts);
  trace.final_choice = trace.top1;
  if (!options.verify) return trace;
  if (candidates.tools.size() < 2) {
    trace.flags.push_back("verification skipped: single candidate");
    return trace;
  }

  try {
    std::vector<std::string> rest;
    for (const auto& c : candidates.tools) {
      if (c != trace.top1) rest.push_back(c);
    }
    trace.top2 = select_once(ctx, instruction, rest, &trace.transcripts);

    // The two finalists keep their relative candidate order, for the question
    // as well as the final pick.
    std::vector<std::string> finalists;
    for (const auto& c : candidates.tools) {
      if (c == trace.top1 || c == trace.top2) finalists.push_back(c);
    }
    const auto& first = ctx.registry.at(finalists[0]);
    const auto& second = ctx.registry.at(finalists[1]);
    trace.question = options.condition_on_instruction ? conditioned_question(ctx, first, second, instruction, &trace.transcripts)
                                                      : contrastive_question(ctx, first, second, cache, &trace.transcripts);
    if (trace.question.empty()) {
      trace.flags.push_back("verification skipped: empty question");
      return trace;
    }
    trace.answer = answer_question(ctx, trace.question, instruction, &trace.transcripts);
    if (trace.answer.empty()) {
      trace.flags.push_back("verification skipped: empty answer");
      return trace;
    }

    auto reply = ctx.ask(prompts::Stage::kSelectFinal,
                         {{"candidate_list", prompts::format_candidate_list(ctx.registry, finalists)},
                          {"instruction", instruction},
                          {"answer", trace.answer}},
                         &trace.transcripts);
    auto choice = parse_tool_action(reply, finalists);
    if (choice != trace.top1 && choice != trace.top2)
      throw SelectionError(SelectionError::Kind::kOutOfSet, "final selection '" + choice + "' is not a finalist");
    trace.final_choice = choice;
  } catch (const Error& e) {
    trace.final_choice = trace.top1;
    trace.flags.push_back(std::string("verification failed, kept first pick: ") + e.what());
  }
  return trace;
}

}  // namespace toolverify
