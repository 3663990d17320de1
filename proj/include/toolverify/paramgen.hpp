#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolverify/call.hpp"
#include "toolverify/error.hpp"
#include "toolverify/prompts.hpp"
#include "toolverify/registry.hpp"
#include "toolverify/rng.hpp"
#include "toolverify/selector.hpp"
#include "toolverify/text.hpp"

namespace toolverify {

enum class Verdict { kA, kB, kNone, kAgree };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kA: return "A";
    case Verdict::kB: return "B";
    case Verdict::kNone: return "NONE";
    case Verdict::kAgree: return "AGREE";
  }
  return "?";
}

/// Comparison form of a parameter value: trimmed, none_token case-folded,
/// decimals by magnitude.
inline std::string normalize_value(const ParamSpec& spec, std::string_view value) {
  auto v = text::trim_view(value);
  if (text::iequals(v, spec.none_token)) return "\x01none";
  return value_key(v);
}

inline bool same_value(const ParamSpec& spec, std::string_view a, std::string_view b) {
  return normalize_value(spec, a) == normalize_value(spec, b);
}

struct GeneratedParams {
  ParamValues values;                 // one entry per declared parameter
  std::vector<std::string> missing;   // declared parameters absent from the reply
  std::vector<Transcript> transcripts;
};

/// Reads "name: value" (or "name = value") lines for the tool's declared
/// parameters, stopping at the next INS:/API: line. Order-independent.
inline GeneratedParams parse_param_reply(const ToolSpec& tool, std::string_view reply) {
  GeneratedParams out;
  std::size_t recognized = 0;
  for (const auto& raw : text::split_lines(reply)) {
    auto line = text::trim_view(raw);
    if (line.empty()) {
      if (recognized) break;
      continue;
    }
    if (line.rfind("INS:", 0) == 0 || line.rfind("API:", 0) == 0) break;
    auto sep = line.find_first_of(":=");
    if (sep == std::string_view::npos) continue;
    auto key = text::trim_view(line.substr(0, sep));
    for (const auto& p : tool.params) {
      if (!text::iequals(key, p.name) || out.values.count(p.name)) continue;
      auto value = text::strip_quotes(text::trim(line.substr(sep + 1)));
      out.values[p.name] = value.empty() ? p.none_token : value;
      ++recognized;
      break;
    }
  }
  if (!tool.params.empty() && recognized == 0)
    throw GenerationError("parameter reply for " + tool.name + " names none of its parameters");
  for (const auto& p : tool.params) {
    if (!out.values.count(p.name)) {
      out.values[p.name] = p.none_token;
      out.missing.push_back(p.name);
    }
  }
  return out;
}

/// Few-shot parameter generation from the tool's own demonstrations.
/// `chat` selects the chat-framed prompt used for the second opinion.
inline GeneratedParams generate_parameters(const Context& ctx, const std::string& instruction, const ToolSpec& tool,
                                           std::size_t n_shots = 3, bool chat = false) {
  if (tool.params.empty()) return {};
  std::vector<Transcript> log;
  auto reply = ctx.ask(chat ? prompts::Stage::kParamGenChat : prompts::Stage::kParamGen,
                       {{"demonstrations", prompts::format_demonstrations(tool, n_shots, false)},
                        {"instruction", instruction},
                        {"name", tool.name}},
                       &log);
  auto out = parse_param_reply(tool, reply);
  out.transcripts = std::move(log);
  return out;
}

/// Second, independent set of predictions from the alternate (chat) backend.
inline GeneratedParams second_opinion(const Context& ctx, const std::string& instruction, const ToolSpec& tool,
                                      std::size_t n_shots = 3) {
  return generate_parameters(ctx, instruction, tool, n_shots, true);
}

/// Reads the verdict from a verification reply: "[a]" / "[b]" (or the
/// bracketed option text), else "None". Anything else is a parse error.
inline Verdict parse_verdict(const ParamSpec& spec, std::string_view reply, std::string_view option_a, std::string_view option_b) {
  std::size_t pos = 0;
  while ((pos = reply.find('[', pos)) != std::string_view::npos) {
    auto close = reply.find(']', pos + 1);
    if (close == std::string_view::npos) break;
    auto inner = text::trim_view(reply.substr(pos + 1, close - pos - 1));
    if (text::iequals(inner, "a")) return Verdict::kA;
    if (text::iequals(inner, "b")) return Verdict::kB;
    if (text::iequals(inner, "none")) return Verdict::kNone;
    if (!inner.empty() && same_value(spec, inner, option_a)) return Verdict::kA;
    if (!inner.empty() && same_value(spec, inner, option_b)) return Verdict::kB;
    pos = close + 1;
  }
  auto trimmed = text::to_lower(text::trim_view(reply));
  while (!trimmed.empty() && (trimmed.back() == '.' || trimmed.back() == '"')) trimmed.pop_back();
  while (!trimmed.empty() && trimmed.front() == '"') trimmed.erase(0, 1);
  if (trimmed == "a") return Verdict::kA;
  if (trimmed == "b") return Verdict::kB;
  for (std::size_t at = trimmed.find("none"); at != std::string::npos; at = trimmed.find("none", at + 1)) {
    bool left = at == 0 || !std::isalnum(static_cast<unsigned char>(trimmed[at - 1]));
    bool right = at + 4 >= trimmed.size() || !std::isalnum(static_cast<unsigned char>(trimmed[at + 4]));
    if (left && right) return Verdict::kNone;
  }
  throw VerificationParseError("unrecognized verification reply for '" + spec.name + "': \"" + text::trim(reply.substr(0, 200)) + "\"");
}

struct VerifyOptions {
  /// Show the two predictions in a seeded random order instead of primary-first.
  bool randomize_order = false;
  std::uint64_t seed = 0;
};

/// Multiple-choice verification between two predictions for one parameter.
/// Equal predictions return kAgree without contacting the backend.
inline Verdict verify_parameter(const Context& ctx, const std::string& instruction, const ParamSpec& spec, const std::string& a,
                                const std::string& b, const VerifyOptions& options = {}, std::vector<Transcript>* log = nullptr) {
  if (same_value(spec, a, b)) return Verdict::kAgree;
  bool swapped = false;
  if (options.randomize_order) swapped = Rng(mix_seed(options.seed, text::fnv1a64(spec.name))).below(2) == 1;
  const auto& first = swapped ? b : a;
  const auto& second = swapped ? a : b;
  auto reply = ctx.ask(prompts::Stage::kParamVerify,
                       {{"instruction", instruction},
                        {"parameter_definition", spec.description},
                        {"parameter_name", spec.name},
                        {"prediction_1", first},
                        {"prediction_2", second}},
                       log);
  auto verdict = parse_verdict(spec, reply, first, second);
  if (swapped && verdict == Verdict::kA) return Verdict::kB;
  if (swapped && verdict == Verdict::kB) return Verdict::kA;
  return verdict;
}

struct ParamPrediction {
  std::string param;
  std::string primary_value;
  std::string secondary_value;
  Verdict verdict = Verdict::kAgree;
  std::string final_value;
  std::vector<std::string> flags;
};

struct VerifiedParamSet {
  std::string tool;
  std::vector<ParamPrediction> predictions;  // declared parameter order
  std::vector<Transcript> transcripts;

  ParamValues final_values() const {
    ParamValues out;
    for (const auto& p : predictions) out[p.param] = p.final_value;
    return out;
  }

  bool flagged() const {
    for (const auto& p : predictions) {
      if (!p.flags.empty()) return true;
    }
    return false;
  }
};

/// Resolves every parameter: agreement keeps the shared value, otherwise the
/// verifier picks a, b or none. A reply that cannot be read keeps the primary
/// value and is flagged; one parameter never aborts the set.
inline VerifiedParamSet verify_all(const Context& ctx, const std::string& instruction, const ToolSpec& tool, const ParamValues& primary,
                                   const ParamValues& secondary, const VerifyOptions& options = {}) {
  VerifiedParamSet out;
  out.tool = tool.name;
  for (const auto& spec : tool.params) {
    auto pa = primary.find(spec.name);
    auto pb = secondary.find(spec.name);
    if (pa == primary.end() || pb == secondary.end())
      throw PreconditionError("verify_all: parameter '" + spec.name + "' missing from a prediction set");
    ParamPrediction pred{spec.name, pa->second, pb->second, Verdict::kAgree, {}, {}};
    try {
      pred.verdict = verify_parameter(ctx, instruction, spec, pred.primary_value, pred.secondary_value, options, &out.transcripts);
    } catch (const VerificationParseError& e) {
      pred.verdict = Verdict::kA;
      pred.flags.push_back(std::string("verification unreadable, kept primary: ") + e.what());
    }
    switch (pred.verdict) {
      case Verdict::kA:
      case Verdict::kAgree: pred.final_value = pred.primary_value; break;
      case Verdict::kB: pred.final_value = pred.secondary_value; break;
      case Verdict::kNone: pred.final_value = spec.none_token; break;
    }
    if (spec.required && same_value(spec, pred.final_value, spec.none_token)) pred.flags.push_back("required-missing");
    out.predictions.push_back(std::move(pred));
  }
  return out;
}

/// Parameter set taken straight from one prediction, for runs without verification.
inline VerifiedParamSet unverified(const ToolSpec& tool, const ParamValues& primary) {
  VerifiedParamSet out;
  out.tool = tool.name;
  for (const auto& spec : tool.params) {
    auto it = primary.find(spec.name);
    auto v = it == primary.end() ? spec.none_token : it->second;
    out.predictions.push_back({spec.name, v, v, Verdict::kAgree, v, {}});
  }
  return out;
}

enum class ConstructionMode { kTemplate, kModel };

struct ConstructedCall {
  std::string call;
  ConstructionMode mode_used = ConstructionMode::kTemplate;
  std::vector<std::string> flags;
  std::vector<Transcript> transcripts;
};

/// Builds the final call string. Template mode instantiates the tool's call
/// template; model mode asks the model and keeps its answer only when it is
/// canonically equal to the template rendering.
inline ConstructedCall construct_call(const Context& ctx, const ToolSpec& tool, const VerifiedParamSet& params, ConstructionMode mode,
                                      const std::string& instruction = {}, std::size_t n_shots = 3) {
  const auto values = params.final_values();
  for (const auto& spec : tool.params) {
    if (!values.count(spec.name)) throw PreconditionError("construct_call: no value for '" + spec.name + "'");
  }
  ConstructedCall out;
  std::optional<std::string> templated;
  if (!tool.call_template.empty()) templated = render_call_template(tool, values);

  if (mode == ConstructionMode::kTemplate) {
    if (!templated) throw ConstructionError("tool " + tool.name + " has no call template");
    out.call = *templated;
    return out;
  }

  auto reply = ctx.ask(prompts::Stage::kCallConstruct,
                       {{"demonstrations", prompts::format_demonstrations(tool, n_shots, true)},
                        {"instruction", instruction},
                        {"param_str", prompts::format_param_lines(tool, values)}},
                       &out.transcripts);
  std::string candidate;
  for (const auto& line : text::split_lines(reply)) {
    auto t = text::trim(line);
    if (t.rfind("API:", 0) == 0) t = text::trim(t.substr(4));
    if (!t.empty()) {
      candidate = t;
      break;
    }
  }
  std::string problem;
  try {
    auto model_call = parse_call(candidate);
    if (!templated) {
      out.call = candidate;
      out.mode_used = ConstructionMode::kModel;
      return out;
    }
    if (calls_equivalent(model_call, parse_call(*templated))) {
      out.call = candidate;
      out.mode_used = ConstructionMode::kModel;
      return out;
    }
    problem = "model call disagrees with the verified parameters";
  } catch (const ParseError& e) {
    problem = std::string("model call unparseable: ") + e.what();
  }
  if (!templated) throw ConstructionError("tool " + tool.name + ": " + problem + " and no call template to fall back on");
  out.call = *templated;
  out.mode_used = ConstructionMode::kTemplate;
  out.flags.push_back(problem + "; used template");
  return out;
}

}  // namespace toolverify
