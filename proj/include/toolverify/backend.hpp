#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "toolverify/error.hpp"

namespace toolverify {

/// Pipeline stage that issued a generation request. Each stage can be routed
/// to its own backend.
enum class StageTag {
  kToolGen,
  kRelatedGen,
  kInstructionGen,
  kReasoningGen,
  kSelect,
  kVqGen,
  kVqAnswer,
  kParamGen,
  kParamAlt,
  kParamVerify,
  kCallConstruct,
};

inline constexpr std::array<StageTag, 11> kAllStageTags = {
    StageTag::kToolGen,   StageTag::kRelatedGen, StageTag::kInstructionGen, StageTag::kReasoningGen,
    StageTag::kSelect,    StageTag::kVqGen,      StageTag::kVqAnswer,       StageTag::kParamGen,
    StageTag::kParamAlt,  StageTag::kParamVerify, StageTag::kCallConstruct,
};

inline std::string_view to_string(StageTag tag) {
  switch (tag) {
    case StageTag::kToolGen: return "tool-gen";
    case StageTag::kRelatedGen: return "related-gen";
    case StageTag::kInstructionGen: return "instruction-gen";
    case StageTag::kReasoningGen: return "reasoning-gen";
    case StageTag::kSelect: return "select";
    case StageTag::kVqGen: return "vq-gen";
    case StageTag::kVqAnswer: return "vq-answer";
    case StageTag::kParamGen: return "param-gen";
    case StageTag::kParamAlt: return "param-alt";
    case StageTag::kParamVerify: return "param-verify";
    case StageTag::kCallConstruct: return "call-construct";
  }
  return "unknown";
}

inline std::optional<StageTag> parse_stage_tag(std::string_view name) {
  for (auto tag : kAllStageTags) {
    if (to_string(tag) == name) return tag;
  }
  return std::nullopt;
}

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 0.9;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;

  void validate() const {
    if (!(temperature >= 0.0)) throw PreconditionError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw PreconditionError("top_p must lie in (0, 1]");
    if (max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
  }
};

struct GenerationRequest {
  std::string prompt;
  SamplingParams sampling;
  StageTag tag = StageTag::kSelect;

  void validate() const {
    if (prompt.empty()) throw PreconditionError("generation prompt is empty");
    sampling.validate();
  }
};

struct GenerationResponse {
  std::string text;
  std::string backend_id;
  // Set when the backend stopped early (length limit); only then may text be empty.
  bool truncated = false;
};

/// A text-generation model. Implementations must be safe to call from
/// several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual GenerationResponse generate(const GenerationRequest& request) = 0;

  virtual std::string id() const = 0;
};

/// Routes requests to a per-stage backend, falling back to a default one.
/// Every pipeline stage talks to models through this type.
class Backends {
 public:
  Backends() = default;

  explicit Backends(std::shared_ptr<Backend> fallback, SamplingParams sampling = {})
      : default_(std::move(fallback)), sampling_(sampling) {}

  void route(StageTag tag, std::shared_ptr<Backend> backend) { per_stage_[tag] = std::move(backend); }

  void set_default(std::shared_ptr<Backend> backend) { default_ = std::move(backend); }

  void set_sampling(const SamplingParams& sampling) { sampling_ = sampling; }

  const SamplingParams& sampling() const { return sampling_; }

  Backend& backend_for(StageTag tag) const {
    if (auto it = per_stage_.find(tag); it != per_stage_.end()) return *it->second;
    if (!default_) throw PreconditionError("no backend configured for stage " + std::string(to_string(tag)));
    return *default_;
  }

  GenerationResponse generate(StageTag tag, std::string prompt, std::optional<std::int64_t> seed = {}) const {
    GenerationRequest request{std::move(prompt), sampling_, tag};
    if (seed) request.sampling.seed = seed;
    request.validate();
    return backend_for(tag).generate(request);
  }

 private:
  std::shared_ptr<Backend> default_;
  std::map<StageTag, std::shared_ptr<Backend>> per_stage_;
  SamplingParams sampling_;
};

}  // namespace toolverify
