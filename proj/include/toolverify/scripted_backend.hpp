#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolverify/backend.hpp"
#include "toolverify/text.hpp"

namespace toolverify {

/// One canned reply. A rule applies when the prompt contains `match` (or the
/// ECMAScript pattern matches, when `regex` is set) and every optional filter
/// holds. For regex rules the response may reference capture groups as $1..$9.
struct ScriptRule {
  std::string match;
  std::string response;
  bool regex = false;
  bool once = false;
  std::optional<StageTag> stage;
  std::optional<std::int64_t> seed;
  std::string excludes;  // the prompt must not contain this text

  static ScriptRule from_json(const nlohmann::json& j) {
    ScriptRule rule;
    rule.match = j.at("match").get<std::string>();
    rule.response = j.at("response").get<std::string>();
    rule.regex = j.value("regex", false);
    rule.once = j.value("once", false);
    if (j.contains("stage") && !j.at("stage").is_null()) {
      auto name = j.at("stage").get<std::string>();
      rule.stage = parse_stage_tag(name);
      if (!rule.stage) throw PreconditionError("unknown stage tag in script rule: " + name);
    }
    if (j.contains("seed") && !j.at("seed").is_null()) rule.seed = j.at("seed").get<std::int64_t>();
    rule.excludes = j.value("excludes", std::string{});
    return rule;
  }
};

/// Deterministic stand-in for a generation endpoint. Rules are tried in
/// order; the first applicable one answers. Every request is recorded.
class ScriptedBackend : public Backend {
 public:
  struct Call {
    StageTag tag;
    std::string prompt;
    std::optional<std::int64_t> seed;
    std::string response;
  };

  explicit ScriptedBackend(std::vector<ScriptRule> rules = {}, std::string id = "scripted")
      : id_(std::move(id)) {
    for (auto& r : rules) add(std::move(r));
  }

  /// Loads rules from a line-delimited JSON file: one {match, response, once, ...} per line.
  static std::shared_ptr<ScriptedBackend> from_file(const std::string& path, std::string id = "scripted") {
    auto backend = std::make_shared<ScriptedBackend>(std::vector<ScriptRule>{}, std::move(id));
    backend->load(path);
    return backend;
  }

  void load(const std::string& path) {
    auto lines = text::split_lines(text::read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto line = text::trim(lines[i]);
      if (line.empty() || line.front() == '#') continue;
      try {
        add(ScriptRule::from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ":" + std::to_string(i + 1) + ": bad script rule: " + e.what(), i + 1);
      }
    }
  }

  void add(ScriptRule rule) {
    std::lock_guard lock(mutex_);
    Entry entry{std::move(rule), std::nullopt, false};
    if (entry.rule.regex) entry.pattern.emplace(entry.rule.match, std::regex::ECMAScript);
    entries_.push_back(std::move(entry));
  }

  GenerationResponse generate(const GenerationRequest& request) override {
    request.validate();
    std::lock_guard lock(mutex_);
    for (auto& entry : entries_) {
      if (entry.consumed) continue;
      auto reply = try_rule(entry, request);
      if (!reply) continue;
      if (entry.rule.once) entry.consumed = true;
      calls_.push_back({request.tag, request.prompt, request.sampling.seed, *reply});
      return {*reply, id_, false};
    }
    throw UnmatchedScriptError(request.prompt);
  }

  std::string id() const override { return id_; }

  std::vector<Call> calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

  std::size_t call_count() const {
    std::lock_guard lock(mutex_);
    return calls_.size();
  }

  std::size_t call_count(StageTag tag) const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& c : calls_) n += c.tag == tag;
    return n;
  }

  std::vector<StageTag> tag_sequence() const {
    std::lock_guard lock(mutex_);
    std::vector<StageTag> tags;
    for (const auto& c : calls_) tags.push_back(c.tag);
    return tags;
  }

  void clear_calls() {
    std::lock_guard lock(mutex_);
    calls_.clear();
  }

 private:
  struct Entry {
    ScriptRule rule;
    std::optional<std::regex> pattern;
    bool consumed;
  };

  static std::optional<std::string> try_rule(const Entry& entry, const GenerationRequest& request) {
    const auto& rule = entry.rule;
    if (rule.stage && *rule.stage != request.tag) return std::nullopt;
    if (rule.seed && rule.seed != request.sampling.seed) return std::nullopt;
    if (!rule.excludes.empty() && request.prompt.find(rule.excludes) != std::string::npos) return std::nullopt;
    if (entry.pattern) {
      std::smatch m;
      if (!std::regex_search(request.prompt, m, *entry.pattern)) return std::nullopt;
      return m.format(rule.response, std::regex_constants::format_default);
    }
    if (request.prompt.find(rule.match) == std::string::npos) return std::nullopt;
    return rule.response;
  }

  std::string id_;
  mutable std::mutex mutex_;
  std::vector<Entry> entries_;
  std::vector<Call> calls_;
};

}  // namespace toolverify
