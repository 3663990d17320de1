#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolverify/error.hpp"
#include "toolverify/rng.hpp"
#include "toolverify/text.hpp"

namespace toolverify {

enum class ParamKind { kString, kNumber, kEnum, kBoolean };

inline std::string_view to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::kString: return "string";
    case ParamKind::kNumber: return "number";
    case ParamKind::kEnum: return "enum";
    case ParamKind::kBoolean: return "boolean";
  }
  return "string";
}

inline ParamKind parse_param_kind(std::string_view s) {
  if (s == "string") return ParamKind::kString;
  if (s == "number") return ParamKind::kNumber;
  if (s == "enum") return ParamKind::kEnum;
  if (s == "boolean") return ParamKind::kBoolean;
  throw RegistryError("unknown parameter kind '" + std::string(s) + "'");
}

struct ParamSpec {
  std::string name;
  std::string description;
  ParamKind kind = ParamKind::kString;
  bool required = false;
  std::string none_token = "none";
  std::vector<std::string> values;  // enum kind only
};

/// Parameter name -> value text. Absent parameters carry their none_token.
using ParamValues = std::map<std::string, std::string>;

struct Demonstration {
  std::string instruction;
  ParamValues assignments;
  std::string rendered_call;
};

struct ToolSpec {
  std::string name;
  std::string description;
  std::vector<ParamSpec> params;
  std::vector<Demonstration> demonstrations;
  std::string call_template;  // placeholders are {{param}}; anything else is literal
  std::vector<std::string> related;
  bool synthetic = false;

  const ParamSpec* find_param(std::string_view param) const {
    for (const auto& p : params) {
      if (p.name == param) return &p;
    }
    return nullptr;
  }
};

namespace detail {

inline bool is_placeholder_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

/// Calls on_literal / on_placeholder for each piece of a {{name}} template.
template <typename Literal, typename Placeholder>
void scan_template(std::string_view tmpl, Literal&& on_literal, Placeholder&& on_placeholder) {
  std::size_t i = 0;
  while (i < tmpl.size()) {
    auto open = tmpl.find("{{", i);
    if (open == std::string_view::npos) {
      on_literal(tmpl.substr(i));
      return;
    }
    auto close = tmpl.find("}}", open + 2);
    bool valid = close != std::string_view::npos && close > open + 2;
    if (valid) {
      for (std::size_t k = open + 2; k < close; ++k) valid = valid && is_placeholder_char(tmpl[k]);
    }
    if (!valid) {
      on_literal(tmpl.substr(i, open + 2 - i));
      i = open + 2;
      continue;
    }
    on_literal(tmpl.substr(i, open - i));
    on_placeholder(tmpl.substr(open + 2, close - open - 2));
    i = close + 2;
  }
}

}  // namespace detail

inline std::vector<std::string> template_placeholders(std::string_view tmpl) {
  std::vector<std::string> names;
  detail::scan_template(tmpl, [](std::string_view) {}, [&](std::string_view p) { names.emplace_back(p); });
  return names;
}

/// Instantiates a call template. Values are percent-encoded; a parameter
/// without a value renders as its none_token.
inline std::string render_call_template(const ToolSpec& tool, const ParamValues& values) {
  std::string out;
  detail::scan_template(
      tool.call_template, [&](std::string_view lit) { out += lit; },
      [&](std::string_view name) {
        const ParamSpec* spec = tool.find_param(name);
        if (!spec) throw RegistryError("tool " + tool.name + ": template placeholder '" + std::string(name) + "' is not a parameter");
        auto it = values.find(spec->name);
        out += text::percent_encode(it == values.end() ? spec->none_token : it->second);
      });
  return out;
}

struct CandidateSet {
  std::vector<std::string> tools;
  std::optional<std::string> ground_truth;
  bool hard = false;

  bool contains(std::string_view name) const { return std::find(tools.begin(), tools.end(), name) != tools.end(); }
};

enum class CandidateMode { kRandomK, kRelatedOnly };

/// Immutable catalog of tools, indexed by name.
class Registry {
 public:
  Registry() = default;

  explicit Registry(std::vector<ToolSpec> tools) : tools_(std::move(tools)) {
    rebuild_index();
    validate();
  }

  std::size_t size() const { return tools_.size(); }
  bool empty() const { return tools_.empty(); }
  const std::vector<ToolSpec>& tools() const { return tools_; }

  const ToolSpec* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &tools_[it->second];
  }

  const ToolSpec& at(std::string_view name) const {
    if (const auto* t = find(name)) return *t;
    throw PreconditionError("unknown tool '" + std::string(name) + "'");
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& t : tools_) out.push_back(t.name);
    return out;
  }

  /// Ground truth plus either k random other tools (random_k) or its related
  /// tools (related_only, hard). Membership depends only on the tool names,
  /// never on registry order; the order is shuffled by `seed`.
  CandidateSet build_candidate_set(const std::string& ground_truth, CandidateMode mode, std::size_t k,
                                   std::uint64_t seed) const {
    const ToolSpec& gt = at(ground_truth);
    Rng rng(seed);
    CandidateSet set;
    set.ground_truth = ground_truth;
    if (mode == CandidateMode::kRelatedOnly) {
      if (gt.related.empty()) throw PreconditionError("tool '" + ground_truth + "' has no related tools");
      set.hard = true;
      set.tools.push_back(ground_truth);
      std::vector<std::string> related = gt.related;
      std::sort(related.begin(), related.end());
      for (auto& r : related) set.tools.push_back(std::move(r));
    } else {
      std::vector<std::string> others;
      for (const auto& t : tools_) {
        if (t.name != ground_truth) others.push_back(t.name);
      }
      std::sort(others.begin(), others.end());
      // Partial Fisher-Yates: the first `take` slots become the sample.
      const std::size_t take = std::min(k, others.size());
      for (std::size_t i = 0; i < take; ++i) {
        auto j = i + static_cast<std::size_t>(rng.below(others.size() - i));
        std::swap(others[i], others[j]);
      }
      set.tools.push_back(ground_truth);
      set.tools.insert(set.tools.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(take));
    }
    rng.shuffle(set.tools);
    return set;
  }

  nlohmann::json to_json() const;
  static Registry from_json(const nlohmann::json& doc);

 private:
  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < tools_.size(); ++i) {
      if (tools_[i].name.empty()) throw RegistryError("tool #" + std::to_string(i) + " has an empty name");
      if (!index_.emplace(tools_[i].name, i).second) throw RegistryError("duplicate tool name '" + tools_[i].name + "'");
    }
  }

  void validate() const {
    for (const auto& tool : tools_) {
      std::set<std::string> declared;
      for (const auto& p : tool.params) {
        if (p.name.empty()) throw RegistryError("tool " + tool.name + ": parameter with empty name");
        if (!declared.insert(p.name).second) throw RegistryError("tool " + tool.name + ": duplicate parameter '" + p.name + "'");
        if (p.kind == ParamKind::kEnum && p.values.empty())
          throw RegistryError("tool " + tool.name + ": enum parameter '" + p.name + "' has no values");
      }
      for (const auto& ph : template_placeholders(tool.call_template)) {
        if (!declared.count(ph))
          throw RegistryError("tool " + tool.name + ": call template placeholder '" + ph + "' names no parameter");
      }
      for (std::size_t d = 0; d < tool.demonstrations.size(); ++d) {
        const auto& demo = tool.demonstrations[d];
        const std::string where = "tool " + tool.name + ": demonstration #" + std::to_string(d + 1);
        for (const auto& [param, value] : demo.assignments) {
          if (!declared.count(param)) throw RegistryError(where + " assigns undeclared parameter '" + param + "'");
        }
        auto expected = render_call_template(tool, demo.assignments);
        if (expected != demo.rendered_call)
          throw RegistryError(where + " rendered_call does not match the call template (expected \"" + expected + "\")");
      }
      for (const auto& r : tool.related) {
        if (r == tool.name) throw RegistryError("tool " + tool.name + " lists itself as related");
        if (!index_.count(r)) throw RegistryError("tool " + tool.name + ": related tool '" + r + "' is not in the registry");
      }
    }
  }

  std::vector<ToolSpec> tools_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline nlohmann::json Registry::to_json() const {
  nlohmann::json tools = nlohmann::json::array();
  for (const auto& t : tools_) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : t.params) {
      nlohmann::json jp = {{"name", p.name},
                           {"description", p.description},
                           {"kind", std::string(to_string(p.kind))},
                           {"required", p.required},
                           {"none_token", p.none_token}};
      if (!p.values.empty()) jp["values"] = p.values;
      params.push_back(std::move(jp));
    }
    nlohmann::json demos = nlohmann::json::array();
    for (const auto& d : t.demonstrations) {
      demos.push_back({{"instruction", d.instruction}, {"assignments", d.assignments}, {"rendered_call", d.rendered_call}});
    }
    tools.push_back({{"name", t.name},
                     {"description", t.description},
                     {"params", std::move(params)},
                     {"demonstrations", std::move(demos)},
                     {"call_template", t.call_template},
                     {"related", t.related},
                     {"synthetic", t.synthetic}});
  }
  return {{"tools", std::move(tools)}};
}

inline Registry Registry::from_json(const nlohmann::json& doc) {
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("tools")) throw RegistryError("registry document has no \"tools\" array");
    list = &doc.at("tools");
  }
  if (!list->is_array()) throw RegistryError("registry \"tools\" is not an array");
  std::vector<ToolSpec> tools;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const auto& jt = (*list)[i];
    try {
      ToolSpec t;
      t.name = jt.at("name").get<std::string>();
      t.description = jt.value("description", std::string{});
      for (const auto& jp : jt.value("params", nlohmann::json::array())) {
        ParamSpec p;
        p.name = jp.at("name").get<std::string>();
        p.description = jp.value("description", std::string{});
        p.kind = parse_param_kind(jp.value("kind", std::string("string")));
        p.required = jp.value("required", false);
        p.none_token = jp.value("none_token", std::string("none"));
        p.values = jp.value("values", std::vector<std::string>{});
        t.params.push_back(std::move(p));
      }
      for (const auto& jd : jt.value("demonstrations", nlohmann::json::array())) {
        Demonstration d;
        d.instruction = jd.at("instruction").get<std::string>();
        d.assignments = jd.value("assignments", ParamValues{});
        d.rendered_call = jd.at("rendered_call").get<std::string>();
        t.demonstrations.push_back(std::move(d));
      }
      t.call_template = jt.value("call_template", std::string{});
      t.related = jt.value("related", std::vector<std::string>{});
      t.synthetic = jt.value("synthetic", false);
      tools.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw RegistryError("tool #" + std::to_string(i) + ": " + e.what());
    }
  }
  return Registry(std::move(tools));
}

/// Loads and validates a registry file. Fails as a whole on any violation.
inline Registry load_registry(const std::string& path) {
  const auto content = text::read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), e.byte);
  }
  try {
    return Registry::from_json(doc);
  } catch (const RegistryError& e) {
    throw RegistryError(path + ": " + e.what());
  }
}

inline void save_registry(const Registry& registry, const std::string& path) {
  text::write_file(path, registry.to_json().dump(2) + "\n");
}

}  // namespace toolverify
