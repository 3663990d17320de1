#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolverify/backend.hpp"
#include "toolverify/error.hpp"
#include "toolverify/registry.hpp"
#include "toolverify/text.hpp"

namespace toolverify::prompts {

enum class Stage {
  kToolGen,
  kToolDescribe,
  kRelatedGen,
  kRelatedGenNext,
  kInstructionGen,
  kReasoningGen,
  kSelect0Shot,
  kSelectFinal,
  kVqGen,
  kVqGenConditioned,
  kVqAnswer,
  kParamGen,
  kParamGenChat,
  kParamVerify,
  kCallConstruct,
};

inline constexpr std::array<Stage, 15> kAllStages = {
    Stage::kToolGen,      Stage::kToolDescribe, Stage::kRelatedGen,        Stage::kRelatedGenNext,
    Stage::kInstructionGen, Stage::kReasoningGen, Stage::kSelect0Shot,     Stage::kSelectFinal,
    Stage::kVqGen,        Stage::kVqGenConditioned, Stage::kVqAnswer,      Stage::kParamGen,
    Stage::kParamGenChat, Stage::kParamVerify,  Stage::kCallConstruct,
};

inline std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kToolGen: return "tool-gen";
    case Stage::kToolDescribe: return "tool-describe";
    case Stage::kRelatedGen: return "related-gen";
    case Stage::kRelatedGenNext: return "related-gen-next";
    case Stage::kInstructionGen: return "instruction-gen";
    case Stage::kReasoningGen: return "reasoning-gen";
    case Stage::kSelect0Shot: return "select-0shot";
    case Stage::kSelectFinal: return "select-final";
    case Stage::kVqGen: return "vq-gen";
    case Stage::kVqGenConditioned: return "vq-gen-conditioned";
    case Stage::kVqAnswer: return "vq-answer";
    case Stage::kParamGen: return "param-gen";
    case Stage::kParamGenChat: return "param-gen-chat";
    case Stage::kParamVerify: return "param-verify";
    case Stage::kCallConstruct: return "call-construct";
  }
  return "unknown";
}

inline std::optional<Stage> parse_stage(std::string_view name) {
  for (auto s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

/// Backend stage tag a rendered prompt is sent under.
inline StageTag backend_tag(Stage stage) {
  switch (stage) {
    case Stage::kToolGen:
    case Stage::kToolDescribe: return StageTag::kToolGen;
    case Stage::kRelatedGen:
    case Stage::kRelatedGenNext: return StageTag::kRelatedGen;
    case Stage::kInstructionGen: return StageTag::kInstructionGen;
    case Stage::kReasoningGen: return StageTag::kReasoningGen;
    case Stage::kSelect0Shot:
    case Stage::kSelectFinal: return StageTag::kSelect;
    case Stage::kVqGen:
    case Stage::kVqGenConditioned: return StageTag::kVqGen;
    case Stage::kVqAnswer: return StageTag::kVqAnswer;
    case Stage::kParamGen: return StageTag::kParamGen;
    case Stage::kParamGenChat: return StageTag::kParamAlt;
    case Stage::kParamVerify: return StageTag::kParamVerify;
    case Stage::kCallConstruct: return StageTag::kCallConstruct;
  }
  return StageTag::kSelect;
}

inline constexpr std::string_view kChatPrefix = "[INST] <<SYS>>\nYou are a helpful assistant.\n<</SYS>>\n\n";
inline constexpr std::string_view kChatSuffix = "[/INST]";

struct PromptTemplate {
  Stage stage;
  std::string body;
  bool chat_wrapped = false;
};

namespace detail {

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline const char* builtin_body(Stage stage) {
  switch (stage) {
    case Stage::kToolGen:
      return "{tool_examples}\n\nName:";
    case Stage::kToolDescribe:
      return "{tool_examples}\n\nName: {name}\nDescription:";
    case Stage::kRelatedGen:
      return "Name1: Humidity\nName2: Humidity at timezone\nName3: Humidity Altitude Location date\n\n"
             "Name1: Book Review\nName2: Book Review By Date\nName3: Book Review By Day\n\n"
             "Name1: Car Rental\nName2: Car Rental with insurance\nName3: Car Rental with driver\n\n"
             "Name1: {name}\nName2:";
    case Stage::kRelatedGenNext:
      return "Name1: Humidity\nName2: Humidity at timezone\nName3: Humidity Altitude Location date\n\n"
             "Name1: Book Review\nName2: Book Review By Date\nName3: Book Review By Day\n\n"
             "Name1: Car Rental\nName2: Car Rental with insurance\nName3: Car Rental with driver\n\n"
             "Name1: {name}\nName2: {related1}\nName3:";
    case Stage::kInstructionGen:
      return "Tool: Humidity\nDescription: Computes humidity at a location on a date\n"
             "Instruction 1: What will the humidity be in Chicago next Tuesday?\n"
             "Instruction 2: How humid is it going to get in Singapore on the 14th of August?\n"
             "Instruction 3: Tell me the humidity level in Denver tomorrow.\n\n"
             "Tool: Trip Booking\nDescription: Makes a travel booking\n"
             "Instruction 1: Book me a trip from Boston to Lisbon leaving on May 3rd and coming back on May 10th.\n"
             "Instruction 2: I need to travel to Tokyo next month, can you make the booking for two people?\n"
             "Instruction 3: Please arrange a weekend getaway to Napa Valley for my anniversary.\n\n"
             "Tool: Pizza Order\nDescription: The Pizza Order tool orders a pizza with provided toppings and size.\n"
             "Instruction 1: Order a large pizza with mushrooms and olives.\n"
             "Instruction 2: Can you get me a small margherita pizza delivered?\n"
             "Instruction 3: I'd like a medium pepperoni pizza with extra cheese.\n\n"
             "Tool: {name}\nDescription: {description}\n{previous}Instruction {index}:";
    case Stage::kReasoningGen:
      return "Here are the list of available tools:\n{candidate_list}\n\n"
             "A user said, \"{instruction}\".\n\n"
             "To answer this, you found Tool \"{name}\" to be the most suitable than other tools. Why?";
    case Stage::kSelect0Shot:
      return "Here are the list of available tools:\n\n{candidate_list}\n\n"
             "A user said, \"{instruction}\"\n\n"
             "What tool to use for the above instruction? Respond with just the name of the tool";
    case Stage::kSelectFinal:
      return "Here are the list of available tools:\n\n{candidate_list}\n\n"
             "A user said, \"{instruction}\"\nHint: {answer}\n\n"
             "What tool to use for the above instruction? Respond with just the name of the tool";
    case Stage::kVqGen:
      return "I am confused to choose one of these two classes. Here are their names and descriptions:\n"
             "a. {name1} - {description1}\nb. {name2} - {description2}\n\n"
             "A contrastive question is a question that upon asking would resolve such confusion. "
             "Generate a contrastive question that I can ask myself whose answer would help me make the right choice.";
    case Stage::kVqGenConditioned:
      return "A user said, \"{instruction}\"\n\n"
             "I am confused to choose one of these two classes. Here are their names and descriptions:\n"
             "a. {name1} - {description1}\nb. {name2} - {description2}\n\n"
             "A contrastive question is a question that upon asking would resolve such confusion. "
             "Generate a contrastive question that I can ask myself whose answer would help me make the right choice.";
    case Stage::kVqAnswer:
      return "A user said, \"{instruction}\"\n\n{question}\n\n"
             "Answer the above question strictly based on what the user said.";
    case Stage::kParamGen:
      return "{demonstrations}\n\nINS: A user says, \"{instruction}\"\n";
    case Stage::kParamGenChat:
      return "Here are examples of user requests and the parameter values they imply for the tool \"{name}\":\n\n"
             "{demonstrations}\n\nINS: A user says, \"{instruction}\"\n"
             "Give the value of every parameter in the same format as the examples, one \"name: value\" per line, and nothing else.";
    case Stage::kParamVerify:
      return "A user said, \"{instruction}\"\n\n{parameter_definition}\n\n"
             "For the above user instruction, I am confused about choosing one of these two for \"{parameter_name}\".\n"
             "a. {prediction_1}\nb. {prediction_2}\n\n"
             "What is the answer? Answer the following question strictly based on what the user said above. "
             "If there is no mention, respond with \"None\". If there is, select the answer from the given options "
             "and respond with the chosen option only in square brackets []. ";
    case Stage::kCallConstruct:
      return "{demonstrations}\n\nINS: A user says, \"{instruction}\"\n{param_str}\nAPI:";
  }
  return "";
}

inline bool builtin_chat_wrapped(Stage stage) {
  switch (stage) {
    case Stage::kReasoningGen:
    case Stage::kSelect0Shot:
    case Stage::kSelectFinal:
    case Stage::kVqGen:
    case Stage::kVqGenConditioned:
    case Stage::kVqAnswer:
    case Stage::kParamGenChat:
    case Stage::kParamVerify: return true;
    default: return false;
  }
}

}  // namespace detail

using Bindings = std::map<std::string, std::string>;

/// Placeholders are {identifier}; braces around anything else are literal.
inline std::vector<std::string> placeholders(std::string_view body) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{' || i + 1 >= body.size() || !detail::is_ident_start(body[i + 1])) continue;
    std::size_t j = i + 1;
    while (j < body.size() && detail::is_ident_char(body[j])) ++j;
    if (j < body.size() && body[j] == '}') {
      names.emplace_back(body.substr(i + 1, j - i - 1));
      i = j;
    }
  }
  return names;
}

inline std::string render_template(const PromptTemplate& tmpl, const Bindings& bindings) {
  std::string out;
  if (tmpl.chat_wrapped) out += kChatPrefix;
  const std::string_view body = tmpl.body;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{' && i + 1 < body.size() && detail::is_ident_start(body[i + 1])) {
      std::size_t j = i + 1;
      while (j < body.size() && detail::is_ident_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}') {
        std::string name(body.substr(i + 1, j - i - 1));
        auto it = bindings.find(name);
        if (it == bindings.end())
          throw PromptError("prompt " + std::string(to_string(tmpl.stage)) + ": unbound placeholder {" + name + "}");
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out += body[i++];
  }
  if (tmpl.chat_wrapped) out += kChatSuffix;
  return out;
}

/// Template set keyed by stage. Starts from the built-in bodies; text assets
/// with front-matter can override individual stages.
class PromptLibrary {
 public:
  static const PromptLibrary& builtin() {
    static const PromptLibrary lib = [] {
      PromptLibrary l;
      for (auto s : kAllStages) l.templates_[s] = {s, detail::builtin_body(s), detail::builtin_chat_wrapped(s)};
      return l;
    }();
    return lib;
  }

  const PromptTemplate& get(Stage stage) const {
    auto it = templates_.find(stage);
    if (it == templates_.end()) throw PromptError("unknown prompt stage " + std::string(to_string(stage)));
    return it->second;
  }

  void set(PromptTemplate tmpl) { templates_[tmpl.stage] = std::move(tmpl); }

  std::string render(Stage stage, const Bindings& bindings) const { return render_template(get(stage), bindings); }

  /// Asset format:
  ///   ---
  ///   stage: vq-gen
  ///   chat_wrapped: true
  ///   ---
  ///   <body; one trailing newline is dropped>
  static PromptTemplate parse_asset(std::string_view content, const std::string& origin = "<asset>") {
    auto fail = [&](const std::string& why) -> PromptError { return PromptError(origin + ": " + why); };
    if (content.substr(0, 4) != "---\n") throw fail("missing front-matter opening '---'");
    auto end = content.find("\n---\n", 3);
    if (end == std::string_view::npos) throw fail("missing front-matter closing '---'");
    std::optional<Stage> stage;
    std::optional<bool> wrapped;
    for (const auto& line : text::split_lines(content.substr(4, end - 4))) {
      auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      auto key = text::trim(line.substr(0, colon));
      auto value = text::trim(line.substr(colon + 1));
      if (key == "stage") {
        stage = parse_stage(value);
        if (!stage) throw fail("unknown stage '" + value + "'");
      } else if (key == "chat_wrapped") {
        if (value != "true" && value != "false") throw fail("chat_wrapped must be true or false");
        wrapped = value == "true";
      }
    }
    if (!stage) throw fail("front-matter lacks 'stage'");
    std::string body(content.substr(end + 5));
    if (!body.empty() && body.back() == '\n') body.pop_back();
    return {*stage, std::move(body), wrapped.value_or(false)};
  }

  static std::string format_asset(const PromptTemplate& tmpl) {
    return "---\nstage: " + std::string(to_string(tmpl.stage)) + "\nchat_wrapped: " + (tmpl.chat_wrapped ? "true" : "false") +
           "\n---\n" + tmpl.body + "\n";
  }

  /// Overrides stages from every *.txt asset in `dir`.
  void load_dir(const std::string& dir) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() != ".txt") continue;
      set(parse_asset(text::read_file(entry.path().string()), entry.path().string()));
    }
  }

 private:
  std::map<Stage, PromptTemplate> templates_;
};

inline std::string render(Stage stage, const Bindings& bindings) { return PromptLibrary::builtin().render(stage, bindings); }

/// "- Name: Description" per candidate, in candidate order.
inline std::string format_candidate_list(const Registry& registry, const std::vector<std::string>& names) {
  std::vector<std::string> lines;
  for (const auto& n : names) lines.push_back("- " + n + ": " + registry.at(n).description);
  return text::join(lines, "\n");
}

/// Few-shot pool for tool generation: "Name: ...\nDescription: ..." blocks.
inline std::string format_tool_examples(const std::vector<std::pair<std::string, std::string>>& tools) {
  std::vector<std::string> blocks;
  for (const auto& [name, description] : tools) blocks.push_back("Name: " + name + "\nDescription: " + description);
  return text::join(blocks, "\n\n");
}

/// "param: value" lines in the tool's declared parameter order.
inline std::string format_param_lines(const ToolSpec& tool, const ParamValues& values) {
  std::vector<std::string> lines;
  for (const auto& p : tool.params) {
    auto it = values.find(p.name);
    lines.push_back(p.name + ": " + (it == values.end() ? p.none_token : it->second));
  }
  return text::join(lines, "\n");
}

/// Demonstration blocks: the INS line, the parameter lines, and optionally the API line.
inline std::string format_demonstrations(const ToolSpec& tool, std::size_t n_shots, bool with_api) {
  std::vector<std::string> blocks;
  const auto n = std::min(n_shots, tool.demonstrations.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = tool.demonstrations[i];
    std::string block = "INS: A user says, \"" + d.instruction + "\"";
    if (!tool.params.empty()) block += "\n" + format_param_lines(tool, d.assignments);
    if (with_api) block += "\nAPI: " + d.rendered_call;
    blocks.push_back(std::move(block));
  }
  return text::join(blocks, "\n\n");
}

/// Fine-tuning target: reasoning note followed by the tool action.
inline std::string serialize_target(std::string_view thought, std::string_view tool_name) {
  if (tool_name.empty()) throw PreconditionError("serialize_target: empty tool name");
  return "Thought: " + std::string(thought) + "\n\nAct: CALLTOOL[" + std::string(tool_name) + "()]";
}

}  // namespace toolverify::prompts
