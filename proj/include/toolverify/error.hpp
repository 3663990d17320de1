#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace toolverify {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The generation endpoint could not be reached (retryable).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// The generation endpoint answered with something we cannot interpret.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// No scripted rule matched a prompt. Always a fixture gap.
class UnmatchedScriptError : public Error {
 public:
  explicit UnmatchedScriptError(const std::string& prompt)
      : Error("no scripted rule matches prompt: " + excerpt(prompt)) {}

 private:
  static std::string excerpt(const std::string& prompt) {
    constexpr std::size_t kMax = 160;
    if (prompt.size() <= kMax) return prompt;
    return prompt.substr(0, kMax / 2) + " ... " + prompt.substr(prompt.size() - kMax / 2);
  }
};

/// Text that should follow a grammar did not. Carries the byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at offset " + std::to_string(position) + ")"), position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// A registry document is malformed or breaks a ToolSpec invariant.
class RegistryError : public Error {
 public:
  using Error::Error;
};

/// Unknown prompt stage or an unbound placeholder.
class PromptError : public Error {
 public:
  using Error::Error;
};

/// The selection model's reply names no tool, or names one outside the candidates.
class SelectionError : public Error {
 public:
  enum class Kind { kUnparseable, kOutOfSet };

  SelectionError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// A generation step produced nothing usable within its resample budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// A parameter-verification reply is neither "[a]", "[b]" nor "None".
class VerificationParseError : public Error {
 public:
  using Error::Error;
};

/// Model-constructed call disagrees with the verified parameters.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace toolverify
