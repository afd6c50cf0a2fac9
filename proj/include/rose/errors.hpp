#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rose {

// Base of every error the engine raises. Callers that only care about
// "something went wrong" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value has the wrong shape (e.g. embedding dimension mismatch).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A value has the right shape but violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Text or file content could not be parsed. Carries the 1-based line when known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// An operation was called outside its domain (empty input, blank text, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Invalid engine or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Every sampled path failed to parse, so no majority answer exists.
class UnanswerableError : public Error {
 public:
  using Error::Error;
};

// A chat or embedding provider failed after exhausting its retry budget.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempt" + (attempts == 1 ? "" : "s") + ")"),
        attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

// The provider answered, but the body did not match the expected wire format.
class ProtocolError : public ProviderError {
 public:
  explicit ProtocolError(const std::string& what, int attempts = 1) : ProviderError(what, attempts) {}
};

// A scripted mock was asked a question it has no entry for and no default.
class ScriptMissError : public ProviderError {
 public:
  explicit ScriptMissError(const std::string& question)
      : ProviderError("mock script has no entry for question: " + question, 1), question_(question) {}
  const std::string& question() const noexcept { return question_; }

 private:
  std::string question_;
};

}  // namespace rose
