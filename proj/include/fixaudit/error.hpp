#pragma once

#include <stdexcept>
#include <string>

namespace fixaudit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed corpus input. Carries the 1-based line and the offending field.
class CorpusError : public Error {
 public:
  CorpusError(std::size_t line, std::string field, const std::string& what)
      : Error("line " + std::to_string(line) + (field.empty() ? "" : " field '" + field + "'") + ": " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

/// A ground truth was needed but the problem has no reference solution,
/// or the reference itself failed to run.
class UncheckableError : public Error {
 public:
  using Error::Error;
};

/// Interpreter could not be started. Misconfiguration, not a program failure.
class SpawnError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Model output could not be turned into a program or a test case.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Network-level failure talking to a remote model. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Non-retryable model backend failure (script exhausted, bad response, ...).
class BackendError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fixaudit
