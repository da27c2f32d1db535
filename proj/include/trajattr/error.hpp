#pragma once

#include <stdexcept>
#include <string>

namespace trajattr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input (layout files, config files). Carries a 1-based position.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, int line, int column) {
    std::string where = "line " + std::to_string(line);
    if (column > 0) where += ", column " + std::to_string(column);
    return where + ": " + what;
  }

  int line_;
  int column_;
};

/// A persisted artifact does not conform to its schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during training or planning.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace trajattr
