#pragma once

#include <stdexcept>
#include <string>

namespace perq {

/// Error families. The CLI maps each family to its own exit code.
enum class ErrorKind {
  Usage = 2,
  Parse = 3,
  Validation = 4,
  Io = 5,
  Judge = 6,
  Backend = 7,
  Data = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable name, e.g. "InsufficientLabel".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& message) : Error(ErrorKind::Parse, "ParseError", message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorKind::Validation, "ValidationError", message) {}
  ValidationError(std::string code, const std::string& message)
      : Error(ErrorKind::Validation, std::move(code), message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorKind::Io, "IOError", message) {}
};

class DataError : public Error {
 public:
  DataError(std::string code, const std::string& message)
      : Error(ErrorKind::Data, std::move(code), message) {}
};

}  // namespace perq
