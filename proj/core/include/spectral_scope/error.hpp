#pragma once

#include <stdexcept>
#include <string>

namespace spectral_scope {

// Failure classes. The numeric values are the process exit codes used by the CLI.
enum class ErrorKind : int {
  validation = 2,
  degenerate = 3,
  io = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error(ErrorKind::validation, message) {}
};

/// Raised when a computation is mathematically undefined for the given input
/// (empty graph spectrum, repeated Fiedler value, zero pooled variance, ...).
class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& message) : Error(ErrorKind::degenerate, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorKind::io, message) {}
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace spectral_scope
