#pragma once

#include <stdexcept>
#include <string>

namespace camo {

/// Broad failure category; the CLI maps each kind onto a process exit code.
enum class ErrorKind {
  kDimension,
  kNumeric,
  kConfig,
  kInput,
  kIo,
  kIntegrity,
  kInvariant,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error(ErrorKind::kDimension, m) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& m) : Error(ErrorKind::kNumeric, m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(ErrorKind::kConfig, m) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& m) : Error(ErrorKind::kInput, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorKind::kIo, m) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& m) : Error(ErrorKind::kIntegrity, m) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& m) : Error(ErrorKind::kInvariant, m) {}
};

/// Process exit code for an error kind: 2 config, 3 data, 4 numeric, 1 otherwise.
int exit_code(ErrorKind kind);

}  // namespace camo
