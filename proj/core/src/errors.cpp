#include "camo/errors.hpp"

namespace camo {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kIntegrity: return "integrity error";
    case ErrorKind::kInvariant: return "invariant violation";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kInput:
    case ErrorKind::kIo:
    case ErrorKind::kIntegrity:
    case ErrorKind::kDimension: return 3;
    case ErrorKind::kNumeric: return 4;
    case ErrorKind::kInvariant: return 1;
  }
  return 1;
}

}  // namespace camo
