#include "fshal/error.hpp"

namespace fshal {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "i/o failure";
    case ErrorCode::unrecognized_format: return "unrecognized format";
    case ErrorCode::unsupported_version: return "unsupported version";
    case ErrorCode::truncated_payload: return "truncated payload";
    case ErrorCode::invalid_bank: return "invalid bank";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::empty_input: return "empty input";
    case ErrorCode::insufficient_classes: return "insufficient classes";
    case ErrorCode::insufficient_samples: return "insufficient samples";
    case ErrorCode::missing_semantic: return "missing semantic vector";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::factorization_failure: return "factorization failure";
    case ErrorCode::unknown_parameter: return "unknown parameter";
  }
  return "error";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)),
      code_(code) {}

}  // namespace fshal
