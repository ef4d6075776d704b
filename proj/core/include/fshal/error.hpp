#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fshal {

enum class ErrorCode {
  io,
  unrecognized_format,
  unsupported_version,
  truncated_payload,
  invalid_bank,
  invalid_argument,
  dimension_mismatch,
  empty_input,
  insufficient_classes,
  insufficient_samples,
  missing_semantic,
  divergence,
  factorization_failure,
  unknown_parameter,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (and tests)
// can tell the taxonomy apart without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fshal
