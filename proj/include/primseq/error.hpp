#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace primseq {

enum class ErrorCode {
  parse,
  io,
  dimension_mismatch,
  non_finite,
  overlapping_segments,
  segment_gap,
  segment_bounds,
  invalid_argument,
  too_few_subjects,
  zero_norm_quaternion,
  invalid_token,
  divergence,
  unsorted_input,
  mixed_recordings,
  format_version,
  config,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. `code()` distinguishes diagnostics that callers
/// (and tests) need to tell apart; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace primseq
