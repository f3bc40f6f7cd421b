#include "primseq/primitive.hpp"

#include <string>

#include "primseq/error.hpp"

namespace primseq {

namespace {
constexpr std::array<std::string_view, kNumClasses> kNames = {"reach", "reposition", "transport",
                                                              "stabilize", "idle"};
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse error";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::dimension_mismatch: return "dimensionality mismatch";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::overlapping_segments: return "overlapping segments";
    case ErrorCode::segment_gap: return "segment gap";
    case ErrorCode::segment_bounds: return "segment out of bounds";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::too_few_subjects: return "too few subjects";
    case ErrorCode::zero_norm_quaternion: return "zero-norm quaternion";
    case ErrorCode::invalid_token: return "invalid token";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::unsorted_input: return "unsorted input";
    case ErrorCode::mixed_recordings: return "mixed recordings";
    case ErrorCode::format_version: return "unsupported format version";
    case ErrorCode::config: return "config error";
  }
  return "unknown error";
}

PrimitiveClass class_from_code(std::size_t code) {
  if (code >= kNumClasses) {
    throw Error(ErrorCode::invalid_token, "primitive code " + std::to_string(code));
  }
  return static_cast<PrimitiveClass>(code);
}

std::string_view to_string(PrimitiveClass c) { return kNames[code_of(c)]; }

std::optional<PrimitiveClass> parse_primitive(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kNames[i] == name) return static_cast<PrimitiveClass>(i);
  }
  return std::nullopt;
}

PrimitiveClass primitive_from_string(std::string_view name) {
  if (auto c = parse_primitive(name)) return *c;
  throw Error(ErrorCode::parse, "unknown primitive class '" + std::string(name) + "'");
}

}  // namespace primseq
