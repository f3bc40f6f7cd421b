#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace primseq {

// Integer codes are part of the file formats and confusion-matrix layout.
enum class PrimitiveClass : std::uint8_t {
  reach = 0,
  reposition = 1,
  transport = 2,
  stabilize = 3,
  idle = 4,
};

inline constexpr std::size_t kNumClasses = 5;

inline constexpr std::array<PrimitiveClass, kNumClasses> kAllClasses = {
    PrimitiveClass::reach, PrimitiveClass::reposition, PrimitiveClass::transport,
    PrimitiveClass::stabilize, PrimitiveClass::idle};

using PrimitiveSequence = std::vector<PrimitiveClass>;

constexpr std::size_t code_of(PrimitiveClass c) { return static_cast<std::size_t>(c); }

/// Throws Error(invalid_token) when `code` is outside 0..4.
PrimitiveClass class_from_code(std::size_t code);

std::string_view to_string(PrimitiveClass c);

std::optional<PrimitiveClass> parse_primitive(std::string_view name);

/// Like parse_primitive but throws Error(parse) on unknown names.
PrimitiveClass primitive_from_string(std::string_view name);

}  // namespace primseq
