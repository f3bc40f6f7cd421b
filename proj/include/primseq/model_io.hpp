#pragma once

#include <cstdint>
#include <filesystem>

#include "primseq/model.hpp"

namespace primseq {

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Binary member file: 8-byte magic "PRIMSEQM", u32 version, u64 header
/// length, a JSON header (model config, normalization stats, tensor table),
/// then every weight as a little-endian 64-bit float in row-major order.
void save_member(const EnsembleMember& member, const std::filesystem::path& path);
EnsembleMember load_member(const std::filesystem::path& path);

}  // namespace primseq
