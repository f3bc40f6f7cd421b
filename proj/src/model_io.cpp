#include "primseq/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "primseq/error.hpp"

namespace primseq {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'R', 'I', 'M', 'S', 'E', 'Q', 'M'};

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(ErrorCode::parse, path.string() + ": truncated");
  return v;
}

}  // namespace

void save_member(const EnsembleMember& member, const std::filesystem::path& path) {
  const auto& p = member.params;
  json tensors = json::array();
  for (const auto& t : p.tensors()) {
    tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"offset", t.offset}});
  }
  const json header = {{"format", "primseq-model"},
                       {"version", kModelFormatVersion},
                       {"model_config", p.config().to_json()},
                       {"normalization", member.stats.to_json()},
                       {"tensors", tensors},
                       {"value_count", p.size()},
                       {"dtype", "f64-le"}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kModelFormatVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(p.values().data()),
            static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!out) throw Error(ErrorCode::io, "failed writing " + path.string());
}

EnsembleMember load_member(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::parse, path.string() + " is not a model file");
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::format_version, path.string() + " has version " + std::to_string(version));
  }
  const auto header_len = read_pod<std::uint64_t>(in, path);
  if (header_len > (1ULL << 30)) throw Error(ErrorCode::parse, path.string() + ": header too large");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw Error(ErrorCode::parse, path.string() + ": truncated header");
  }
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
  const auto config = ModelConfig::from_json(header.at("model_config"));
  EnsembleMember member{ModelParams(config), NormalizationStats::from_json(header.at("normalization"))};
  if (header.at("value_count").get<std::size_t>() != member.params.size()) {
    throw Error(ErrorCode::dimension_mismatch, path.string() + ": weight count does not match config");
  }
  const auto& tensors = header.at("tensors");
  for (std::size_t i = 0; i < member.params.tensors().size(); ++i) {
    const auto& t = member.params.tensors()[i];
    if (i >= tensors.size() || tensors[i].at("name") != t.name || tensors[i].at("rows") != t.rows ||
        tensors[i].at("cols") != t.cols) {
      throw Error(ErrorCode::dimension_mismatch, path.string() + ": tensor table does not match config");
    }
  }
  if (!in.read(reinterpret_cast<char*>(member.params.values().data()),
               static_cast<std::streamsize>(member.params.size() * sizeof(double)))) {
    throw Error(ErrorCode::parse, path.string() + ": truncated weights");
  }
  return member;
}

}  // namespace primseq
