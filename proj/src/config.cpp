#include "primseq/config.hpp"

#include <cstdio>
#include <fstream>

#include "primseq/error.hpp"

namespace primseq {

using nlohmann::json;

std::string_view to_string(ReferencePolicy p) {
  return p == ReferencePolicy::first_frame ? "first_frame" : "per_window";
}

ReferencePolicy reference_policy_from_string(std::string_view s) {
  if (s == "first_frame") return ReferencePolicy::first_frame;
  if (s == "per_window") return ReferencePolicy::per_window;
  throw Error(ErrorCode::config, "unknown reference policy '" + std::string(s) + "'");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void RunConfig::validate() const {
  try {
    window.validate();
    model.validate();
    train.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::config, e.what());
  }
  if (window.sample_rate_hz != synth.sample_rate_hz) {
    throw Error(ErrorCode::config, "window and synth sample rates differ");
  }
  if (model.input_dim != manifest().channel_count()) {
    throw Error(ErrorCode::config, "model input_dim " + std::to_string(model.input_dim) + " does not match the " +
                                       std::to_string(manifest().channel_count()) + "-channel manifest");
  }
  if (n_folds == 0) throw Error(ErrorCode::config, "n_folds must be at least 1");
  if (min_overlap_frames == 0) throw Error(ErrorCode::config, "min_overlap_frames must be positive");
  if (baseline.smoother.window_length % 2 == 0) throw Error(ErrorCode::config, "smoother window_length must be odd");
  if (!(baseline.smoother.beta >= 0.0)) throw Error(ErrorCode::config, "smoother beta must be non-negative");
}

void RunConfig::validate_paths(bool need_data) const {
  if (!manifest_path.empty() && !std::filesystem::exists(manifest_path)) {
    throw Error(ErrorCode::config, "manifest not found: " + manifest_path.string());
  }
  if (need_data && !std::filesystem::exists(data_root / "dataset.json")) {
    throw Error(ErrorCode::config, "no dataset under " + data_root.string());
  }
}

ChannelManifest RunConfig::manifest() const {
  return manifest_path.empty() ? ChannelManifest::default_manifest() : ChannelManifest::load(manifest_path);
}

json RunConfig::to_json() const {
  return {
      {"paths",
       {{"data_root", data_root.generic_string()},
        {"output_dir", output_dir.generic_string()},
        {"manifest", manifest_path.generic_string()}}},
      {"window", window.to_json()},
      {"min_overlap_frames", min_overlap_frames},
      {"reference_policy", to_string(reference_policy)},
      {"model", model.to_json()},
      {"train", train.to_json()},
      {"synth", synth.to_json()},
      {"baseline",
       {{"enabled", baseline.enabled},
        {"train", baseline.train.to_json()},
        {"smoother", {{"window_length", baseline.smoother.window_length}, {"beta", baseline.smoother.beta}}}}},
      {"seed", seed},
      {"n_folds", n_folds},
      {"n_test_subjects", n_test_subjects},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.data_root = p.value("data_root", c.data_root.generic_string());
      c.output_dir = p.value("output_dir", c.output_dir.generic_string());
      c.manifest_path = p.value("manifest", std::string{});
    }
    if (j.contains("window")) c.window = WindowSpec::from_json(j.at("window"));
    c.min_overlap_frames = j.value("min_overlap_frames", c.min_overlap_frames);
    if (j.contains("reference_policy")) {
      c.reference_policy = reference_policy_from_string(j.at("reference_policy").get<std::string>());
    }
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("synth")) c.synth = SynthSpec::from_json(j.at("synth"));
    if (j.contains("baseline")) {
      const auto& b = j.at("baseline");
      c.baseline.enabled = b.value("enabled", c.baseline.enabled);
      if (b.contains("train")) c.baseline.train = PointwiseTrainConfig::from_json(b.at("train"));
      if (b.contains("smoother")) {
        c.baseline.smoother.window_length = b.at("smoother").value("window_length", c.baseline.smoother.window_length);
        c.baseline.smoother.beta = b.at("smoother").value("beta", c.baseline.smoother.beta);
      }
    }
    c.seed = j.value("seed", c.seed);
    c.n_folds = j.value("n_folds", c.n_folds);
    c.n_test_subjects = j.value("n_test_subjects", c.n_test_subjects);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    throw Error(ErrorCode::config, e.what());
  }
  if (!c.manifest_path.empty() && std::filesystem::exists(c.manifest_path)) c.synth.manifest = c.manifest();
  c.validate();
  return c;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << config.to_json().dump(2) << '\n';
}

}  // namespace primseq
