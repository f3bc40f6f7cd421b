#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "primseq/baseline.hpp"
#include "primseq/dataset.hpp"
#include "primseq/model.hpp"
#include "primseq/preprocess.hpp"
#include "primseq/training.hpp"

namespace primseq {

struct SmootherConfig {
  std::size_t window_length = 101;
  double beta = 4.0;

  bool operator==(const SmootherConfig&) const = default;
};

struct BaselineConfig {
  bool enabled = true;
  PointwiseTrainConfig train;
  SmootherConfig smoother;

  bool operator==(const BaselineConfig&) const = default;
};

struct RunConfig {
  std::filesystem::path data_root = "data/synthetic";
  std::filesystem::path output_dir = "out";
  // empty: built-in default manifest
  std::filesystem::path manifest_path;

  WindowSpec window;
  std::size_t min_overlap_frames = kDefaultMinOverlap;
  ReferencePolicy reference_policy = ReferencePolicy::first_frame;

  ModelConfig model;
  TrainConfig train;
  SynthSpec synth;
  BaselineConfig baseline;

  std::uint64_t seed = 1;
  std::size_t n_folds = 4;
  std::size_t n_test_subjects = 2;

  /// Throws Error(config) on inconsistent values.
  void validate() const;
  /// Also requires the referenced input paths to exist.
  void validate_paths(bool need_data) const;

  /// Relative paths in the file are kept as written.
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  /// FNV-1a over the canonical JSON dump, as 16 hex digits.
  std::string hash() const;

  ChannelManifest manifest() const;
};

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

std::string_view to_string(ReferencePolicy p);
ReferencePolicy reference_policy_from_string(std::string_view s);

}  // namespace primseq
