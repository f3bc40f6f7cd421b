#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "primseq/primitive.hpp"

namespace primseq {

/// Frames × channels, one row per sample.
using Frames = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class QuantityKind { acceleration, quaternion_component, joint_angle };

struct ChannelDescriptor {
  std::string name;
  std::string sensor_id;
  QuantityKind kind = QuantityKind::joint_angle;
  std::string unit;

  bool operator==(const ChannelDescriptor&) const = default;
};

/// Channel layout of a recording. Quaternion components must appear as
/// contiguous (w, x, y, z) groups of four per sensor.
class ChannelManifest {
 public:
  explicit ChannelManifest(std::vector<ChannelDescriptor> channels);

  /// 9 sensors × (3 accel + 4 quaternion) + 14 joint angles = 77 channels.
  static ChannelManifest default_manifest();
  /// `n` anonymous joint-angle channels; for tests and channel-agnostic runs.
  static ChannelManifest plain(std::size_t n);

  std::size_t channel_count() const { return channels_.size(); }
  const std::vector<ChannelDescriptor>& channels() const { return channels_; }
  /// Index of the w component of each quaternion group.
  const std::vector<std::size_t>& quaternion_groups() const { return quaternion_groups_; }

  nlohmann::json to_json() const;
  static ChannelManifest from_json(const nlohmann::json& j);
  static ChannelManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const ChannelManifest& other) const { return channels_ == other.channels_; }

 private:
  std::vector<ChannelDescriptor> channels_;
  std::vector<std::size_t> quaternion_groups_;
};

struct IMURecording {
  std::string subject_id;
  std::string activity;
  int trial = 0;
  double sample_rate_hz = 100.0;
  Frames frames;

  std::size_t frame_count() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t channel_count() const { return static_cast<std::size_t>(frames.cols()); }
  double duration_s() const { return static_cast<double>(frame_count()) / sample_rate_hz; }
  /// "<subject>_<activity>_<trial>"; used as the recording key in every output.
  std::string id() const;
};

/// End-exclusive frame range labeled with one primitive.
struct PrimitiveSegment {
  PrimitiveClass cls = PrimitiveClass::idle;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool operator==(const PrimitiveSegment&) const = default;
};

struct LabeledRecording {
  IMURecording recording;
  std::vector<PrimitiveSegment> segments;

  std::string id() const { return recording.id(); }
};

enum class PareticSide { left, right };

struct SubjectInfo {
  std::string subject_id;
  PareticSide paretic_side = PareticSide::left;
  int ue_fma_score = 0;

  bool operator==(const SubjectInfo&) const = default;
};

struct DatasetSplit {
  std::set<std::string> train_subjects;
  std::set<std::string> val_subjects;
  std::set<std::string> test_subjects;
};

/// Activity tags reserved for the nine standardized rehabilitation activities.
extern const std::vector<std::string> kReservedActivities;

/// Throws a distinct Error code for each violated tiling rule.
void validate_segments(const std::vector<PrimitiveSegment>& segments, std::size_t frame_count);
void validate_recording(const LabeledRecording& rec, const ChannelManifest& manifest);
void validate_subject(const SubjectInfo& subject);

/// Reads `<stem>.frames.csv` and `<stem>.labels.json`; metadata comes from the
/// sibling `<stem>.meta.json` when present.
LabeledRecording load_recording(const std::filesystem::path& frames_path,
                                const std::filesystem::path& labels_path,
                                const ChannelManifest& manifest);
void save_recording(const LabeledRecording& rec, const ChannelManifest& manifest,
                    const std::filesystem::path& dir);

std::string frame_file_name(const std::string& id);
std::string label_file_name(const std::string& id);
std::string meta_file_name(const std::string& id);

nlohmann::json segments_to_json(const std::vector<PrimitiveSegment>& segments);
std::vector<PrimitiveSegment> segments_from_json(const nlohmann::json& j);
nlohmann::json subject_to_json(const SubjectInfo& s);
SubjectInfo subject_from_json(const nlohmann::json& j);

struct DurationRange {
  double min_s = 0.5;
  double max_s = 1.5;
};

struct SynthSpec {
  std::size_t n_subjects = 8;
  std::size_t trials_per_subject = 1;
  double duration_s = 60.0;
  double sample_rate_hz = 100.0;
  // Class signature: channel value = offset[class][ch] + amplitude·sin(2π·f_class·t + phase[ch]).
  double offset_scale = 1.0;
  double amplitude = 0.5;
  double base_frequency_hz = 0.5;
  double frequency_step_hz = 0.3;
  double noise_std = 0.3;
  std::array<DurationRange, kNumClasses> durations = {
      DurationRange{0.6, 1.6}, DurationRange{0.5, 1.4}, DurationRange{0.8, 2.0},
      DurationRange{0.5, 1.5}, DurationRange{0.5, 2.0}};
  ChannelManifest manifest = ChannelManifest::default_manifest();

  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct Dataset {
  ChannelManifest manifest = ChannelManifest::default_manifest();
  std::vector<SubjectInfo> subjects;
  std::vector<LabeledRecording> recordings;

  std::vector<const LabeledRecording*> recordings_of(const std::set<std::string>& subjects) const;
  const SubjectInfo* subject(const std::string& id) const;
};

/// Pure function of (spec, seed).
Dataset synthesize_dataset(const SynthSpec& spec, std::uint64_t seed);

/// The segment scheduler used by synthesize_dataset for recording number
/// `recording_index` (subject-major, trial-minor), exposed for replay.
std::vector<PrimitiveSegment> schedule_segments(const SynthSpec& spec, std::uint64_t seed,
                                                std::size_t recording_index);

/// Clean (noise-free) class signature for one frame at absolute time `t_s`.
Eigen::VectorXd class_signature(const SynthSpec& spec, std::uint64_t seed, PrimitiveClass cls,
                                double t_s);

/// Directory layout: manifest.json, subjects.json, dataset.json (recording
/// index) and one frames/labels/meta triple per recording.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// One split per fold; fold k validates on the k-th group of a seeded shuffle.
/// Held-out `test_subjects` are excluded from folds and copied into every split.
std::vector<DatasetSplit> split_subjects(const std::vector<std::string>& subjects,
                                         std::size_t n_folds, std::uint64_t seed,
                                         const std::set<std::string>& test_subjects = {});

/// Derives an independent 64-bit stream seed; stable across platforms.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace primseq
