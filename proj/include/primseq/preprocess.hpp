#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "primseq/dataset.hpp"

namespace primseq {

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion from_axis_angle(double ax, double ay, double az, double angle_rad);

  double norm() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  /// Throws Error(zero_norm_quaternion) when the norm is zero or not finite.
  Quaternion normalized() const;
};

/// Hamilton product a ⊗ b.
Quaternion operator*(const Quaternion& a, const Quaternion& b);

enum class ReferencePolicy { first_frame, per_window };

/// Rewrites every quaternion group as conj(q(ref)) ⊗ q(t), renormalized, where
/// ref is row `reference_row`. Other channels are untouched.
void sensor_centric_transform(Frames& frames, const ChannelManifest& manifest, std::size_t reference_row = 0);
/// Same, with the reference quaternions taken from an external frame.
void sensor_centric_transform(Frames& frames, const ChannelManifest& manifest, const Eigen::RowVectorXd& reference);
IMURecording sensor_centric_transform(const IMURecording& recording, const ChannelManifest& manifest);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::string source;

  std::size_t channel_count() const { return mean.size(); }
  nlohmann::json to_json() const;
  static NormalizationStats from_json(const nlohmann::json& j);
};

inline constexpr double kMinStd = 1e-8;

/// Pooled per-channel mean and population std; std below kMinStd is clamped to 1.
NormalizationStats fit_normalization(const std::vector<const IMURecording*>& train, std::string source = {});
void apply_normalization(Frames& frames, const NormalizationStats& stats);
IMURecording apply_normalization(const IMURecording& recording, const NormalizationStats& stats);
void invert_normalization(Frames& frames, const NormalizationStats& stats);

enum class WindowMode { train, test };

struct WindowSpec {
  double window_s = 6.0;
  double core_s = 4.0;
  double train_slide_s = 0.5;
  double test_slide_s = 4.0;
  double sample_rate_hz = 100.0;

  /// Throws Error(invalid_argument) when durations are inconsistent or not whole frames.
  void validate() const;
  std::size_t window_frames() const;
  std::size_t core_frames() const;
  std::size_t flank_frames() const;
  std::size_t slide_frames(WindowMode mode) const;

  nlohmann::json to_json() const;
  static WindowSpec from_json(const nlohmann::json& j);
  bool operator==(const WindowSpec&) const = default;
};

struct Window {
  Frames frames;
  std::size_t core_begin = 0;  // within the window
  std::size_t core_end = 0;
  std::string recording_id;
  std::size_t origin_core_begin = 0;  // absolute frame in the recording
  std::size_t origin_core_end = 0;
};

/// Absolute core start frames that make_windows emits for a recording of `n_frames`.
std::vector<std::size_t> core_starts(std::size_t n_frames, const WindowSpec& spec, WindowMode mode);

/// Builds the window whose core starts at absolute frame `core_start`, padding
/// both ends by repeating the boundary frames.
Window window_at(const Frames& frames, std::size_t core_start, const WindowSpec& spec,
                 const std::string& recording_id);

std::vector<Window> make_windows(const IMURecording& recording, const WindowSpec& spec, WindowMode mode);

inline constexpr std::size_t kDefaultMinOverlap = 5;
inline constexpr std::size_t kDefaultMaxTokens = 16;

/// Classes of segments overlapping the core by at least `min_overlap` frames,
/// in temporal order; falls back to the largest-overlap segment.
PrimitiveSequence derive_target_sequence(const std::vector<PrimitiveSegment>& segments, std::size_t core_begin,
                                         std::size_t core_end, std::size_t min_overlap = kDefaultMinOverlap,
                                         std::size_t max_tokens = kDefaultMaxTokens);
PrimitiveSequence derive_target_sequence(const std::vector<PrimitiveSegment>& segments, const Window& window,
                                         std::size_t min_overlap = kDefaultMinOverlap,
                                         std::size_t max_tokens = kDefaultMaxTokens);

}  // namespace primseq
