#include "primseq/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "primseq/error.hpp"

namespace primseq {

using nlohmann::json;

Quaternion Quaternion::from_axis_angle(double ax, double ay, double az, double angle_rad) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  if (n == 0.0) throw Error(ErrorCode::invalid_argument, "zero rotation axis");
  const double s = std::sin(angle_rad / 2.0) / n;
  return {std::cos(angle_rad / 2.0), ax * s, ay * s, az * s};
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::zero_norm_quaternion, "cannot normalize");
  return {w / n, x / n, y / n, z / n};
}

Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

void sensor_centric_transform(Frames& frames, const ChannelManifest& manifest, std::size_t reference_row) {
  if (frames.rows() == 0) return;
  if (reference_row >= static_cast<std::size_t>(frames.rows())) {
    throw Error(ErrorCode::invalid_argument, "reference row out of range");
  }
  const Eigen::RowVectorXd reference = frames.row(static_cast<Eigen::Index>(reference_row));
  sensor_centric_transform(frames, manifest, reference);
}

void sensor_centric_transform(Frames& frames, const ChannelManifest& manifest, const Eigen::RowVectorXd& reference) {
  if (static_cast<std::size_t>(frames.cols()) != manifest.channel_count() || reference.size() != frames.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "frames do not match manifest");
  }
  for (auto g0 : manifest.quaternion_groups()) {
    const auto g = static_cast<Eigen::Index>(g0);
    const Quaternion ref_inv =
        Quaternion{reference[g], reference[g + 1], reference[g + 2], reference[g + 3]}.normalized().conjugate();
    for (Eigen::Index t = 0; t < frames.rows(); ++t) {
      const Quaternion q{frames(t, g), frames(t, g + 1), frames(t, g + 2), frames(t, g + 3)};
      if (!(q.norm() > 0.0)) {
        throw Error(ErrorCode::zero_norm_quaternion, "sensor group at channel " + std::to_string(g0) +
                                                         ", frame " + std::to_string(t));
      }
      const Quaternion out = (ref_inv * q).normalized();
      frames(t, g) = out.w;
      frames(t, g + 1) = out.x;
      frames(t, g + 2) = out.y;
      frames(t, g + 3) = out.z;
    }
  }
}

IMURecording sensor_centric_transform(const IMURecording& recording, const ChannelManifest& manifest) {
  IMURecording out = recording;
  sensor_centric_transform(out.frames, manifest, 0);
  return out;
}

// --- normalization ---------------------------------------------------------

json NormalizationStats::to_json() const { return {{"mean", mean}, {"std", std}, {"source", source}}; }

NormalizationStats NormalizationStats::from_json(const json& j) {
  NormalizationStats s;
  try {
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    s.source = j.value("source", std::string{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("normalization stats: ") + e.what());
  }
  if (s.mean.size() != s.std.size()) throw Error(ErrorCode::dimension_mismatch, "mean/std length differ");
  return s;
}

NormalizationStats fit_normalization(const std::vector<const IMURecording*>& train, std::string source) {
  if (train.empty()) throw Error(ErrorCode::invalid_argument, "no recordings to fit normalization");
  const auto n_ch = train.front()->frames.cols();
  // Welford accumulation, pooled over all frames of all recordings
  Eigen::ArrayXd mean = Eigen::ArrayXd::Zero(n_ch);
  Eigen::ArrayXd m2 = Eigen::ArrayXd::Zero(n_ch);
  double count = 0.0;
  for (const auto* rec : train) {
    if (rec->frames.cols() != n_ch) throw Error(ErrorCode::dimension_mismatch, "recordings differ in channels");
    for (Eigen::Index t = 0; t < rec->frames.rows(); ++t) {
      count += 1.0;
      const Eigen::ArrayXd x = rec->frames.row(t).transpose().array();
      const Eigen::ArrayXd delta = x - mean;
      mean += delta / count;
      m2 += delta * (x - mean);
    }
  }
  if (count == 0.0) throw Error(ErrorCode::invalid_argument, "training recordings have no frames");
  NormalizationStats stats;
  stats.source = std::move(source);
  stats.mean.resize(static_cast<std::size_t>(n_ch));
  stats.std.resize(static_cast<std::size_t>(n_ch));
  for (Eigen::Index c = 0; c < n_ch; ++c) {
    const double sd = std::sqrt(m2[c] / count);
    stats.mean[static_cast<std::size_t>(c)] = mean[c];
    stats.std[static_cast<std::size_t>(c)] = sd < kMinStd ? 1.0 : sd;
  }
  return stats;
}

void apply_normalization(Frames& frames, const NormalizationStats& stats) {
  if (static_cast<std::size_t>(frames.cols()) != stats.channel_count()) {
    throw Error(ErrorCode::dimension_mismatch, "frames have " + std::to_string(frames.cols()) +
                                                   " channels, stats have " + std::to_string(stats.channel_count()));
  }
  const Eigen::Map<const Eigen::RowVectorXd> mean(stats.mean.data(), frames.cols());
  const Eigen::Map<const Eigen::RowVectorXd> sd(stats.std.data(), frames.cols());
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    frames.row(t) = (frames.row(t) - mean).cwiseQuotient(sd);
  }
}

IMURecording apply_normalization(const IMURecording& recording, const NormalizationStats& stats) {
  IMURecording out = recording;
  apply_normalization(out.frames, stats);
  return out;
}

void invert_normalization(Frames& frames, const NormalizationStats& stats) {
  if (static_cast<std::size_t>(frames.cols()) != stats.channel_count()) {
    throw Error(ErrorCode::dimension_mismatch, "frames do not match stats");
  }
  const Eigen::Map<const Eigen::RowVectorXd> mean(stats.mean.data(), frames.cols());
  const Eigen::Map<const Eigen::RowVectorXd> sd(stats.std.data(), frames.cols());
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    frames.row(t) = frames.row(t).cwiseProduct(sd) + mean;
  }
}

// --- windows ---------------------------------------------------------------

namespace {

std::size_t whole_frames(double seconds, double rate, const char* what) {
  const double f = seconds * rate;
  const double r = std::round(f);
  if (std::abs(f - r) > 1e-6 || r < 0.0) {
    throw Error(ErrorCode::invalid_argument, std::string(what) + " is not a whole number of frames");
  }
  return static_cast<std::size_t>(r);
}

}  // namespace

void WindowSpec::validate() const {
  if (!(sample_rate_hz > 0.0)) throw Error(ErrorCode::invalid_argument, "sample rate must be positive");
  if (!(core_s > 0.0) || core_s > window_s) throw Error(ErrorCode::invalid_argument, "need 0 < core_s <= window_s");
  if (!(train_slide_s > 0.0) || !(test_slide_s > 0.0)) throw Error(ErrorCode::invalid_argument, "slides must be positive");
  const auto w = whole_frames(window_s, sample_rate_hz, "window_s");
  const auto c = whole_frames(core_s, sample_rate_hz, "core_s");
  if ((w - c) % 2 != 0) throw Error(ErrorCode::invalid_argument, "flanks must split evenly");
  if (whole_frames(train_slide_s, sample_rate_hz, "train_slide_s") == 0 ||
      whole_frames(test_slide_s, sample_rate_hz, "test_slide_s") == 0) {
    throw Error(ErrorCode::invalid_argument, "slides must be at least one frame");
  }
}

std::size_t WindowSpec::window_frames() const { return whole_frames(window_s, sample_rate_hz, "window_s"); }
std::size_t WindowSpec::core_frames() const { return whole_frames(core_s, sample_rate_hz, "core_s"); }
std::size_t WindowSpec::flank_frames() const { return (window_frames() - core_frames()) / 2; }
std::size_t WindowSpec::slide_frames(WindowMode mode) const {
  return mode == WindowMode::train ? whole_frames(train_slide_s, sample_rate_hz, "train_slide_s")
                                   : whole_frames(test_slide_s, sample_rate_hz, "test_slide_s");
}

json WindowSpec::to_json() const {
  return {{"window_s", window_s},
          {"core_s", core_s},
          {"train_slide_s", train_slide_s},
          {"test_slide_s", test_slide_s},
          {"sample_rate_hz", sample_rate_hz}};
}

WindowSpec WindowSpec::from_json(const json& j) {
  WindowSpec s;
  s.window_s = j.value("window_s", s.window_s);
  s.core_s = j.value("core_s", s.core_s);
  s.train_slide_s = j.value("train_slide_s", s.train_slide_s);
  s.test_slide_s = j.value("test_slide_s", s.test_slide_s);
  s.sample_rate_hz = j.value("sample_rate_hz", s.sample_rate_hz);
  s.validate();
  return s;
}

std::vector<std::size_t> core_starts(std::size_t n_frames, const WindowSpec& spec, WindowMode mode) {
  std::vector<std::size_t> starts;
  if (n_frames == 0) return starts;
  const auto core = spec.core_frames();
  const auto slide = spec.slide_frames(mode);
  for (std::size_t s = 0;; s += slide) {
    starts.push_back(s);
    if (s + core >= n_frames) break;
  }
  return starts;
}

Window window_at(const Frames& frames, std::size_t core_start, const WindowSpec& spec,
                 const std::string& recording_id) {
  const auto n = static_cast<std::ptrdiff_t>(frames.rows());
  if (n == 0) throw Error(ErrorCode::invalid_argument, "recording has no frames");
  const auto len = spec.window_frames();
  const auto flank = spec.flank_frames();
  Window w;
  w.frames.resize(static_cast<Eigen::Index>(len), frames.cols());
  const auto first = static_cast<std::ptrdiff_t>(core_start) - static_cast<std::ptrdiff_t>(flank);
  for (std::size_t i = 0; i < len; ++i) {
    const auto src = std::clamp<std::ptrdiff_t>(first + static_cast<std::ptrdiff_t>(i), 0, n - 1);
    w.frames.row(static_cast<Eigen::Index>(i)) = frames.row(src);
  }
  w.recording_id = recording_id;
  w.origin_core_begin = core_start;
  w.origin_core_end = std::min(core_start + spec.core_frames(), static_cast<std::size_t>(n));
  w.core_begin = flank;
  w.core_end = flank + (w.origin_core_end - core_start);
  return w;
}

std::vector<Window> make_windows(const IMURecording& recording, const WindowSpec& spec, WindowMode mode) {
  std::vector<Window> out;
  const auto id = recording.id();
  for (auto s : core_starts(recording.frame_count(), spec, mode)) {
    out.push_back(window_at(recording.frames, s, spec, id));
  }
  return out;
}

PrimitiveSequence derive_target_sequence(const std::vector<PrimitiveSegment>& segments, std::size_t core_begin,
                                         std::size_t core_end, std::size_t min_overlap, std::size_t max_tokens) {
  PrimitiveSequence tokens;
  std::size_t best_overlap = 0;
  const PrimitiveSegment* best = nullptr;
  for (const auto& seg : segments) {
    const auto lo = std::max(seg.start, core_begin);
    const auto hi = std::min(seg.end, core_end);
    if (hi <= lo) continue;
    const auto overlap = hi - lo;
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = &seg;
    }
    if (overlap >= min_overlap && tokens.size() < max_tokens) tokens.push_back(seg.cls);
  }
  if (tokens.empty() && best != nullptr) tokens.push_back(best->cls);
  return tokens;
}

PrimitiveSequence derive_target_sequence(const std::vector<PrimitiveSegment>& segments, const Window& window,
                                         std::size_t min_overlap, std::size_t max_tokens) {
  return derive_target_sequence(segments, window.origin_core_begin, window.origin_core_end, min_overlap,
                                max_tokens);
}

}  // namespace primseq
