#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include <json.hpp>

#include "primseq/dataset.hpp"
#include "primseq/decode.hpp"

namespace primseq {

/// Frames × 5 class probabilities.
using PointwiseTrack = Eigen::Matrix<double, Eigen::Dynamic, static_cast<int>(kNumClasses), Eigen::RowMajor>;

inline constexpr std::size_t kStatsPerChannel = 5;

/// Per channel, in order: mean, max, min, std (population), rms.
struct StatFeatures {
  Eigen::VectorXd values;

  std::size_t channel_count() const { return static_cast<std::size_t>(values.size()) / kStatsPerChannel; }
  double mean(std::size_t ch) const { return values[static_cast<Eigen::Index>(ch * kStatsPerChannel)]; }
  double max(std::size_t ch) const { return values[static_cast<Eigen::Index>(ch * kStatsPerChannel + 1)]; }
  double min(std::size_t ch) const { return values[static_cast<Eigen::Index>(ch * kStatsPerChannel + 2)]; }
  double std(std::size_t ch) const { return values[static_cast<Eigen::Index>(ch * kStatsPerChannel + 3)]; }
  double rms(std::size_t ch) const { return values[static_cast<Eigen::Index>(ch * kStatsPerChannel + 4)]; }
};

/// Statistics over frames [t − context/2, t − context/2 + context), clipped to the recording.
StatFeatures extract_features(const Frames& frames, std::size_t t, std::size_t context_frames = 100);

/// Feature rows for frames 0, stride, 2·stride, ...
Eigen::MatrixXd feature_matrix(const Frames& frames, std::size_t context_frames, std::size_t stride = 1);

/// Zeroth-order modified Bessel function of the first kind, by power series.
double bessel_i0(double x);

/// Normalized Kaiser window: w[k] ∝ I0(β·sqrt(1 − (2k/(L−1) − 1)²)) / I0(β).
/// Throws Error(invalid_argument) unless `length` is odd and positive.
std::vector<double> kaiser_weights(std::size_t length, double beta);

/// β for a desired sidelobe attenuation in dB (Kaiser's empirical formula).
double kaiser_beta_for_attenuation(double attenuation_db);

struct KaiserSmoother {
  std::size_t window_length = 1;
  double beta = 0.0;
  std::vector<double> weights;

  KaiserSmoother(std::size_t length, double beta);
};

/// Weighted running average of each class column; taps falling outside the
/// track are dropped and the remaining weights renormalized. Rows are then
/// renormalized to sum to 1.
PointwiseTrack smooth(const PointwiseTrack& track, const KaiserSmoother& smoother);

/// Per-frame argmax (lowest code on ties).
std::vector<PrimitiveClass> frame_labels(const PointwiseTrack& track);

/// Run-length collapse of consecutive identical labels.
PrimitiveSequence run_length_collapse(const std::vector<PrimitiveClass>& labels);

/// Argmax labels inside each [begin, end) core, collapsed to tokens.
std::vector<PrimitiveSequence> collapse(const PointwiseTrack& track,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& core_ranges);

/// Feature vector → class probabilities.
class PointwiseClassifier {
 public:
  virtual ~PointwiseClassifier() = default;
  virtual std::array<double, kNumClasses> predict(const Eigen::Ref<const Eigen::VectorXd>& features) const = 0;
};

struct PointwiseTrainConfig {
  std::size_t context_frames = 100;
  std::size_t frame_stride = 10;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
  double l2 = 1e-4;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static PointwiseTrainConfig from_json(const nlohmann::json& j);
  bool operator==(const PointwiseTrainConfig&) const = default;
};

/// Multinomial logistic regression over standardized features.
class LogisticRegression final : public PointwiseClassifier {
 public:
  LogisticRegression() = default;
  /// Zero weights and identity standardization.
  explicit LogisticRegression(std::size_t n_features);

  std::array<double, kNumClasses> predict(const Eigen::Ref<const Eigen::VectorXd>& features) const override;
  /// Mean cross-entropy over rows of `x`.
  double loss(const Eigen::MatrixXd& x, const std::vector<PrimitiveClass>& labels) const;

  std::size_t n_features() const { return static_cast<std::size_t>(feature_mean_.size()); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& bias() const { return bias_; }

  nlohmann::json to_json() const;
  static LogisticRegression from_json(const nlohmann::json& j);

  friend LogisticRegression train_logistic(const Eigen::MatrixXd& x, const std::vector<PrimitiveClass>& labels,
                                           const PointwiseTrainConfig& config);

 private:
  Eigen::VectorXd feature_mean_;
  Eigen::VectorXd feature_scale_;
  Eigen::MatrixXd weights_;  // classes × features
  Eigen::VectorXd bias_;
};

/// Mini-batch Adam on the mean cross-entropy plus an L2 penalty. Throws Error(divergence) on a non-finite loss.
LogisticRegression train_logistic(const Eigen::MatrixXd& x, const std::vector<PrimitiveClass>& labels,
                                  const PointwiseTrainConfig& config);

/// Samples labeled frames (every `frame_stride`) from normalized recordings and fits the classifier.
LogisticRegression train_pointwise(const std::vector<LabeledRecording>& normalized_train,
                                   const PointwiseTrainConfig& config);

/// Class label of every frame according to the segment tiling.
std::vector<PrimitiveClass> frame_classes(const std::vector<PrimitiveSegment>& segments, std::size_t frame_count);

/// Per-frame probabilities for a normalized recording.
PointwiseTrack pointwise_track(const Frames& frames, const PointwiseClassifier& classifier, std::size_t context_frames);

void save_track_csv(const PointwiseTrack& track, const std::filesystem::path& path);

}  // namespace primseq
