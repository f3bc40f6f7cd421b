#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "primseq/dataset.hpp"
#include "primseq/preprocess.hpp"
#include "primseq/primitive.hpp"

namespace primseq {

// Decoder vocabulary: the five primitive codes followed by SOS and EOS.
inline constexpr std::size_t kVocabSize = 7;
inline constexpr std::size_t kSosToken = 5;
inline constexpr std::size_t kEosToken = 6;

using TokenDistribution = std::array<double, kVocabSize>;

struct ModelConfig {
  std::size_t input_dim = 77;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 16;
  // Non-overlapping temporal average pooling in front of the encoder; 1 = off.
  std::size_t frame_pool = 1;
  std::size_t max_tokens = 16;
  std::string cell = "gru";

  std::size_t max_decode_len() const { return max_tokens + 1; }
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

/// All weights of the encoder-decoder in one contiguous vector, with named
/// row-major views. Gradients use the same layout.
class ModelParams {
 public:
  using MatrixMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

  enum Tensor : std::size_t {
    enc_fwd_w, enc_fwd_u, enc_fwd_bx, enc_fwd_bh,
    enc_bwd_w, enc_bwd_u, enc_bwd_bx, enc_bwd_bh,
    ctx_w, ctx_b,
    embedding,
    dec_w, dec_u, dec_bx, dec_bh,
    out_w, out_b,
    tensor_count
  };

  struct TensorInfo {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
  };

  /// All-zero parameters for the default config.
  ModelParams() : ModelParams(ModelConfig{}) {}
  /// All-zero parameters.
  explicit ModelParams(ModelConfig config);
  /// Uniform in [-1/sqrt(hidden), +1/sqrt(hidden)].
  static ModelParams random(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<TensorInfo>& tensors() const { return layout_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  MatrixMap matrix(Tensor t);
  ConstMatrixMap matrix(Tensor t) const;
  VectorMap vector(Tensor t);
  ConstVectorMap vector(Tensor t) const;

  bool all_finite() const { return values_.allFinite(); }

 private:
  ModelConfig config_;
  std::vector<TensorInfo> layout_;
  Eigen::VectorXd values_;
};

struct DecoderState {
  Eigen::VectorXd h;
};

/// Numerically stable softmax.
TokenDistribution softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Averages frames in non-overlapping groups of `pool` rows (a short final group is averaged over its size).
Frames pool_frames(const Frames& frames, std::size_t pool);

/// Context vector from a normalized window: tanh(W [h_fwd; h_bwd] + b).
Eigen::VectorXd encode(const ModelParams& params, const Frames& window_frames);

DecoderState init_decoder(const Eigen::VectorXd& context);

struct StepOutput {
  TokenDistribution probabilities{};
  DecoderState state;
};

/// One decoder step. Throws Error(invalid_token) for tokens outside the vocabulary.
StepOutput decode_step(const ModelParams& params, const DecoderState& state, std::size_t prev_token);

/// Single-model greedy decode; stops at EOS or max_decode_len, ties go to the lowest code.
PrimitiveSequence greedy_decode(const ModelParams& params, const Frames& window_frames);

/// Mean over decoder steps of -log p(correct token), with teacher forcing.
double sequence_loss(const ModelParams& params, const Frames& window_frames, const PrimitiveSequence& target);

/// sequence_loss, adding `scale` × its gradient into `grad` (same layout as params).
double accumulate_loss_gradient(const ModelParams& params, const Frames& window_frames,
                                const PrimitiveSequence& target, ModelParams& grad, double scale = 1.0);

struct GradCheckResult {
  double max_relative_error = 0.0;
  double analytic_gradient_norm = 0.0;
  std::size_t checked = 0;
};

/// Central finite differences on a seeded random subset of `samples` parameters.
GradCheckResult grad_check(const ModelParams& params, const Frames& window_frames, const PrimitiveSequence& target,
                           double epsilon = 1e-5, std::size_t samples = 200, std::uint64_t seed = 0);

/// One fold model with the normalization fitted on its own training subjects.
struct EnsembleMember {
  ModelParams params;
  NormalizationStats stats;
};

struct EnsembleModel {
  std::vector<EnsembleMember> members;

  /// Throws Error(invalid_argument) when empty or when members disagree on ModelConfig.
  void validate() const;
  const ModelConfig& config() const;
};

}  // namespace primseq
