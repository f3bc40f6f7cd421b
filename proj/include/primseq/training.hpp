#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "primseq/eval.hpp"
#include "primseq/model.hpp"

namespace primseq {

struct TrainConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 10;
  // Stop as soon as validation AER reaches this value (used for overfit checks).
  std::optional<double> target_aer;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  bool operator==(const TrainConfig&) const = default;
};

/// Adam with bias correction:
///   m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²,
///   θ ← θ − lr · m̂ / (√v̂ + ε),  m̂ = m/(1−β1^t), v̂ = v/(1−β2^t).
class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

/// A normalized window with its target sequence.
struct Example {
  Frames frames;
  PrimitiveSequence target;
  std::string recording_id;
  std::string subject;
  std::string activity;
  std::size_t core_begin = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_aer = 0.0;
  std::optional<double> val_sensitivity;
  std::optional<double> val_fdr;
};

struct FitResult {
  ModelParams params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_aer = 0.0;
};

nlohmann::json training_log_to_json(const FitResult& r);

/// Micro AER of single-model greedy decodes over `examples`, plus pooled tallies.
struct ValidationScore {
  double aer = 0.0;
  OutcomeTallies tallies;
};
ValidationScore validate_model(const ModelParams& params, const std::vector<Example>& examples,
                               std::size_t workers = 0);

/// Mini-batch Adam on sequence_loss with per-epoch validation AER, keeping the
/// best-AER parameters and stopping after `early_stop_patience` epochs
/// without improvement. Pure function of its inputs. Throws Error(divergence)
/// on a non-finite loss.
using EpochCallback = std::function<void(const EpochLog&)>;

FitResult fit_model(const std::vector<Example>& train, const std::vector<Example>& val, const ModelConfig& model_config,
                    const TrainConfig& train_config, std::size_t workers = 0, const EpochCallback& on_epoch = {});

/// Worker count from PRIMSEQ_WORKERS, defaulting to the hardware concurrency.
std::size_t default_workers();

}  // namespace primseq
