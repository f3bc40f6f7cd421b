#include "primseq/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <thread>

#include "primseq/error.hpp"
#include "primseq/parallel.hpp"

namespace primseq {

using nlohmann::json;

namespace {
// Examples per gradient chunk; fixed so the reduction order never depends on the worker count.
constexpr std::size_t kChunk = 4;
}  // namespace

std::size_t default_workers() {
  if (const char* env = std::getenv("PRIMSEQ_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "learning_rate must be positive");
  if (early_stop_patience < 1) throw Error(ErrorCode::invalid_argument, "early_stop_patience must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::invalid_argument, "batch_size must be >= 1");
  if (max_epochs < 1) throw Error(ErrorCode::invalid_argument, "max_epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "invalid Adam hyperparameters");
  }
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"target_aer", target_aer ? json(*target_aer) : json(nullptr)},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  if (j.contains("target_aer") && !j.at("target_aer").is_null()) c.target_aer = j.at("target_aer").get<double>();
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Adam::Adam(std::size_t n, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(ErrorCode::dimension_mismatch, "Adam state size differs from parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

json training_log_to_json(const FitResult& r) {
  json epochs = json::array();
  for (const auto& e : r.log) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_aer", e.val_aer},
                      {"val_sensitivity", e.val_sensitivity ? json(*e.val_sensitivity) : json(nullptr)},
                      {"val_fdr", e.val_fdr ? json(*e.val_fdr) : json(nullptr)}});
  }
  return {{"best_epoch", r.best_epoch}, {"best_aer", r.best_aer}, {"epochs", epochs}};
}

ValidationScore validate_model(const ModelParams& params, const std::vector<Example>& examples,
                               std::size_t workers) {
  std::vector<OutcomeTallies> per(examples.size());
  parallel_for(examples.size(), workers == 0 ? default_workers() : workers, [&](std::size_t i) {
    per[i] = tally(align(examples[i].target, greedy_decode(params, examples[i].frames)));
  });
  ValidationScore s;
  for (const auto& t : per) s.tallies += t;
  const auto counts = overall_counts(s.tallies);
  s.aer = counts.gt_length == 0 ? 0.0
                                : static_cast<double>(counts.edit_distance) / static_cast<double>(counts.gt_length);
  return s;
}

FitResult fit_model(const std::vector<Example>& train, const std::vector<Example>& val, const ModelConfig& model_config,
                    const TrainConfig& cfg, std::size_t workers, const EpochCallback& on_epoch) {
  cfg.validate();
  model_config.validate();
  if (train.empty()) throw Error(ErrorCode::invalid_argument, "no training examples");
  if (val.empty()) throw Error(ErrorCode::invalid_argument, "no validation examples");
  if (workers == 0) workers = default_workers();

  FitResult result{ModelParams::random(model_config, cfg.seed), {}, 0, 0.0};
  ModelParams params = result.params;
  Adam adam(params.size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  const std::size_t max_chunks = (cfg.batch_size + kChunk - 1) / kChunk;
  std::vector<ModelParams> chunk_grads(max_chunks, ModelParams(model_config));
  std::vector<double> chunk_loss(max_chunks);
  ModelParams grad(model_config);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::optional<double> best;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 22, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      // accumulate in window-origin order
      std::sort(batch.begin(), batch.end());
      const double scale = 1.0 / static_cast<double>(batch.size());
      const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;

      parallel_for(n_chunks, workers, [&](std::size_t c) {
        auto& g = chunk_grads[c];
        g.values().setZero();
        double loss = 0.0;
        for (std::size_t k = c * kChunk; k < std::min(batch.size(), (c + 1) * kChunk); ++k) {
          const auto& ex = train[batch[k]];
          loss += accumulate_loss_gradient(params, ex.frames, ex.target, g, scale);
        }
        chunk_loss[c] = loss;
      });

      grad.values().setZero();
      double batch_loss = 0.0;
      for (std::size_t c = 0; c < n_chunks; ++c) {
        grad.values() += chunk_grads[c].values();
        batch_loss += chunk_loss[c];
      }
      if (!std::isfinite(batch_loss) || !grad.all_finite()) {
        throw Error(ErrorCode::divergence, "non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += batch_loss;
      adam.step(params.values(), grad.values());
    }
    if (!params.all_finite()) throw Error(ErrorCode::divergence, "non-finite parameters at epoch " + std::to_string(epoch));

    const auto score = validate_model(params, val, workers);
    const auto m = compute_metrics(score.tallies);
    result.log.push_back({epoch, epoch_loss / static_cast<double>(train.size()), score.aer, m.sensitivity, m.fdr});
    if (on_epoch) on_epoch(result.log.back());

    if (!best || score.aer < *best) {
      best = score.aer;
      since_best = 0;
      result.params = params;
      result.best_epoch = epoch;
      result.best_aer = score.aer;
    } else {
      ++since_best;
    }
    if (cfg.target_aer && score.aer <= *cfg.target_aer) break;
    if (since_best >= cfg.early_stop_patience) break;
  }
  return result;
}

}  // namespace primseq
