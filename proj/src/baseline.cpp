#include "primseq/baseline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "primseq/error.hpp"
#include "primseq/training.hpp"

namespace primseq {

using nlohmann::json;

StatFeatures extract_features(const Frames& frames, std::size_t t, std::size_t context_frames) {
  const auto n = static_cast<std::ptrdiff_t>(frames.rows());
  if (n == 0) throw Error(ErrorCode::invalid_argument, "no frames");
  const auto ctx = static_cast<std::ptrdiff_t>(std::max<std::size_t>(context_frames, 1));
  const auto first = static_cast<std::ptrdiff_t>(t) - ctx / 2;
  const auto lo = std::clamp<std::ptrdiff_t>(first, 0, n - 1);
  const auto hi = std::clamp<std::ptrdiff_t>(first + ctx, lo + 1, n);
  const auto block = frames.middleRows(lo, hi - lo);
  const double count = static_cast<double>(hi - lo);

  StatFeatures f;
  f.values.resize(frames.cols() * static_cast<Eigen::Index>(kStatsPerChannel));
  for (Eigen::Index c = 0; c < frames.cols(); ++c) {
    const auto col = block.col(c);
    const double mean = col.sum() / count;
    const double var = (col.array() - mean).square().sum() / count;
    const double rms = std::sqrt(col.squaredNorm() / count);
    auto* out = f.values.data() + c * static_cast<Eigen::Index>(kStatsPerChannel);
    out[0] = mean;
    out[1] = col.maxCoeff();
    out[2] = col.minCoeff();
    out[3] = std::sqrt(var);
    out[4] = rms;
  }
  return f;
}

Eigen::MatrixXd feature_matrix(const Frames& frames, std::size_t context_frames, std::size_t stride) {
  stride = std::max<std::size_t>(stride, 1);
  const std::size_t n = static_cast<std::size_t>(frames.rows());
  const std::size_t rows = (n + stride - 1) / stride;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), frames.cols() * static_cast<Eigen::Index>(kStatsPerChannel));
  for (std::size_t i = 0; i < rows; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = extract_features(frames, i * stride, context_frames).values.transpose();
  }
  return out;
}

// --- Kaiser smoothing --------------------------------------------------------

double bessel_i0(double x) {
  // I0(x) = Σ ((x/2)^k / k!)², stopped once a term is negligible against the sum
  const double half = x / 2.0;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 1000; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

std::vector<double> kaiser_weights(std::size_t length, double beta) {
  if (length == 0 || length % 2 == 0) {
    throw Error(ErrorCode::invalid_argument, "Kaiser window length must be odd and positive");
  }
  if (!(beta >= 0.0)) throw Error(ErrorCode::invalid_argument, "Kaiser beta must be non-negative");
  std::vector<double> w(length, 1.0);
  if (length > 1) {
    const double denom = bessel_i0(beta);
    const double span = static_cast<double>(length - 1);
    for (std::size_t k = 0; k <= (length - 1) / 2; ++k) {
      const double r = 2.0 * static_cast<double>(k) / span - 1.0;
      const double v = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
      w[k] = v;
      w[length - 1 - k] = v;
    }
  }
  // pairwise sum keeps w[k] == w[L-1-k] after division
  double total = 0.0;
  for (std::size_t k = 0; k < length / 2; ++k) total += w[k] + w[length - 1 - k];
  total += w[length / 2];
  for (auto& v : w) v /= total;
  return w;
}

double kaiser_beta_for_attenuation(double a) {
  if (a > 50.0) return 0.1102 * (a - 8.7);
  if (a >= 21.0) return 0.5842 * std::pow(a - 21.0, 0.4) + 0.07886 * (a - 21.0);
  return 0.0;
}

KaiserSmoother::KaiserSmoother(std::size_t length, double b)
    : window_length(length), beta(b), weights(kaiser_weights(length, b)) {}

PointwiseTrack smooth(const PointwiseTrack& track, const KaiserSmoother& smoother) {
  const auto n = static_cast<std::ptrdiff_t>(track.rows());
  const auto len = static_cast<std::ptrdiff_t>(smoother.weights.size());
  const auto half = len / 2;
  PointwiseTrack out(track.rows(), static_cast<Eigen::Index>(kNumClasses));
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    Eigen::Matrix<double, 1, static_cast<int>(kNumClasses)> acc =
        Eigen::Matrix<double, 1, static_cast<int>(kNumClasses)>::Zero();
    double wsum = 0.0;
    for (std::ptrdiff_t k = 0; k < len; ++k) {
      const auto src = t + k - half;
      if (src < 0 || src >= n) continue;
      const double w = smoother.weights[static_cast<std::size_t>(k)];
      acc += w * track.row(src);
      wsum += w;
    }
    acc /= wsum;
    out.row(t) = acc / acc.sum();
  }
  return out;
}

std::vector<PrimitiveClass> frame_labels(const PointwiseTrack& track) {
  std::vector<PrimitiveClass> labels(static_cast<std::size_t>(track.rows()));
  for (Eigen::Index t = 0; t < track.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < track.cols(); ++c) {
      if (track(t, c) > track(t, best)) best = c;
    }
    labels[static_cast<std::size_t>(t)] = static_cast<PrimitiveClass>(best);
  }
  return labels;
}

PrimitiveSequence run_length_collapse(const std::vector<PrimitiveClass>& labels) {
  PrimitiveSequence out;
  for (auto l : labels) {
    if (out.empty() || out.back() != l) out.push_back(l);
  }
  return out;
}

std::vector<PrimitiveSequence> collapse(const PointwiseTrack& track,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& core_ranges) {
  const auto labels = frame_labels(track);
  std::vector<PrimitiveSequence> out;
  out.reserve(core_ranges.size());
  for (const auto& [begin, end] : core_ranges) {
    if (begin > end || end > labels.size()) throw Error(ErrorCode::invalid_argument, "core range outside the track");
    out.push_back(run_length_collapse(std::vector<PrimitiveClass>(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                                                  labels.begin() + static_cast<std::ptrdiff_t>(end))));
  }
  return out;
}

// --- pointwise classifier ----------------------------------------------------

json PointwiseTrainConfig::to_json() const {
  return {{"context_frames", context_frames}, {"frame_stride", frame_stride}, {"epochs", epochs},
          {"batch_size", batch_size},         {"learning_rate", learning_rate}, {"l2", l2},
          {"seed", seed}};
}

PointwiseTrainConfig PointwiseTrainConfig::from_json(const json& j) {
  PointwiseTrainConfig c;
  c.context_frames = j.value("context_frames", c.context_frames);
  c.frame_stride = j.value("frame_stride", c.frame_stride);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.l2 = j.value("l2", c.l2);
  c.seed = j.value("seed", c.seed);
  if (c.frame_stride == 0 || c.batch_size == 0 || c.context_frames == 0 || !(c.learning_rate > 0.0)) {
    throw Error(ErrorCode::config, "invalid pointwise training config");
  }
  return c;
}

LogisticRegression::LogisticRegression(std::size_t n_features)
    : feature_mean_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_features))),
      feature_scale_(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_features))),
      weights_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumClasses), static_cast<Eigen::Index>(n_features))),
      bias_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kNumClasses))) {}

namespace {

std::array<double, kNumClasses> softmax5(const Eigen::VectorXd& logits) {
  std::array<double, kNumClasses> p{};
  const double m = logits.maxCoeff();
  double s = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p[c] = std::exp(logits[static_cast<Eigen::Index>(c)] - m);
    s += p[c];
  }
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace

std::array<double, kNumClasses> LogisticRegression::predict(const Eigen::Ref<const Eigen::VectorXd>& features) const {
  if (features.size() != feature_mean_.size()) throw Error(ErrorCode::dimension_mismatch, "feature length");
  const Eigen::VectorXd z = (features - feature_mean_).cwiseQuotient(feature_scale_);
  return softmax5(weights_ * z + bias_);
}

double LogisticRegression::loss(const Eigen::MatrixXd& x, const std::vector<PrimitiveClass>& labels) const {
  if (static_cast<std::size_t>(x.rows()) != labels.size() || labels.empty()) {
    throw Error(ErrorCode::dimension_mismatch, "feature rows and labels differ");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    total -= std::log(predict(x.row(i).transpose())[code_of(labels[static_cast<std::size_t>(i)])]);
  }
  return total / static_cast<double>(x.rows());
}

json LogisticRegression::to_json() const {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json w = json::array();
  for (Eigen::Index c = 0; c < weights_.rows(); ++c) w.push_back(vec(weights_.row(c).transpose()));
  return {{"type", "logistic_regression"},
          {"feature_mean", vec(feature_mean_)},
          {"feature_scale", vec(feature_scale_)},
          {"weights", w},
          {"bias", vec(bias_)}};
}

LogisticRegression LogisticRegression::from_json(const json& j) {
  try {
    const auto mean = j.at("feature_mean").get<std::vector<double>>();
    LogisticRegression m(mean.size());
    m.feature_mean_ = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    const auto scale = j.at("feature_scale").get<std::vector<double>>();
    const auto bias = j.at("bias").get<std::vector<double>>();
    const auto& w = j.at("weights");
    if (scale.size() != mean.size() || bias.size() != kNumClasses || w.size() != kNumClasses) {
      throw Error(ErrorCode::dimension_mismatch, "logistic regression shapes");
    }
    m.feature_scale_ = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    m.bias_ = Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const auto row = w[c].get<std::vector<double>>();
      if (row.size() != mean.size()) throw Error(ErrorCode::dimension_mismatch, "logistic regression row");
      m.weights_.row(static_cast<Eigen::Index>(c)) =
          Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("classifier: ") + e.what());
  }
}

LogisticRegression train_logistic(const Eigen::MatrixXd& x, const std::vector<PrimitiveClass>& labels,
                                  const PointwiseTrainConfig& config) {
  if (x.rows() == 0 || static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw Error(ErrorCode::invalid_argument, "need one label per feature row");
  }
  const auto n = x.rows();
  const auto f = x.cols();
  LogisticRegression model(static_cast<std::size_t>(f));
  model.feature_mean_ = x.colwise().mean().transpose();
  for (Eigen::Index j = 0; j < f; ++j) {
    const double sd = std::sqrt((x.col(j).array() - model.feature_mean_[j]).square().mean());
    model.feature_scale_[j] = sd < kMinStd ? 1.0 : sd;
  }
  const Eigen::MatrixXd z =
      (x.rowwise() - model.feature_mean_.transpose()).array().rowwise() / model.feature_scale_.transpose().array();

  const auto k = static_cast<Eigen::Index>(kNumClasses);
  const Eigen::Index n_params = k * f + k;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n_params);
  {
    std::mt19937_64 rng(mix_seed(config.seed, 30));
    std::uniform_real_distribution<double> dist(-0.01, 0.01);
    for (Eigen::Index i = 0; i < k * f; ++i) theta[i] = dist(rng);
  }
  Adam adam(static_cast<std::size_t>(n_params), config.learning_rate);
  Eigen::VectorXd grad(n_params);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, 31, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      Eigen::Map<Eigen::MatrixXd> w(theta.data(), k, f);
      Eigen::Map<Eigen::VectorXd> bias(theta.data() + k * f, k);
      grad.setZero();
      Eigen::Map<Eigen::MatrixXd> gw(grad.data(), k, f);
      Eigen::Map<Eigen::VectorXd> gb(grad.data() + k * f, k);
      const double inv = 1.0 / static_cast<double>(end - b);
      double batch_loss = 0.0;
      for (std::size_t i = b; i < end; ++i) {
        const auto row = order[i];
        const auto p = softmax5(w * z.row(row).transpose() + bias);
        const auto label = code_of(labels[static_cast<std::size_t>(row)]);
        batch_loss -= std::log(p[label]);
        Eigen::VectorXd d(k);
        for (Eigen::Index c = 0; c < k; ++c) d[c] = (p[static_cast<std::size_t>(c)] - (static_cast<std::size_t>(c) == label ? 1.0 : 0.0)) * inv;
        gw.noalias() += d * z.row(row);
        gb += d;
      }
      gw += config.l2 * w;
      if (!std::isfinite(batch_loss) || !grad.allFinite()) {
        throw Error(ErrorCode::divergence, "pointwise classifier loss is not finite");
      }
      adam.step(theta, grad);
    }
  }
  model.weights_ = Eigen::Map<const Eigen::MatrixXd>(theta.data(), k, f);
  model.bias_ = theta.tail(k);
  return model;
}

std::vector<PrimitiveClass> frame_classes(const std::vector<PrimitiveSegment>& segments, std::size_t frame_count) {
  std::vector<PrimitiveClass> labels(frame_count, PrimitiveClass::idle);
  for (const auto& s : segments) {
    for (std::size_t t = s.start; t < std::min(s.end, frame_count); ++t) labels[t] = s.cls;
  }
  return labels;
}

LogisticRegression train_pointwise(const std::vector<LabeledRecording>& normalized_train,
                                   const PointwiseTrainConfig& config) {
  if (normalized_train.empty()) throw Error(ErrorCode::invalid_argument, "no training recordings");
  std::vector<Eigen::MatrixXd> blocks;
  std::vector<PrimitiveClass> labels;
  Eigen::Index rows = 0;
  for (const auto& rec : normalized_train) {
    blocks.push_back(feature_matrix(rec.recording.frames, config.context_frames, config.frame_stride));
    const auto cls = frame_classes(rec.segments, rec.recording.frame_count());
    for (std::size_t t = 0; t < cls.size(); t += config.frame_stride) labels.push_back(cls[t]);
    rows += blocks.back().rows();
  }
  Eigen::MatrixXd x(rows, blocks.front().cols());
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    x.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return train_logistic(x, labels, config);
}

PointwiseTrack pointwise_track(const Frames& frames, const PointwiseClassifier& classifier, std::size_t context_frames) {
  PointwiseTrack track(frames.rows(), static_cast<Eigen::Index>(kNumClasses));
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    const auto p = classifier.predict(extract_features(frames, static_cast<std::size_t>(t), context_frames).values);
    for (std::size_t c = 0; c < kNumClasses; ++c) track(t, static_cast<Eigen::Index>(c)) = p[c];
  }
  return track;
}

void save_track_csv(const PointwiseTrack& track, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << "frame";
  for (auto c : kAllClasses) out << ',' << to_string(c);
  out << '\n';
  char buf[32];
  for (Eigen::Index t = 0; t < track.rows(); ++t) {
    out << t;
    for (Eigen::Index c = 0; c < track.cols(); ++c) {
      auto res = std::to_chars(buf, buf + sizeof(buf), track(t, c));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

}  // namespace primseq
