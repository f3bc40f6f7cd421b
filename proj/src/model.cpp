#include "primseq/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "primseq/error.hpp"

namespace primseq {

using nlohmann::json;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// --- config ----------------------------------------------------------------

void ModelConfig::validate() const {
  if (input_dim == 0) throw Error(ErrorCode::invalid_argument, "input_dim must be positive");
  if (hidden_dim == 0) throw Error(ErrorCode::invalid_argument, "hidden_dim must be positive");
  if (embed_dim == 0) throw Error(ErrorCode::invalid_argument, "embed_dim must be positive");
  if (frame_pool == 0) throw Error(ErrorCode::invalid_argument, "frame_pool must be positive");
  if (max_tokens == 0) throw Error(ErrorCode::invalid_argument, "max_tokens must be positive");
  if (cell != "gru") throw Error(ErrorCode::invalid_argument, "unsupported recurrent cell '" + cell + "'");
}

json ModelConfig::to_json() const {
  return {{"input_dim", input_dim},   {"hidden_dim", hidden_dim}, {"embed_dim", embed_dim},
          {"frame_pool", frame_pool}, {"max_tokens", max_tokens}, {"cell", cell},
          {"vocab_size", kVocabSize}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.frame_pool = j.value("frame_pool", c.frame_pool);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.cell = j.value("cell", c.cell);
  if (j.contains("vocab_size") && j.at("vocab_size").get<std::size_t>() != kVocabSize) {
    throw Error(ErrorCode::config, "vocabulary size is fixed at 7");
  }
  c.validate();
  return c;
}

// --- parameters ------------------------------------------------------------

ModelParams::ModelParams(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t h = config_.hidden_dim;
  const std::size_t in = config_.input_dim;
  const std::size_t e = config_.embed_dim;
  const std::vector<std::tuple<std::string, std::size_t, std::size_t>> shapes = {
      {"encoder.forward.w", 3 * h, in}, {"encoder.forward.u", 3 * h, h},
      {"encoder.forward.bx", 3 * h, 1}, {"encoder.forward.bh", 3 * h, 1},
      {"encoder.backward.w", 3 * h, in}, {"encoder.backward.u", 3 * h, h},
      {"encoder.backward.bx", 3 * h, 1}, {"encoder.backward.bh", 3 * h, 1},
      {"context.w", h, 2 * h},          {"context.b", h, 1},
      {"embedding", kVocabSize, e},
      {"decoder.w", 3 * h, e},          {"decoder.u", 3 * h, h},
      {"decoder.bx", 3 * h, 1},         {"decoder.bh", 3 * h, 1},
      {"output.w", kVocabSize, h},      {"output.b", kVocabSize, 1}};
  std::size_t offset = 0;
  for (const auto& [name, rows, cols] : shapes) {
    layout_.push_back({name, rows, cols, offset});
    offset += rows * cols;
  }
  values_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

ModelParams ModelParams::random(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  std::mt19937_64 rng(mix_seed(seed, 20));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.values_.size(); ++i) p.values_[i] = dist(rng);
  return p;
}

ModelParams::MatrixMap ModelParams::matrix(Tensor t) {
  const auto& info = layout_[t];
  return {values_.data() + info.offset, static_cast<Eigen::Index>(info.rows), static_cast<Eigen::Index>(info.cols)};
}

ModelParams::ConstMatrixMap ModelParams::matrix(Tensor t) const {
  const auto& info = layout_[t];
  return {values_.data() + info.offset, static_cast<Eigen::Index>(info.rows), static_cast<Eigen::Index>(info.cols)};
}

ModelParams::VectorMap ModelParams::vector(Tensor t) {
  const auto& info = layout_[t];
  return {values_.data() + info.offset, static_cast<Eigen::Index>(info.rows * info.cols)};
}

ModelParams::ConstVectorMap ModelParams::vector(Tensor t) const {
  const auto& info = layout_[t];
  return {values_.data() + info.offset, static_cast<Eigen::Index>(info.rows * info.cols)};
}

// --- recurrent core --------------------------------------------------------

namespace {

struct GruWeights {
  ModelParams::ConstMatrixMap w;
  ModelParams::ConstMatrixMap u;
  ModelParams::ConstVectorMap bx;
  ModelParams::ConstVectorMap bh;
};

struct GruGrads {
  ModelParams::MatrixMap w;
  ModelParams::MatrixMap u;
  ModelParams::VectorMap bx;
  ModelParams::VectorMap bh;
};

GruWeights gru_weights(const ModelParams& p, ModelParams::Tensor first) {
  using T = ModelParams::Tensor;
  return {p.matrix(first), p.matrix(static_cast<T>(first + 1)), p.vector(static_cast<T>(first + 2)),
          p.vector(static_cast<T>(first + 3))};
}

GruGrads gru_grads(ModelParams& p, ModelParams::Tensor first) {
  using T = ModelParams::Tensor;
  return {p.matrix(first), p.matrix(static_cast<T>(first + 1)), p.vector(static_cast<T>(first + 2)),
          p.vector(static_cast<T>(first + 3))};
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-step quantities, indexed by original sequence position.
struct GruTrace {
  RowMatrix h_prev;  // T × H
  RowMatrix h_out;   // T × H
  RowMatrix r, z, n, ahn;
  Eigen::VectorXd h_last;
};

// h' = (1 - z) ⊙ n + z ⊙ h, with r, z, n computed from x projections `xp` (T × 3H, bias included).
void gru_step(const GruWeights& g, const double* xp, const Eigen::VectorXd& h, Eigen::VectorXd& h_next, double* r_out,
              double* z_out, double* n_out, double* ahn_out) {
  const Eigen::Index hd = h.size();
  const Eigen::VectorXd ah = g.u * h + g.bh;
  h_next.resize(hd);
  for (Eigen::Index k = 0; k < hd; ++k) {
    const double r = sigmoid(xp[k] + ah[k]);
    const double z = sigmoid(xp[hd + k] + ah[hd + k]);
    const double n = std::tanh(xp[2 * hd + k] + r * ah[2 * hd + k]);
    h_next[k] = (1.0 - z) * n + z * h[k];
    if (r_out) {
      r_out[k] = r;
      z_out[k] = z;
      n_out[k] = n;
      ahn_out[k] = ah[2 * hd + k];
    }
  }
}

RowMatrix input_projection(const GruWeights& g, const RowMatrix& x) {
  RowMatrix xp = x * g.w.transpose();
  xp.rowwise() += g.bx.transpose();
  return xp;
}

void gru_forward(const GruWeights& g, const RowMatrix& x, const Eigen::VectorXd& h0, bool reverse, GruTrace& tr) {
  const Eigen::Index steps = x.rows();
  const Eigen::Index hd = h0.size();
  const RowMatrix xp = input_projection(g, x);
  tr.h_prev.resize(steps, hd);
  tr.h_out.resize(steps, hd);
  tr.r.resize(steps, hd);
  tr.z.resize(steps, hd);
  tr.n.resize(steps, hd);
  tr.ahn.resize(steps, hd);
  Eigen::VectorXd h = h0;
  Eigen::VectorXd next;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    tr.h_prev.row(t) = h.transpose();
    gru_step(g, xp.row(t).data(), h, next, tr.r.row(t).data(), tr.z.row(t).data(), tr.n.row(t).data(),
             tr.ahn.row(t).data());
    h.swap(next);
    tr.h_out.row(t) = h.transpose();
  }
  tr.h_last = h;
}

Eigen::VectorXd gru_run(const GruWeights& g, const RowMatrix& x, const Eigen::VectorXd& h0, bool reverse) {
  const Eigen::Index steps = x.rows();
  const RowMatrix xp = input_projection(g, x);
  Eigen::VectorXd h = h0;
  Eigen::VectorXd next;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    gru_step(g, xp.row(t).data(), h, next, nullptr, nullptr, nullptr, nullptr);
    h.swap(next);
  }
  return h;
}

// Backpropagates through a traced sequence. `dh` enters as the gradient on the
// final state and leaves as the gradient on h0. `dh_out` (optional) adds
// per-step gradients on each output state. `dx` (optional) receives input gradients.
void gru_backward(const GruWeights& g, GruGrads& gg, const RowMatrix& x, const GruTrace& tr, const RowMatrix* dh_out,
                  bool reverse, Eigen::VectorXd& dh, RowMatrix* dx) {
  const Eigen::Index steps = x.rows();
  const Eigen::Index hd = dh.size();
  RowMatrix dax(steps, 3 * hd);
  RowMatrix dah(steps, 3 * hd);
  for (Eigen::Index k = steps - 1; k >= 0; --k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    if (dh_out) dh += dh_out->row(t).transpose();
    for (Eigen::Index i = 0; i < hd; ++i) {
      const double r = tr.r(t, i);
      const double z = tr.z(t, i);
      const double n = tr.n(t, i);
      const double d = dh[i];
      const double dn_pre = d * (1.0 - z) * (1.0 - n * n);
      const double dz_pre = d * (tr.h_prev(t, i) - n) * z * (1.0 - z);
      const double dr_pre = dn_pre * tr.ahn(t, i) * r * (1.0 - r);
      dax(t, i) = dr_pre;
      dax(t, hd + i) = dz_pre;
      dax(t, 2 * hd + i) = dn_pre;
      dah(t, i) = dr_pre;
      dah(t, hd + i) = dz_pre;
      dah(t, 2 * hd + i) = dn_pre * r;
      dh[i] = d * z;
    }
    dh.noalias() += g.u.transpose() * dah.row(t).transpose();
  }
  gg.w.noalias() += dax.transpose() * x;
  gg.u.noalias() += dah.transpose() * tr.h_prev;
  gg.bx += dax.colwise().sum().transpose();
  gg.bh += dah.colwise().sum().transpose();
  if (dx) dx->noalias() = dax * g.w;
}

struct EncoderTrace {
  RowMatrix x;
  GruTrace fwd;
  GruTrace bwd;
  Eigen::VectorXd concat;
  Eigen::VectorXd context;
};

void check_window(const ModelParams& params, const Frames& frames) {
  if (static_cast<std::size_t>(frames.cols()) != params.config().input_dim) {
    throw Error(ErrorCode::dimension_mismatch, "window has " + std::to_string(frames.cols()) +
                                                   " channels, model expects " +
                                                   std::to_string(params.config().input_dim));
  }
  if (frames.rows() == 0) throw Error(ErrorCode::dimension_mismatch, "empty window");
}

Eigen::VectorXd project_context(const ModelParams& p, const Eigen::VectorXd& concat) {
  return (p.matrix(ModelParams::ctx_w) * concat + p.vector(ModelParams::ctx_b)).array().tanh().matrix();
}

void encode_traced(const ModelParams& p, const Frames& frames, EncoderTrace& tr) {
  check_window(p, frames);
  const auto hd = static_cast<Eigen::Index>(p.config().hidden_dim);
  tr.x = pool_frames(frames, p.config().frame_pool);
  const Eigen::VectorXd h0 = Eigen::VectorXd::Zero(hd);
  gru_forward(gru_weights(p, ModelParams::enc_fwd_w), tr.x, h0, false, tr.fwd);
  gru_forward(gru_weights(p, ModelParams::enc_bwd_w), tr.x, h0, true, tr.bwd);
  tr.concat.resize(2 * hd);
  tr.concat << tr.fwd.h_last, tr.bwd.h_last;
  tr.context = project_context(p, tr.concat);
}

void check_token(std::size_t token) {
  if (token >= kVocabSize) throw Error(ErrorCode::invalid_token, "token id " + std::to_string(token));
}

void check_target(const PrimitiveSequence& target) {
  if (target.empty()) throw Error(ErrorCode::invalid_argument, "empty target sequence");
}

// Decoder inputs (SOS + target) and supervision (target + EOS).
void teacher_forcing(const PrimitiveSequence& target, std::vector<std::size_t>& inputs,
                     std::vector<std::size_t>& labels) {
  inputs.assign(1, kSosToken);
  labels.clear();
  for (auto c : target) {
    inputs.push_back(code_of(c));
    labels.push_back(code_of(c));
  }
  labels.push_back(kEosToken);
}

RowMatrix embed_tokens(const ModelParams& p, const std::vector<std::size_t>& tokens) {
  const auto emb = p.matrix(ModelParams::embedding);
  RowMatrix x(static_cast<Eigen::Index>(tokens.size()), emb.cols());
  for (std::size_t i = 0; i < tokens.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = emb.row(static_cast<Eigen::Index>(tokens[i]));
  return x;
}

}  // namespace

// --- public forward API ----------------------------------------------------

TokenDistribution softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  if (logits.size() != static_cast<Eigen::Index>(kVocabSize)) {
    throw Error(ErrorCode::dimension_mismatch, "softmax expects 7 logits");
  }
  TokenDistribution p{};
  const double m = logits.maxCoeff();
  double sum = 0.0;
  for (std::size_t i = 0; i < kVocabSize; ++i) {
    p[i] = std::exp(logits[static_cast<Eigen::Index>(i)] - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

Frames pool_frames(const Frames& frames, std::size_t pool) {
  if (pool <= 1) return frames;
  const auto rows = frames.rows();
  const auto groups = (rows + static_cast<Eigen::Index>(pool) - 1) / static_cast<Eigen::Index>(pool);
  Frames out(groups, frames.cols());
  for (Eigen::Index g = 0; g < groups; ++g) {
    const auto begin = g * static_cast<Eigen::Index>(pool);
    const auto count = std::min<Eigen::Index>(static_cast<Eigen::Index>(pool), rows - begin);
    out.row(g) = frames.middleRows(begin, count).colwise().sum() / static_cast<double>(count);
  }
  return out;
}

Eigen::VectorXd encode(const ModelParams& params, const Frames& window_frames) {
  check_window(params, window_frames);
  const auto hd = static_cast<Eigen::Index>(params.config().hidden_dim);
  const RowMatrix x = pool_frames(window_frames, params.config().frame_pool);
  const Eigen::VectorXd h0 = Eigen::VectorXd::Zero(hd);
  Eigen::VectorXd concat(2 * hd);
  concat << gru_run(gru_weights(params, ModelParams::enc_fwd_w), x, h0, false),
      gru_run(gru_weights(params, ModelParams::enc_bwd_w), x, h0, true);
  return project_context(params, concat);
}

DecoderState init_decoder(const Eigen::VectorXd& context) { return {context}; }

StepOutput decode_step(const ModelParams& params, const DecoderState& state, std::size_t prev_token) {
  check_token(prev_token);
  if (state.h.size() != static_cast<Eigen::Index>(params.config().hidden_dim)) {
    throw Error(ErrorCode::dimension_mismatch, "decoder state size");
  }
  const auto g = gru_weights(params, ModelParams::dec_w);
  const Eigen::VectorXd xp =
      g.w * params.matrix(ModelParams::embedding).row(static_cast<Eigen::Index>(prev_token)).transpose() + g.bx;
  StepOutput out;
  gru_step(g, xp.data(), state.h, out.state.h, nullptr, nullptr, nullptr, nullptr);
  const Eigen::VectorXd logits =
      params.matrix(ModelParams::out_w) * out.state.h + params.vector(ModelParams::out_b);
  out.probabilities = softmax(logits);
  return out;
}

PrimitiveSequence greedy_decode(const ModelParams& params, const Frames& window_frames) {
  PrimitiveSequence out;
  DecoderState state = init_decoder(encode(params, window_frames));
  std::size_t token = kSosToken;
  for (std::size_t step = 0; step < params.config().max_decode_len(); ++step) {
    auto s = decode_step(params, state, token);
    token = static_cast<std::size_t>(std::max_element(s.probabilities.begin(), s.probabilities.end()) -
                                     s.probabilities.begin());
    if (token == kEosToken) break;
    // SOS is never a valid prediction; treat it as termination as well
    if (token == kSosToken) break;
    out.push_back(class_from_code(token));
    state = std::move(s.state);
  }
  return out;
}

double sequence_loss(const ModelParams& params, const Frames& window_frames, const PrimitiveSequence& target) {
  check_target(target);
  DecoderState state = init_decoder(encode(params, window_frames));
  std::vector<std::size_t> inputs, labels;
  teacher_forcing(target, inputs, labels);
  double loss = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto s = decode_step(params, state, inputs[k]);
    loss -= std::log(s.probabilities[labels[k]]);
    state = std::move(s.state);
  }
  return loss / static_cast<double>(labels.size());
}

double accumulate_loss_gradient(const ModelParams& params, const Frames& window_frames,
                                const PrimitiveSequence& target, ModelParams& grad, double scale) {
  check_target(target);
  if (grad.size() != params.size()) throw Error(ErrorCode::dimension_mismatch, "gradient layout differs");
  const auto hd = static_cast<Eigen::Index>(params.config().hidden_dim);

  EncoderTrace enc;
  encode_traced(params, window_frames, enc);

  std::vector<std::size_t> inputs, labels;
  teacher_forcing(target, inputs, labels);
  const RowMatrix dec_x = embed_tokens(params, inputs);
  const auto dec_g = gru_weights(params, ModelParams::dec_w);
  GruTrace dec;
  gru_forward(dec_g, dec_x, enc.context, false, dec);

  const auto steps = static_cast<Eigen::Index>(labels.size());
  const auto out_w = params.matrix(ModelParams::out_w);
  const auto out_b = params.vector(ModelParams::out_b);
  RowMatrix dlogits(steps, static_cast<Eigen::Index>(kVocabSize));
  double loss = 0.0;
  const double step_scale = scale / static_cast<double>(steps);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::VectorXd logits = out_w * dec.h_out.row(k).transpose() + out_b;
    const auto p = softmax(logits);
    const auto label = labels[static_cast<std::size_t>(k)];
    loss -= std::log(p[label]);
    for (std::size_t v = 0; v < kVocabSize; ++v) {
      dlogits(k, static_cast<Eigen::Index>(v)) = (p[v] - (v == label ? 1.0 : 0.0)) * step_scale;
    }
  }
  grad.matrix(ModelParams::out_w).noalias() += dlogits.transpose() * dec.h_out;
  grad.vector(ModelParams::out_b) += dlogits.colwise().sum().transpose();
  const RowMatrix dh_out = dlogits * out_w;

  auto dec_gg = gru_grads(grad, ModelParams::dec_w);
  Eigen::VectorXd dh = Eigen::VectorXd::Zero(hd);
  RowMatrix dx;
  gru_backward(dec_g, dec_gg, dec_x, dec, &dh_out, false, dh, &dx);
  auto demb = grad.matrix(ModelParams::embedding);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    demb.row(static_cast<Eigen::Index>(inputs[i])) += dx.row(static_cast<Eigen::Index>(i));
  }

  // context = tanh(W concat + b); dh is now the gradient on the context
  const Eigen::VectorXd dpre = dh.array() * (1.0 - enc.context.array().square());
  grad.matrix(ModelParams::ctx_w).noalias() += dpre * enc.concat.transpose();
  grad.vector(ModelParams::ctx_b) += dpre;
  const Eigen::VectorXd dconcat = params.matrix(ModelParams::ctx_w).transpose() * dpre;

  Eigen::VectorXd dhf = dconcat.head(hd);
  Eigen::VectorXd dhb = dconcat.tail(hd);
  auto fwd_gg = gru_grads(grad, ModelParams::enc_fwd_w);
  auto bwd_gg = gru_grads(grad, ModelParams::enc_bwd_w);
  gru_backward(gru_weights(params, ModelParams::enc_fwd_w), fwd_gg, enc.x, enc.fwd, nullptr, false, dhf, nullptr);
  gru_backward(gru_weights(params, ModelParams::enc_bwd_w), bwd_gg, enc.x, enc.bwd, nullptr, true, dhb, nullptr);

  return loss / static_cast<double>(steps);
}

GradCheckResult grad_check(const ModelParams& params, const Frames& window_frames, const PrimitiveSequence& target,
                           double epsilon, std::size_t samples, std::uint64_t seed) {
  ModelParams grad(params.config());
  accumulate_loss_gradient(params, window_frames, target, grad);

  std::vector<std::size_t> idx(params.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 21));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(samples, idx.size()));
  std::sort(idx.begin(), idx.end());

  GradCheckResult result;
  result.analytic_gradient_norm = grad.values().norm();
  ModelParams probe = params;
  for (auto i : idx) {
    const auto k = static_cast<Eigen::Index>(i);
    const double orig = probe.values()[k];
    probe.values()[k] = orig + epsilon;
    const double up = sequence_loss(probe, window_frames, target);
    probe.values()[k] = orig - epsilon;
    const double down = sequence_loss(probe, window_frames, target);
    probe.values()[k] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = grad.values()[k];
    // absolute floor keeps vanishing gradients from amplifying round-off
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(numeric - analytic) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace primseq

namespace primseq {

void EnsembleModel::validate() const {
  if (members.empty()) throw Error(ErrorCode::invalid_argument, "ensemble has no members");
  for (const auto& m : members) {
    if (!(m.params.config() == members.front().params.config())) {
      throw Error(ErrorCode::invalid_argument, "ensemble members disagree on model config");
    }
    if (m.stats.channel_count() != m.params.config().input_dim) {
      throw Error(ErrorCode::dimension_mismatch, "normalization stats do not match model input_dim");
    }
  }
}

const ModelConfig& EnsembleModel::config() const {
  validate();
  return members.front().params.config();
}

}  // namespace primseq
