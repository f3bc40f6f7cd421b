#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "primseq/error.hpp"
#include "primseq/model.hpp"
#include "primseq/model_io.hpp"
#include "primseq/training.hpp"

using namespace primseq;

namespace {

ModelConfig tiny(std::size_t input = 3, std::size_t hidden = 4) {
  ModelConfig c;
  c.input_dim = input;
  c.hidden_dim = hidden;
  c.embed_dim = 3;
  c.max_tokens = 6;
  return c;
}

Frames random_frames(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Frames f(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index k = 0; k < f.size(); ++k) f.data()[k] = n(rng);
  return f;
}

}  // namespace

TEST_CASE("model config") {
  ModelConfig c;
  CHECK(c.input_dim == 77);
  CHECK(c.hidden_dim == 64);
  CHECK(c.max_decode_len() == c.max_tokens + 1);
  CHECK(ModelConfig::from_json(c.to_json()) == c);
  c.hidden_dim = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  // paper-scale hidden size is a legal value
  c.hidden_dim = 3072;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("encode") {
  SUBCASE("zero parameters give a zero context") {
    const ModelParams p(tiny());
    const auto ctx = encode(p, random_frames(12, 3, 1));
    CHECK(ctx.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("deterministic") {
    const auto p = ModelParams::random(tiny(), 4);
    const auto f = random_frames(10, 3, 2);
    CHECK(encode(p, f) == encode(p, f));
  }
  SUBCASE("matches the scalar recurrence") {
    const auto p = ModelParams::random(tiny(3, 5), 9);
    const auto f = random_frames(15, 3, 3);
    const auto ctx = encode(p, f);
    const auto ref = oracle::ScalarModel(p).encode(f);
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(ctx[static_cast<Eigen::Index>(k)] == doctest::Approx(ref[k]).epsilon(1e-12));
  }
  SUBCASE("shape mismatch") {
    const ModelParams p(tiny());
    CHECK_THROWS_AS(encode(p, random_frames(5, 4, 1)), Error);
  }
  SUBCASE("frame pooling averages groups") {
    Frames f(5, 1);
    f << 1, 2, 3, 4, 10;
    const auto g = pool_frames(f, 2);
    REQUIRE(g.rows() == 3);
    CHECK(g(0, 0) == 1.5);
    CHECK(g(1, 0) == 3.5);
    CHECK(g(2, 0) == 10.0);
  }
}

TEST_CASE("decode_step") {
  SUBCASE("zero parameters: uniform 1/7") {
    const ModelParams p(tiny());
    const auto out = decode_step(p, init_decoder(Eigen::VectorXd::Zero(4)), kSosToken);
    for (double v : out.probabilities) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  }
  SUBCASE("random params: distribution sums to 1, entries in (0,1), matches scalar oracle") {
    const auto p = ModelParams::random(tiny(), 21);
    const auto f = random_frames(8, 3, 5);
    DecoderState s = init_decoder(encode(p, f));
    oracle::ScalarModel ref(p);
    auto h = ref.encode(f);
    std::size_t tok = kSosToken;
    for (int step = 0; step < 4; ++step) {
      const auto out = decode_step(p, s, tok);
      const auto expect = ref.step(h, tok);
      double sum = 0.0;
      for (std::size_t v = 0; v < kVocabSize; ++v) {
        sum += out.probabilities[v];
        CHECK(out.probabilities[v] > 0.0);
        CHECK(out.probabilities[v] < 1.0);
        CHECK(out.probabilities[v] == doctest::Approx(expect[v]).epsilon(1e-12));
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      s = out.state;
      tok = static_cast<std::size_t>(step % 5);
    }
  }
  SUBCASE("invalid token") {
    const ModelParams p(tiny());
    try {
      decode_step(p, init_decoder(Eigen::VectorXd::Zero(4)), 7);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_token);
    }
  }
}

TEST_CASE("softmax: one logit at +20 dominates") {
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(7);
  logits[2] = 20.0;
  const auto p = softmax(logits);
  const double expect = std::exp(20.0) / (std::exp(20.0) + 6.0);
  CHECK(p[2] > 0.999);
  CHECK(p[2] == doctest::Approx(expect).epsilon(1e-14));
  CHECK(p[0] == doctest::Approx(1.0 / (std::exp(20.0) + 6.0)).epsilon(1e-12));
}

TEST_CASE("sequence_loss") {
  using P = PrimitiveClass;
  SUBCASE("uniform outputs: ln 7") {
    const ModelParams p(tiny());
    CHECK(sequence_loss(p, random_frames(6, 3, 1), {P::reach, P::idle}) ==
          doctest::Approx(std::log(7.0)).epsilon(1e-12));
  }
  SUBCASE("saturated correct logits: loss near 0 and gradient near 0") {
    // Zero context, hand-set weights: after SOS unit 0 opens and drives "transport";
    // after transport unit 1 opens and drives EOS while the update gate freezes unit 0.
    ModelConfig c = tiny();
    ModelParams p(c);
    const PrimitiveSequence target{P::transport};
    auto emb = p.matrix(ModelParams::embedding);
    emb(kSosToken, 0) = 1.0;
    emb(code_of(P::transport), 1) = 1.0;
    auto dw = p.matrix(ModelParams::dec_w);
    const auto H = static_cast<Eigen::Index>(c.hidden_dim);
    dw(2 * H + 0, 0) = 50.0;
    dw(2 * H + 1, 1) = 50.0;
    dw(H + 0, 1) = 50.0;
    auto ow = p.matrix(ModelParams::out_w);
    ow(code_of(P::transport), 0) = 60.0;
    ow(kEosToken, 1) = 200.0;
    const auto f = random_frames(4, 3, 2);
    const double loss = sequence_loss(p, f, target);
    CHECK(loss < 1e-12);
    const auto g = grad_check(p, f, target, 1e-5, 200, 1);
    CHECK(g.analytic_gradient_norm < 1e-8);
  }
  SUBCASE("hidden 4, 2-token target: equals the hand-unrolled computation") {
    const auto p = ModelParams::random(tiny(), 31);
    const auto f = random_frames(7, 3, 8);
    const PrimitiveSequence target{P::reposition, P::stabilize};
    CHECK(sequence_loss(p, f, target) == doctest::Approx(oracle::ScalarModel(p).loss(f, target)).epsilon(1e-12));
  }
  SUBCASE("empty target is rejected") {
    const ModelParams p(tiny());
    CHECK_THROWS_AS(sequence_loss(p, random_frames(3, 3, 1), {}), Error);
  }
}

TEST_CASE("grad_check") {
  using P = PrimitiveClass;
  const auto p = ModelParams::random(tiny(), 12);
  const auto f = random_frames(9, 3, 4);
  const PrimitiveSequence target{P::reach, P::idle, P::transport};
  const auto a = grad_check(p, f, target);
  CHECK(a.checked >= 200);
  CHECK(a.max_relative_error < 1e-4);
  const auto b = grad_check(p, f, target);
  CHECK(a.max_relative_error == b.max_relative_error);

  SUBCASE("gradient accumulation is linear in scale") {
    ModelParams g1(p.config()), g2(p.config());
    accumulate_loss_gradient(p, f, target, g1, 1.0);
    accumulate_loss_gradient(p, f, target, g2, 0.25);
    CHECK((g1.values() * 0.25 - g2.values()).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("Adam: one step on a 2-parameter problem matches the hand update") {
  Eigen::VectorXd theta(2);
  theta << 1.0, -2.0;
  Eigen::VectorXd g(2);
  g << 0.5, -3.0;
  Adam adam(2, 0.1);
  adam.step(theta, g);
  // t = 1: m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
  const double s0 = 0.1 * 0.5 / (0.5 + 1e-8);
  const double s1 = 0.1 * -3.0 / (3.0 + 1e-8);
  CHECK(std::abs(theta[0] - (1.0 - s0)) < 1e-12);
  CHECK(std::abs(theta[1] - (-2.0 - s1)) < 1e-12);

  // second step with a different gradient, bias corrections worked by hand
  Eigen::VectorXd g2(2);
  g2 << -1.0, 1.0;
  const Eigen::VectorXd before = theta;
  adam.step(theta, g2);
  for (int i = 0; i < 2; ++i) {
    const double m = 0.9 * (0.1 * g[i]) + 0.1 * g2[i];
    const double v = 0.999 * (0.001 * g[i] * g[i]) + 0.001 * g2[i] * g2[i];
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    CHECK(std::abs(theta[i] - (before[i] - 0.1 * mh / (std::sqrt(vh) + 1e-8))) < 1e-12);
  }
}

TEST_CASE("training") {
  using P = PrimitiveClass;
  std::mt19937_64 rng(17);
  auto make = [&](std::size_t n, std::uint64_t seed) {
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
      Example e;
      e.frames = random_frames(6, 3, seed + i);
      e.target = {static_cast<P>(i % 5)};
      e.recording_id = "r";
      e.core_begin = i;
      out.push_back(std::move(e));
    }
    return out;
  };
  const auto train = make(12, 100);
  const auto val = make(4, 500);
  TrainConfig tc;
  tc.batch_size = 5;
  tc.max_epochs = 4;
  tc.seed = 3;

  SUBCASE("identical inputs give bit-identical parameters, independent of worker count") {
    const auto a = fit_model(train, val, tiny(), tc, 1);
    const auto b = fit_model(train, val, tiny(), tc, 3);
    CHECK(a.params.values() == b.params.values());
    CHECK(a.log.size() == b.log.size());
  }
  SUBCASE("patience 1 with no improvement after epoch 1 stops at epoch 2") {
    tc.early_stop_patience = 1;
    tc.learning_rate = 1e-12;  // parameters effectively frozen, AER constant
    tc.max_epochs = 50;
    const auto r = fit_model(train, val, tiny(), tc, 1);
    CHECK(r.log.size() == 2);
    CHECK(r.best_epoch == 1);
  }
  SUBCASE("non-finite loss is reported as divergence") {
    auto bad = train;
    bad[0].frames(0, 0) = std::numeric_limits<double>::quiet_NaN();
    try {
      fit_model(bad, val, tiny(), tc, 1);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::divergence);
    }
  }
}

TEST_CASE("member files round-trip exactly") {
  oracle::TempDir dir("model");
  EnsembleMember m{ModelParams::random(tiny(), 5), NormalizationStats{{0.1, 0.2, 0.3}, {1.0, 2.0, 3.0}, "x"}};
  save_member(m, dir.path / "m.bin");
  const auto back = load_member(dir.path / "m.bin");
  CHECK(back.params.config() == m.params.config());
  CHECK(back.params.values() == m.params.values());
  CHECK(back.stats.mean == m.stats.mean);
  CHECK(back.stats.std == m.stats.std);

  std::ofstream(dir.path / "junk.bin") << "not a model";
  CHECK_THROWS_AS(load_member(dir.path / "junk.bin"), Error);
}
