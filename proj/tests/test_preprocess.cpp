#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "primseq/error.hpp"
#include "primseq/preprocess.hpp"

using namespace primseq;

namespace {

// Hamilton product written out from the component definition, for checking
// the library operator.
std::array<double, 4> qmul(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double aw = a[0], ax = a[1], ay = a[2], az = a[3];
  const double bw = b[0], bx = b[1], by = b[2], bz = b[3];
  return {aw * bw - (ax * bx + ay * by + az * bz), aw * bx + bw * ax + (ay * bz - az * by),
          aw * by + bw * ay + (az * bx - ax * bz), aw * bz + bw * az + (ax * by - ay * bx)};
}

Frames quaternion_frames(const std::vector<Quaternion>& qs) {
  // one sensor: 4 quaternion channels
  Frames f(static_cast<Eigen::Index>(qs.size()), 4);
  for (std::size_t t = 0; t < qs.size(); ++t) f.row(static_cast<Eigen::Index>(t)) << qs[t].w, qs[t].x, qs[t].y, qs[t].z;
  return f;
}

ChannelManifest one_sensor() {
  std::vector<ChannelDescriptor> ch;
  for (const char* n : {"s_qw", "s_qx", "s_qy", "s_qz"}) ch.push_back({n, "s", QuantityKind::quaternion_component, ""});
  return ChannelManifest(ch);
}

}  // namespace

TEST_CASE("sensor-centric transform") {
  const auto m = one_sensor();
  const double pi = std::acos(-1.0);

  SUBCASE("self-reference gives identity") {
    const auto q = Quaternion::from_axis_angle(1, 2, 3, 0.7);
    auto f = quaternion_frames({q, q, q});
    sensor_centric_transform(f, m);
    for (Eigen::Index t = 0; t < 3; ++t) {
      CHECK(f(t, 0) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(f(t, 1)) < 1e-12);
      CHECK(std::abs(f(t, 2)) < 1e-12);
      CHECK(std::abs(f(t, 3)) < 1e-12);
    }
  }
  SUBCASE("identity reference leaves quaternions unchanged") {
    const auto q = Quaternion::from_axis_angle(0, 1, 0, 1.1);
    auto f = quaternion_frames({Quaternion{}, q});
    sensor_centric_transform(f, m);
    CHECK(f(1, 0) == doctest::Approx(q.w).epsilon(1e-12));
    CHECK(f(1, 2) == doctest::Approx(q.y).epsilon(1e-12));
  }
  SUBCASE("90 degrees reference, 180 degrees sample about z gives 90 degrees about z") {
    const auto ref = Quaternion::from_axis_angle(0, 0, 1, pi / 2);
    const auto q = Quaternion::from_axis_angle(0, 0, 1, pi);
    auto f = quaternion_frames({ref, q});
    sensor_centric_transform(f, m);
    const auto expect = qmul({ref.w, -ref.x, -ref.y, -ref.z}, {q.w, q.x, q.y, q.z});
    CHECK(expect[0] == doctest::Approx(std::cos(pi / 4)).epsilon(1e-12));
    CHECK(expect[3] == doctest::Approx(std::sin(pi / 4)).epsilon(1e-12));
    for (int k = 0; k < 4; ++k) CHECK(f(1, k) == doctest::Approx(expect[static_cast<std::size_t>(k)]).epsilon(1e-12));
  }
  SUBCASE("random quaternions: library product matches the component oracle") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
      const Quaternion a{n(rng), n(rng), n(rng), n(rng)}, b{n(rng), n(rng), n(rng), n(rng)};
      const auto p = a * b;
      const auto o = qmul({a.w, a.x, a.y, a.z}, {b.w, b.x, b.y, b.z});
      CHECK(p.w == doctest::Approx(o[0]).epsilon(1e-12));
      CHECK(p.x == doctest::Approx(o[1]).epsilon(1e-12));
      CHECK(p.y == doctest::Approx(o[2]).epsilon(1e-12));
      CHECK(p.z == doctest::Approx(o[3]).epsilon(1e-12));
    }
  }
  SUBCASE("unit norm preserved and other channels untouched") {
    const auto full = ChannelManifest::default_manifest();
    SynthSpec spec;
    spec.n_subjects = 1;
    spec.duration_s = 3.0;
    const auto data = synthesize_dataset(spec, 2);
    const auto& raw = data.recordings.front().recording;
    const auto out = sensor_centric_transform(raw, full);
    std::vector<bool> is_quat(77, false);
    for (auto g : full.quaternion_groups()) {
      for (std::size_t k = 0; k < 4; ++k) is_quat[g + k] = true;
      for (Eigen::Index t = 0; t < out.frames.rows(); ++t) {
        const auto gi = static_cast<Eigen::Index>(g);
        CHECK(out.frames.row(t).segment(gi, 4).norm() == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
    for (std::size_t c = 0; c < 77; ++c) {
      if (!is_quat[c]) CHECK(out.frames.col(static_cast<Eigen::Index>(c)) == raw.frames.col(static_cast<Eigen::Index>(c)));
    }
  }
  SUBCASE("zero-norm quaternion is an error") {
    auto f = quaternion_frames({Quaternion{}, Quaternion{0, 0, 0, 0}});
    try {
      sensor_centric_transform(f, m);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::zero_norm_quaternion);
    }
  }
}

TEST_CASE("normalization") {
  SUBCASE("constant channel: mean c, std clamped to 1") {
    IMURecording r;
    r.frames = Frames::Constant(10, 2, 3.5);
    const auto s = fit_normalization({&r});
    CHECK(s.mean[0] == 3.5);
    CHECK(s.std[0] == 1.0);
  }
  SUBCASE("values -1/+1 equally: mean 0, std 1") {
    IMURecording r;
    r.frames.resize(4, 1);
    r.frames << -1, 1, -1, 1;
    const auto s = fit_normalization({&r});
    CHECK(std::abs(s.mean[0]) < 1e-15);
    CHECK(s.std[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("random dataset matches a two-pass computation") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(2.0, 3.0);
    std::vector<IMURecording> recs(3);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      recs[i].frames.resize(static_cast<Eigen::Index>(50 + 20 * i), 5);
      for (Eigen::Index k = 0; k < recs[i].frames.size(); ++k) recs[i].frames.data()[k] = n(rng);
    }
    const auto s = fit_normalization({&recs[0], &recs[1], &recs[2]});
    for (Eigen::Index c = 0; c < 5; ++c) {
      double sum = 0.0, count = 0.0;
      for (const auto& r : recs) {
        sum += r.frames.col(c).sum();
        count += static_cast<double>(r.frames.rows());
      }
      const double mean = sum / count;
      double ss = 0.0;
      for (const auto& r : recs) ss += (r.frames.col(c).array() - mean).square().sum();
      const double sd = std::sqrt(ss / count);
      CHECK(s.mean[static_cast<std::size_t>(c)] == doctest::Approx(mean).epsilon(1e-12));
      CHECK(s.std[static_cast<std::size_t>(c)] == doctest::Approx(sd).epsilon(1e-12));
    }
    // normalized training data: mean 0, variance 1 per channel
    Frames all(50 + 70 + 90, 5);
    Eigen::Index at = 0;
    for (const auto& r : recs) {
      Frames f = r.frames;
      apply_normalization(f, s);
      all.middleRows(at, f.rows()) = f;
      at += f.rows();
    }
    for (Eigen::Index c = 0; c < 5; ++c) {
      CHECK(std::abs(all.col(c).mean()) < 1e-6);
      CHECK((all.col(c).array() - all.col(c).mean()).square().mean() == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("apply: mean maps to 0, mean+std maps to 1; inverse recovers the input") {
    NormalizationStats s{{1.0, -2.0}, {0.5, 4.0}, ""};
    Frames f(2, 2);
    f << 1.0, -2.0, 1.5, 2.0;
    apply_normalization(f, s);
    CHECK(f(0, 0) == 0.0);
    CHECK(f(0, 1) == 0.0);
    CHECK(f(1, 0) == 1.0);
    CHECK(f(1, 1) == 1.0);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-100, 100);
    Frames r(20, 2);
    for (Eigen::Index k = 0; k < r.size(); ++k) r.data()[k] = u(rng);
    Frames g = r;
    apply_normalization(g, s);
    invert_normalization(g, s);
    CHECK((g - r).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("dimension mismatch") {
    NormalizationStats s{{0.0}, {1.0}, ""};
    Frames f(2, 3);
    CHECK_THROWS_AS(apply_normalization(f, s), Error);
  }
}

TEST_CASE("windowing") {
  const WindowSpec spec;
  auto recording = [](std::size_t n) {
    IMURecording r;
    r.subject_id = "S";
    r.activity = "shelf";
    r.trial = 1;
    r.frames.resize(static_cast<Eigen::Index>(n), 1);
    for (std::size_t t = 0; t < n; ++t) r.frames(static_cast<Eigen::Index>(t), 0) = static_cast<double>(t);
    return r;
  };

  SUBCASE("100 s test mode: 25 windows with cores [400k, 400k+400)") {
    const auto ws = make_windows(recording(10000), spec, WindowMode::test);
    REQUIRE(ws.size() == 25);
    for (std::size_t k = 0; k < ws.size(); ++k) {
      CHECK(ws[k].origin_core_begin == 400 * k);
      CHECK(ws[k].origin_core_end == 400 * k + 400);
      CHECK(ws[k].frames.rows() == 600);
      // core rows are the recording's own frames
      CHECK(ws[k].frames(static_cast<Eigen::Index>(ws[k].core_begin), 0) == static_cast<double>(400 * k));
    }
    // first window's leading flank repeats frame 0
    CHECK(ws[0].frames(0, 0) == 0.0);
    CHECK(ws[0].frames(99, 0) == 0.0);
    CHECK(ws[0].frames(100, 0) == 0.0);
    CHECK(ws[0].frames(101, 0) == 1.0);
  }
  SUBCASE("100 s train mode: 1 + ceil((100-4)/0.5) windows") {
    const auto ws = make_windows(recording(10000), spec, WindowMode::train);
    CHECK(ws.size() == 1 + static_cast<std::size_t>(std::ceil((100.0 - 4.0) / 0.5)));
    for (std::size_t k = 0; k < ws.size(); ++k) CHECK(ws[k].origin_core_begin == 50 * k);
  }
  SUBCASE("6.3 s test mode: second core [400, 630) with tail padding") {
    const auto ws = make_windows(recording(630), spec, WindowMode::test);
    REQUIRE(ws.size() == 2);
    CHECK(ws[1].origin_core_begin == 400);
    CHECK(ws[1].origin_core_end == 630);
    CHECK(ws[1].frames.rows() == 600);
    CHECK(ws[1].frames(599, 0) == 629.0);
  }
  SUBCASE("test-mode cores partition the recording") {
    for (std::size_t n : {1u, 399u, 400u, 401u, 1234u, 6000u}) {
      std::vector<int> seen(n, 0);
      for (const auto& w : make_windows(recording(n), spec, WindowMode::test)) {
        for (auto t = w.origin_core_begin; t < w.origin_core_end; ++t) ++seen[t];
      }
      for (auto s : seen) CHECK(s == 1);
    }
  }
}

TEST_CASE("derive_target_sequence") {
  using P = PrimitiveClass;
  SUBCASE("core inside one reach segment") {
    CHECK(derive_target_sequence({{P::idle, 0, 50}, {P::reach, 50, 900}, {P::idle, 900, 1000}}, 100, 500) ==
          PrimitiveSequence{P::reach});
  }
  SUBCASE("idle 200 / reach 150 / transport 50") {
    CHECK(derive_target_sequence({{P::idle, 0, 400}, {P::reach, 400, 550}, {P::transport, 550, 800}}, 200, 600) ==
          PrimitiveSequence{P::idle, P::reach, P::transport});
  }
  SUBCASE("reach 398 / idle 2 drops the sliver") {
    CHECK(derive_target_sequence({{P::reach, 0, 398}, {P::idle, 398, 1000}}, 0, 400) == PrimitiveSequence{P::reach});
  }
  SUBCASE("all slivers: the maximum-overlap segment is kept") {
    CHECK(derive_target_sequence({{P::reach, 0, 3}, {P::idle, 3, 7}, {P::stabilize, 7, 10}}, 0, 10) ==
          PrimitiveSequence{P::idle});
  }
  SUBCASE("adjacent distinct segments of the same class keep both tokens") {
    CHECK(derive_target_sequence({{P::reach, 0, 100}, {P::reach, 100, 400}}, 0, 400) ==
          PrimitiveSequence{P::reach, P::reach});
  }
}
