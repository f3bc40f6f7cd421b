#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "primseq/error.hpp"
#include "primseq/eval.hpp"

using namespace primseq;
using P = PrimitiveClass;

namespace {

PrimitiveSequence gt_slots(const Alignment& a) {
  PrimitiveSequence s;
  for (const auto& op : a) {
    if (op.gt) s.push_back(*op.gt);
  }
  return s;
}

PrimitiveSequence pred_slots(const Alignment& a) {
  PrimitiveSequence s;
  for (const auto& op : a) {
    if (op.pred) s.push_back(*op.pred);
  }
  return s;
}

// Pearson correlation computed directly, for rank vectors built by hand.
double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("align: worked examples") {
  SUBCASE("identity") {
    const auto a = align({P::reach, P::idle}, {P::reach, P::idle});
    CHECK(a == Alignment{AlignmentOp::match(P::reach), AlignmentOp::match(P::idle)});
    CHECK(alignment_cost(a) == 0);
  }
  SUBCASE("empty ground truth") {
    const auto a = align({}, {P::reach});
    CHECK(a == Alignment{AlignmentOp::insertion(P::reach)});
    CHECK(edit_distance({}, {P::reach}) == 1);
  }
  SUBCASE("substitution then deletion") {
    const PrimitiveSequence gt{P::reach, P::transport, P::stabilize, P::idle};
    const PrimitiveSequence pred{P::reach, P::idle, P::stabilize};
    const auto a = align(gt, pred);
    CHECK(a == Alignment{AlignmentOp::match(P::reach), AlignmentOp::substitution(P::transport, P::idle),
                         AlignmentOp::match(P::stabilize), AlignmentOp::deletion(P::idle)});
    CHECK(alignment_cost(a) == 2);
    CHECK(oracle::enumerate_alignments(gt, 0, pred, 0) == 2);
  }
}

TEST_CASE("align: exhaustive agreement with enumeration up to length 3") {
  const auto all = oracle::all_sequences(3);
  std::size_t mismatches = 0;
  for (const auto& a : all) {
    for (const auto& b : all) {
      const auto al = align(a, b);
      if (alignment_cost(al) != oracle::enumerate_alignments(a, 0, b, 0)) ++mismatches;
      if (gt_slots(al) != a || pred_slots(al) != b) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("align: random longer pairs match the rolling-row DP and are deterministic") {
  std::mt19937_64 rng(41);
  for (int k = 0; k < 500; ++k) {
    const auto a = oracle::random_sequence(rng, 40);
    const auto b = oracle::random_sequence(rng, 40);
    const auto al = align(a, b);
    CHECK(alignment_cost(al) == oracle::levenshtein(a, b));
    CHECK(edit_distance(a, b) == oracle::levenshtein(a, b));
    CHECK(al == align(a, b));
    CHECK((alignment_cost(al) == 0) == (a == b));
  }
}

TEST_CASE("tally") {
  SUBCASE("four-outcome schematic") {
    const Alignment a{AlignmentOp::match(P::transport), AlignmentOp::deletion(P::stabilize),
                      AlignmentOp::substitution(P::reach, P::idle), AlignmentOp::insertion(P::reach)};
    const auto t = tally(a);
    CHECK(t.tp_total() == 1);
    CHECK(t.fn_total() == 2);
    CHECK(t.fp_total() == 2);
    CHECK(t.swap_out[code_of(P::reach)] == 1);
    CHECK(t.swap_in[code_of(P::idle)] == 1);
    CHECK(t.substitutions[code_of(P::reach)][code_of(P::idle)] == 1);
  }
  SUBCASE("all matches") {
    const PrimitiveSequence s{P::reach, P::transport, P::reach, P::idle};
    const auto t = tally(align(s, s));
    CHECK(t.tp_total() == 4);
    CHECK(t.fn_total() == 0);
    CHECK(t.fp_total() == 0);
  }
  SUBCASE("random invariants") {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 1000; ++k) {
      const auto a = oracle::random_sequence(rng, 12);
      const auto b = oracle::random_sequence(rng, 12);
      const auto t = tally(align(a, b));
      CHECK(t.tp_total() + t.fn_total() == a.size());
      CHECK(t.tp_total() + t.fp_total() == b.size());
      const auto so = std::accumulate(t.swap_out.begin(), t.swap_out.end(), std::size_t{0});
      const auto si = std::accumulate(t.swap_in.begin(), t.swap_in.end(), std::size_t{0});
      CHECK(so == si);
      CHECK(t.edit_cost() == oracle::levenshtein(a, b));
    }
  }
}

TEST_CASE("metrics") {
  SUBCASE("F1 from the published sensitivity and FDR") {
    const auto f1 = f1_from_rates(0.767, 0.166);
    REQUIRE(f1.has_value());
    CHECK(std::abs(*f1 - 0.799) <= 0.0005);
  }
  SUBCASE("AER") {
    CHECK(*compute_metrics({P::reach, P::idle, P::idle, P::reach}, {P::reach, P::idle, P::transport, P::reach}).aer ==
          doctest::Approx(0.25));
    CHECK(*compute_metrics({P::reach}, {P::reach, P::idle, P::idle}).aer == doctest::Approx(2.0));
    CHECK(!compute_metrics({}, {P::reach}).aer.has_value());
  }
  SUBCASE("count-form F1 equals the harmonic mean whenever TP > 0") {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 1000; ++k) {
      const auto a = oracle::random_sequence(rng, 10);
      const auto b = oracle::random_sequence(rng, 10);
      const auto m = compute_metrics(a, b);
      const auto t = tally(align(a, b));
      if (t.tp_total() == 0) {
        if (m.f1) CHECK(*m.f1 == 0.0);
        continue;
      }
      const double s = *m.sensitivity, p = 1.0 - *m.fdr;
      CHECK(std::abs(*m.f1 - 2 * s * p / (s + p)) < 1e-12);
    }
  }
  SUBCASE("zero denominators are undefined") {
    const auto m = compute_metrics(OutcomeCounts{});
    CHECK(!m.sensitivity.has_value());
    CHECK(!m.fdr.has_value());
  }
}

TEST_CASE("confusion matrix") {
  SUBCASE("perfect predictions give the identity on present classes") {
    const PrimitiveSequence s{P::reach, P::transport, P::reposition, P::stabilize, P::idle};
    const auto cm = confusion_matrix(tally(align(s, s)));
    for (std::size_t r = 0; r < kNumClasses; ++r) {
      REQUIRE(cm.rows[r].has_value());
      for (std::size_t c = 0; c < kNumClasses; ++c) CHECK((*cm.rows[r])[c] == (r == c ? 1.0 : 0.0));
    }
  }
  SUBCASE("fully deleted class: zero row, deletion fraction 1") {
    const auto cm = confusion_matrix(tally(align({P::idle, P::idle}, {})));
    REQUIRE(cm.rows[4].has_value());
    for (double v : *cm.rows[4]) CHECK(v == 0.0);
    CHECK(*cm.deletion_fraction[4] == 1.0);
    CHECK(!cm.rows[0].has_value());
  }
  SUBCASE("rows plus deletion fraction sum to 1") {
    std::mt19937_64 rng(12);
    OutcomeTallies pooled;
    for (int k = 0; k < 300; ++k) pooled += tally(align(oracle::random_sequence(rng, 8), oracle::random_sequence(rng, 8)));
    const auto cm = confusion_matrix(pooled);
    for (std::size_t r = 0; r < kNumClasses; ++r) {
      REQUIRE(cm.rows[r].has_value());
      double sum = *cm.deletion_fraction[r];
      for (double v : *cm.rows[r]) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("aggregate") {
  SUBCASE("micro pooling with per-subject means alongside") {
    // subject a: TP=1, FN=1; subject b: TP=3, FN=1
    std::vector<ScoredRecord> recs;
    recs.push_back(score({"a", "shelf", "a1", {P::reach, P::idle}, {P::reach}}));
    recs.push_back(score({"b", "shelf", "b1", {P::reach, P::idle, P::transport, P::idle}, {P::reach, P::idle, P::transport}}));
    const auto g = aggregate(recs, GroupBy::overall);
    REQUIRE(g.size() == 1);
    CHECK(*g[0].micro.sensitivity == doctest::Approx(4.0 / 6.0));
    REQUIRE(g[0].subject_sensitivity.has_value());
    CHECK(g[0].subject_sensitivity->mean == doctest::Approx(0.625));
    CHECK(g[0].subject_sensitivity->n == 2);
  }
  SUBCASE("single subject and activity equals pooled metrics") {
    std::mt19937_64 rng(1);
    std::vector<ScoredRecord> recs;
    OutcomeTallies pooled;
    for (int k = 0; k < 30; ++k) {
      recs.push_back(score({"s", "act", "r", oracle::random_sequence(rng, 6), oracle::random_sequence(rng, 6)}));
      pooled += recs.back().tallies;
    }
    const auto g = aggregate(recs, GroupBy::overall);
    const auto m = compute_metrics(pooled);
    CHECK(*g[0].micro.f1 == *m.f1);
    CHECK(*g[0].micro.aer == *m.aer);
  }
  SUBCASE("grouping by activity equals a manual partition") {
    std::mt19937_64 rng(2);
    std::vector<ScoredRecord> recs;
    std::map<std::string, std::size_t> tp, fn, fp;
    const char* acts[] = {"shelf", "feed", "comb"};
    for (int k = 0; k < 90; ++k) {
      const std::string act = acts[k % 3];
      recs.push_back(score({"s" + std::to_string(k % 4), act, "r", oracle::random_sequence(rng, 7),
                            oracle::random_sequence(rng, 7)}));
      tp[act] += recs.back().tallies.tp_total();
      fn[act] += recs.back().tallies.fn_total();
      fp[act] += recs.back().tallies.fp_total();
    }
    const auto groups = aggregate(recs, GroupBy::activity);
    CHECK(groups.size() == 3);
    for (const auto& g : groups) {
      const double s = static_cast<double>(tp[g.group]) / static_cast<double>(tp[g.group] + fn[g.group]);
      const double f = static_cast<double>(fp[g.group]) / static_cast<double>(tp[g.group] + fp[g.group]);
      CHECK(*g.micro.sensitivity == doctest::Approx(s).epsilon(1e-14));
      CHECK(*g.micro.fdr == doctest::Approx(f).epsilon(1e-14));
    }
  }
  SUBCASE("per class grouping covers the five classes") {
    std::vector<ScoredRecord> recs{score({"s", "a", "r", {P::reach, P::idle}, {P::reach, P::idle}})};
    CHECK(aggregate(recs, GroupBy::primitive_class).size() == kNumClasses);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(aggregate({}, GroupBy::overall), Error);
  }
}

TEST_CASE("spearman") {
  CHECK(*spearman_rho({1, 2, 3, 4}, {10, 20, 30, 45}) == doctest::Approx(1.0));
  CHECK(*spearman_rho({1, 2, 3, 4}, {5, 4, 2, 0}) == doctest::Approx(-1.0));
  CHECK(!spearman_rho({1, 1, 1}, {1, 2, 3}).has_value());
  CHECK_THROWS_AS(spearman_rho({1}, {2}), Error);
  CHECK_THROWS_AS(spearman_rho({1, 2}, {2}), Error);

  // tied example; mid-ranks worked out by hand
  const std::vector<double> xs{10, 20, 20, 30, 40, 40};
  const std::vector<double> ys{0.5, 0.4, 0.7, 0.7, 0.9, 0.6};
  const std::vector<double> rx{1, 2.5, 2.5, 4, 5.5, 5.5};
  const std::vector<double> ry{2, 1, 4.5, 4.5, 6, 3};
  CHECK(mid_ranks(xs) == rx);
  CHECK(mid_ranks(ys) == ry);
  CHECK(*spearman_rho(xs, ys) == doctest::Approx(pearson(rx, ry)).epsilon(1e-14));
}
