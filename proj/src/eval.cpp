#include "primseq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "primseq/error.hpp"

namespace primseq {

using nlohmann::json;

namespace {

// (n+1) × (m+1) Levenshtein table, row-major.
std::vector<std::size_t> distance_table(const PrimitiveSequence& gt, const PrimitiveSequence& pred) {
  const std::size_t n = gt.size();
  const std::size_t m = pred.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (gt[i - 1] == pred[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  return d;
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<MeanStd> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  MeanStd out;
  out.n = xs.size();
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

json mean_std_json(const std::optional<MeanStd>& m) {
  if (!m) return nullptr;
  return {{"mean", m->mean}, {"std", m->std}, {"n", m->n}};
}

}  // namespace

std::size_t edit_distance(const PrimitiveSequence& gt, const PrimitiveSequence& pred) {
  return distance_table(gt, pred).back();
}

Alignment align(const PrimitiveSequence& gt, const PrimitiveSequence& pred) {
  const auto d = distance_table(gt, pred);
  const std::size_t m = pred.size();
  auto at = [&](std::size_t i, std::size_t j) { return d[i * (m + 1) + j]; };
  Alignment ops;
  std::size_t i = gt.size();
  std::size_t j = pred.size();
  while (i > 0 || j > 0) {
    const std::size_t here = at(i, j);
    if (i > 0 && j > 0 && gt[i - 1] == pred[j - 1] && at(i - 1, j - 1) == here) {
      ops.push_back(AlignmentOp::match(gt[i - 1]));
      --i;
      --j;
    } else if (i > 0 && j > 0 && gt[i - 1] != pred[j - 1] && at(i - 1, j - 1) + 1 == here) {
      ops.push_back(AlignmentOp::substitution(gt[i - 1], pred[j - 1]));
      --i;
      --j;
    } else if (i > 0 && at(i - 1, j) + 1 == here) {
      ops.push_back(AlignmentOp::deletion(gt[i - 1]));
      --i;
    } else {
      ops.push_back(AlignmentOp::insertion(pred[j - 1]));
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

std::size_t alignment_cost(const Alignment& alignment) {
  return static_cast<std::size_t>(std::count_if(alignment.begin(), alignment.end(),
                                                [](const AlignmentOp& op) { return op.kind != OpKind::match; }));
}

// --- tallies ---------------------------------------------------------------

namespace {
std::size_t sum(const std::array<std::size_t, kNumClasses>& a) { return std::accumulate(a.begin(), a.end(), std::size_t{0}); }
}  // namespace

std::size_t OutcomeTallies::tp_total() const { return sum(tp); }
std::size_t OutcomeTallies::fn_total() const { return sum(deletion) + sum(swap_out); }
std::size_t OutcomeTallies::fp_total() const { return sum(insertion) + sum(swap_in); }
std::size_t OutcomeTallies::edit_cost() const { return sum(deletion) + sum(insertion) + sum(swap_out); }

OutcomeTallies& OutcomeTallies::operator+=(const OutcomeTallies& o) {
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    tp[c] += o.tp[c];
    deletion[c] += o.deletion[c];
    swap_out[c] += o.swap_out[c];
    insertion[c] += o.insertion[c];
    swap_in[c] += o.swap_in[c];
    for (std::size_t k = 0; k < kNumClasses; ++k) substitutions[c][k] += o.substitutions[c][k];
  }
  return *this;
}

json OutcomeTallies::to_json() const {
  json per_class = json::object();
  for (auto c : kAllClasses) {
    const auto i = code_of(c);
    per_class[std::string(to_string(c))] = {{"tp", tp[i]},           {"deletion", deletion[i]},
                                            {"swap_out", swap_out[i]}, {"insertion", insertion[i]},
                                            {"swap_in", swap_in[i]}};
  }
  json subs = json::array();
  for (const auto& row : substitutions) subs.push_back(row);
  return {{"per_class", per_class},
          {"substitutions", subs},
          {"tp", tp_total()},
          {"fn", fn_total()},
          {"fp", fp_total()}};
}

OutcomeTallies tally(const Alignment& alignment) {
  OutcomeTallies t;
  for (const auto& op : alignment) {
    switch (op.kind) {
      case OpKind::match: ++t.tp[code_of(*op.gt)]; break;
      case OpKind::deletion: ++t.deletion[code_of(*op.gt)]; break;
      case OpKind::insertion: ++t.insertion[code_of(*op.pred)]; break;
      case OpKind::substitution:
        ++t.swap_out[code_of(*op.gt)];
        ++t.swap_in[code_of(*op.pred)];
        ++t.substitutions[code_of(*op.gt)][code_of(*op.pred)];
        break;
    }
  }
  return t;
}

// --- metrics ---------------------------------------------------------------

OutcomeCounts overall_counts(const OutcomeTallies& t) {
  return {t.tp_total(), t.fn_total(), t.fp_total(), t.edit_cost(), t.tp_total() + t.fn_total()};
}

OutcomeCounts class_counts(const OutcomeTallies& t, PrimitiveClass c) {
  // edit distance is not attributable to a single class
  return {t.tp[code_of(c)], t.fn(c), t.fp(c), 0, 0};
}

Metrics compute_metrics(const OutcomeCounts& c) {
  Metrics m;
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.fdr = ratio(c.fp, c.tp + c.fp);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fn + c.fp);
  m.aer = ratio(c.edit_distance, c.gt_length);
  return m;
}

Metrics compute_metrics(const OutcomeTallies& tallies) { return compute_metrics(overall_counts(tallies)); }

Metrics compute_metrics(const PrimitiveSequence& gt, const PrimitiveSequence& pred) {
  return compute_metrics(tally(align(gt, pred)));
}

std::optional<double> f1_from_rates(double sensitivity, double fdr) {
  const double precision = 1.0 - fdr;
  if (sensitivity + precision == 0.0) return std::nullopt;
  return 2.0 * sensitivity * precision / (sensitivity + precision);
}

ConfusionMatrix confusion_matrix(const OutcomeTallies& t) {
  ConfusionMatrix cm;
  for (auto g : kAllClasses) {
    const auto r = code_of(g);
    const auto total = t.gt_count(g);
    if (total == 0) continue;
    std::array<double, kNumClasses> row{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const auto n = c == r ? t.tp[r] : t.substitutions[r][c];
      row[c] = static_cast<double>(n) / static_cast<double>(total);
    }
    cm.rows[r] = row;
    cm.deletion_fraction[r] = static_cast<double>(t.deletion[r]) / static_cast<double>(total);
  }
  return cm;
}

json ConfusionMatrix::to_json() const {
  json out = json::object();
  json labels = json::array();
  for (auto c : kAllClasses) labels.push_back(to_string(c));
  json matrix = json::array();
  json del = json::array();
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    matrix.push_back(rows[r] ? json(*rows[r]) : json(nullptr));
    del.push_back(optional_json(deletion_fraction[r]));
  }
  out["labels"] = labels;
  out["matrix"] = matrix;
  out["deletion_fraction"] = del;
  return out;
}

// --- grouping --------------------------------------------------------------

ScoredRecord score(EvalRecord record) {
  ScoredRecord s;
  s.alignment = align(record.gt, record.pred);
  s.tallies = tally(s.alignment);
  s.record = std::move(record);
  return s;
}

std::string_view to_string(GroupBy g) {
  switch (g) {
    case GroupBy::overall: return "overall";
    case GroupBy::primitive_class: return "primitive_class";
    case GroupBy::activity: return "activity";
    case GroupBy::subject: return "subject";
  }
  return "overall";
}

std::vector<GroupMetrics> aggregate(const std::vector<ScoredRecord>& records, GroupBy group_by) {
  if (records.empty()) throw Error(ErrorCode::invalid_argument, "no records to aggregate");

  // group key -> subject -> pooled tallies
  std::map<std::string, std::map<std::string, OutcomeTallies>> pooled;
  std::vector<std::string> keys;
  auto add = [&](const std::string& key, const ScoredRecord& r) {
    auto [it, inserted] = pooled.try_emplace(key);
    if (inserted) keys.push_back(key);
    it->second[r.record.subject] += r.tallies;
  };
  for (const auto& r : records) {
    switch (group_by) {
      case GroupBy::overall: add("overall", r); break;
      case GroupBy::activity: add(r.record.activity, r); break;
      case GroupBy::subject: add(r.record.subject, r); break;
      case GroupBy::primitive_class:
        for (auto c : kAllClasses) add(std::string(to_string(c)), r);
        break;
    }
  }
  if (group_by != GroupBy::primitive_class) std::sort(keys.begin(), keys.end());

  std::vector<GroupMetrics> out;
  for (const auto& key : keys) {
    const auto& by_subject = pooled.at(key);
    auto counts_of = [&](const OutcomeTallies& t) {
      return group_by == GroupBy::primitive_class ? class_counts(t, primitive_from_string(key)) : overall_counts(t);
    };
    GroupMetrics g;
    g.group = key;
    OutcomeTallies total;
    std::vector<double> sens, fdr, f1;
    for (const auto& [subject, t] : by_subject) {
      total += t;
      const auto m = compute_metrics(counts_of(t));
      if (m.sensitivity) sens.push_back(*m.sensitivity);
      if (m.fdr) fdr.push_back(*m.fdr);
      if (m.f1) f1.push_back(*m.f1);
    }
    g.counts = counts_of(total);
    g.micro = compute_metrics(g.counts);
    g.subject_sensitivity = mean_std(sens);
    g.subject_fdr = mean_std(fdr);
    g.subject_f1 = mean_std(f1);
    out.push_back(std::move(g));
  }
  return out;
}

json metrics_to_json(const Metrics& m) {
  return {{"sensitivity", optional_json(m.sensitivity)},
          {"fdr", optional_json(m.fdr)},
          {"f1", optional_json(m.f1)},
          {"aer", optional_json(m.aer)}};
}

json group_metrics_to_json(const GroupMetrics& g) {
  return {{"group", g.group},
          {"tp", g.counts.tp},
          {"fn", g.counts.fn},
          {"fp", g.counts.fp},
          {"edit_distance", g.counts.edit_distance},
          {"gt_length", g.counts.gt_length},
          {"micro", metrics_to_json(g.micro)},
          {"subject_sensitivity", mean_std_json(g.subject_sensitivity)},
          {"subject_fdr", mean_std_json(g.subject_fdr)},
          {"subject_f1", mean_std_json(g.subject_f1)}};
}

// --- rank correlation ------------------------------------------------------

std::vector<double> mid_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::invalid_argument, "spearman: length mismatch");
  if (xs.size() < 2) throw Error(ErrorCode::invalid_argument, "spearman: need at least two points");
  const auto rx = mid_ranks(xs);
  const auto ry = mid_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace primseq
