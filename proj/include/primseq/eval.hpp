#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "primseq/primitive.hpp"

namespace primseq {

enum class OpKind { match, substitution, deletion, insertion };

/// One alignment column. `gt` is set for match/substitution/deletion,
/// `pred` for match/substitution/insertion.
struct AlignmentOp {
  OpKind kind = OpKind::match;
  std::optional<PrimitiveClass> gt;
  std::optional<PrimitiveClass> pred;

  static AlignmentOp match(PrimitiveClass c) { return {OpKind::match, c, c}; }
  static AlignmentOp substitution(PrimitiveClass g, PrimitiveClass p) { return {OpKind::substitution, g, p}; }
  static AlignmentOp deletion(PrimitiveClass g) { return {OpKind::deletion, g, std::nullopt}; }
  static AlignmentOp insertion(PrimitiveClass p) { return {OpKind::insertion, std::nullopt, p}; }

  bool operator==(const AlignmentOp&) const = default;
};

using Alignment = std::vector<AlignmentOp>;

/// Levenshtein distance with unit costs.
std::size_t edit_distance(const PrimitiveSequence& gt, const PrimitiveSequence& pred);

/// Canonical minimum-cost alignment. Backtracking from the end prefers
/// match > substitution > deletion > insertion.
Alignment align(const PrimitiveSequence& gt, const PrimitiveSequence& pred);

/// Number of non-match ops.
std::size_t alignment_cost(const Alignment& alignment);

struct OutcomeTallies {
  std::array<std::size_t, kNumClasses> tp{};
  std::array<std::size_t, kNumClasses> deletion{};
  std::array<std::size_t, kNumClasses> swap_out{};
  std::array<std::size_t, kNumClasses> insertion{};
  std::array<std::size_t, kNumClasses> swap_in{};
  // substitutions[gt][pred]
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> substitutions{};

  std::size_t tp_total() const;
  std::size_t fn_total() const;
  std::size_t fp_total() const;
  std::size_t fn(PrimitiveClass c) const { return deletion[code_of(c)] + swap_out[code_of(c)]; }
  std::size_t fp(PrimitiveClass c) const { return insertion[code_of(c)] + swap_in[code_of(c)]; }
  std::size_t gt_count(PrimitiveClass c) const { return tp[code_of(c)] + fn(c); }
  std::size_t edit_cost() const;

  OutcomeTallies& operator+=(const OutcomeTallies& other);
  bool operator==(const OutcomeTallies&) const = default;

  nlohmann::json to_json() const;
};

OutcomeTallies tally(const Alignment& alignment);

/// Metric values; nullopt marks an undefined value (zero denominator).
struct Metrics {
  std::optional<double> sensitivity;
  std::optional<double> fdr;
  std::optional<double> f1;
  std::optional<double> aer;
};

/// Pooled counts that metrics are computed from.
struct OutcomeCounts {
  std::size_t tp = 0;
  std::size_t fn = 0;
  std::size_t fp = 0;
  std::size_t edit_distance = 0;
  std::size_t gt_length = 0;
};

OutcomeCounts overall_counts(const OutcomeTallies& t);
OutcomeCounts class_counts(const OutcomeTallies& t, PrimitiveClass c);

/// sensitivity = TP/(TP+FN); FDR = FP/(TP+FP); F1 = 2TP/(2TP+FN+FP); AER = distance/|gt|.
Metrics compute_metrics(const OutcomeCounts& counts);
Metrics compute_metrics(const OutcomeTallies& tallies);
Metrics compute_metrics(const PrimitiveSequence& gt, const PrimitiveSequence& pred);

/// F1 as the harmonic mean of sensitivity and precision (1 - FDR).
std::optional<double> f1_from_rates(double sensitivity, double fdr);

struct ConfusionMatrix {
  // rows = ground truth, columns = prediction; nullopt rows have no ground truth
  std::array<std::optional<std::array<double, kNumClasses>>, kNumClasses> rows;
  std::array<std::optional<double>, kNumClasses> deletion_fraction;

  nlohmann::json to_json() const;
};

ConfusionMatrix confusion_matrix(const OutcomeTallies& tallies);

/// A scored sequence pair with the labels used for grouping.
struct EvalRecord {
  std::string subject;
  std::string activity;
  std::string recording;
  PrimitiveSequence gt;
  PrimitiveSequence pred;
};

struct ScoredRecord {
  EvalRecord record;
  Alignment alignment;
  OutcomeTallies tallies;
};

ScoredRecord score(EvalRecord record);

enum class GroupBy { overall, primitive_class, activity, subject };

std::string_view to_string(GroupBy g);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct GroupMetrics {
  std::string group;
  OutcomeCounts counts;
  Metrics micro;
  // across subjects within the group (subjects with a defined value only)
  std::optional<MeanStd> subject_sensitivity;
  std::optional<MeanStd> subject_fdr;
  std::optional<MeanStd> subject_f1;
};

/// Sums tallies within each group before computing metrics; per-subject
/// means ± sample standard deviation are reported alongside.
std::vector<GroupMetrics> aggregate(const std::vector<ScoredRecord>& records, GroupBy group_by);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json group_metrics_to_json(const GroupMetrics& g);

/// Pearson correlation of mid-ranks. Undefined (nullopt) when either rank
/// vector has zero variance. Throws Error(invalid_argument) on size mismatch or fewer than two points.
std::optional<double> spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys);

/// Average ranks (1-based), ties share their mean rank.
std::vector<double> mid_ranks(const std::vector<double>& values);

}  // namespace primseq
