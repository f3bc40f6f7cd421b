#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "primseq/baseline.hpp"
#include "primseq/config.hpp"
#include "primseq/decode.hpp"
#include "primseq/eval.hpp"
#include "primseq/training.hpp"

namespace primseq {

/// Cuts windows from raw frames and applies the sensor-centric transform.
/// Batch and stream mode both go through here, so their windows agree bitwise.
struct WindowBuilder {
  WindowSpec spec;
  ReferencePolicy policy = ReferencePolicy::first_frame;
  ChannelManifest manifest = ChannelManifest::default_manifest();

  static WindowBuilder from_config(const RunConfig& config);

  /// `raw` may be a prefix of the recording as long as it holds every frame
  /// the window reads (or the whole recording). Row 0 must be the recording's first frame.
  Window build(const Frames& raw, std::size_t core_start, const std::string& recording_id) const;

  /// Test-mode cores of the transformed recording, concatenated (tiles every frame once).
  Frames transformed(const Frames& raw) const;
};

std::vector<Example> build_examples(const std::vector<const LabeledRecording*>& recordings, const WindowBuilder& builder,
                                    const NormalizationStats& stats, WindowMode mode, std::size_t min_overlap,
                                    std::size_t max_tokens);

NormalizationStats fit_member_stats(const std::vector<const LabeledRecording*>& recordings,
                                    const WindowBuilder& builder, std::string source = {});

/// `n` subjects chosen by a seeded shuffle, kept out of every fold.
std::set<std::string> held_out_subjects(const std::vector<std::string>& subjects, std::size_t n, std::uint64_t seed);

struct MemberResult {
  EnsembleMember member;
  FitResult fit;
};

/// Trains one fold model; member seed is derived from (config.seed, fold).
/// Per-epoch progress: (fold, log entry). Called from the training threads when members run concurrently.
using FoldEpochCallback = std::function<void(std::size_t, const EpochLog&)>;

MemberResult train_member(const Dataset& data, const DatasetSplit& split, const RunConfig& config, std::size_t fold,
                          std::size_t workers = 0, const FoldEpochCallback& on_epoch = {});

struct EnsembleResult {
  EnsembleModel model;
  std::vector<FitResult> fits;
  std::vector<DatasetSplit> splits;
};

enum class MemberSchedule { sequential, concurrent };

std::vector<DatasetSplit> make_splits(const Dataset& data, const RunConfig& config);

EnsembleResult train_ensemble(const Dataset& data, const RunConfig& config, std::size_t workers = 0,
                              MemberSchedule schedule = MemberSchedule::sequential,
                              const FoldEpochCallback& on_epoch = {});

struct RecordingPrediction {
  std::string recording_id;
  std::string subject;
  std::string activity;
  double duration_s = 0.0;
  std::vector<WindowPrediction> windows;
  std::vector<PrimitiveSequence> gt_windows;
  SessionPrediction session;
  PrimitiveCounts true_counts;
  PrimitiveCounts predicted_counts;
};

/// Ground-truth window targets (test mode) for a recording.
std::vector<PrimitiveSequence> ground_truth_windows(const LabeledRecording& rec, const WindowSpec& spec,
                                                    std::size_t min_overlap, std::size_t max_tokens);

RecordingPrediction predict_recording(const EnsembleModel& ensemble, const LabeledRecording& rec,
                                      const RunConfig& config, std::size_t workers = 0);
/// Output is in input order regardless of scheduling.
std::vector<RecordingPrediction> predict_recordings(const EnsembleModel& ensemble,
                                                    const std::vector<const LabeledRecording*>& recs,
                                                    const RunConfig& config, std::size_t workers = 0);

struct BaselineModel {
  LogisticRegression classifier;
  NormalizationStats stats;

  nlohmann::json to_json() const;
  static BaselineModel from_json(const nlohmann::json& j);
};

BaselineModel train_baseline(const Dataset& data, const std::set<std::string>& train_subjects,
                             const RunConfig& config);
RecordingPrediction predict_baseline(const BaselineModel& model, const LabeledRecording& rec,
                                     const RunConfig& config);

nlohmann::json predictions_to_json(const std::vector<RecordingPrediction>& preds);
std::vector<RecordingPrediction> predictions_from_json(const nlohmann::json& j);

/// Per-window scored records for aggregation.
std::vector<ScoredRecord> score_predictions(const std::vector<RecordingPrediction>& preds);

/// Metrics tables, confusion matrix, counting errors and the UE-FMA correlation.
nlohmann::json evaluation_json(const std::vector<RecordingPrediction>& preds, const Dataset& data);

void write_counts_csv(const std::vector<RecordingPrediction>& preds, const std::filesystem::path& path);
void write_metrics_csv(const nlohmann::json& evaluation, const std::filesystem::path& path,
                       const std::string& model_name, bool append);

}  // namespace primseq
