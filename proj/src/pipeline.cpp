#include "primseq/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>

#include "primseq/error.hpp"
#include "primseq/parallel.hpp"

namespace primseq {

using nlohmann::json;

WindowBuilder WindowBuilder::from_config(const RunConfig& config) {
  return {config.window, config.reference_policy, config.manifest()};
}

Window WindowBuilder::build(const Frames& raw, std::size_t core_start, const std::string& recording_id) const {
  Window w = window_at(raw, core_start, spec, recording_id);
  if (policy == ReferencePolicy::first_frame) {
    const Eigen::RowVectorXd reference = raw.row(0);
    sensor_centric_transform(w.frames, manifest, reference);
  } else {
    sensor_centric_transform(w.frames, manifest, std::size_t{0});
  }
  return w;
}

Frames WindowBuilder::transformed(const Frames& raw) const {
  Frames out(raw.rows(), raw.cols());
  for (auto s : core_starts(static_cast<std::size_t>(raw.rows()), spec, WindowMode::test)) {
    const auto w = build(raw, s, {});
    const auto len = static_cast<Eigen::Index>(w.core_end - w.core_begin);
    out.middleRows(static_cast<Eigen::Index>(s), len) = w.frames.middleRows(static_cast<Eigen::Index>(w.core_begin), len);
  }
  return out;
}

std::vector<Example> build_examples(const std::vector<const LabeledRecording*>& recordings, const WindowBuilder& builder,
                                    const NormalizationStats& stats, WindowMode mode, std::size_t min_overlap,
                                    std::size_t max_tokens) {
  std::vector<Example> out;
  for (const auto* rec : recordings) {
    const auto id = rec->id();
    for (auto s : core_starts(rec->recording.frame_count(), builder.spec, mode)) {
      auto w = builder.build(rec->recording.frames, s, id);
      apply_normalization(w.frames, stats);
      Example ex;
      ex.target = derive_target_sequence(rec->segments, w, min_overlap, max_tokens);
      ex.frames = std::move(w.frames);
      ex.recording_id = id;
      ex.subject = rec->recording.subject_id;
      ex.activity = rec->recording.activity;
      ex.core_begin = s;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

NormalizationStats fit_member_stats(const std::vector<const LabeledRecording*>& recordings,
                                    const WindowBuilder& builder, std::string source) {
  std::vector<IMURecording> prepared;
  prepared.reserve(recordings.size());
  for (const auto* rec : recordings) {
    IMURecording r = rec->recording;
    r.frames = builder.transformed(rec->recording.frames);
    prepared.push_back(std::move(r));
  }
  std::vector<const IMURecording*> ptrs;
  for (const auto& r : prepared) ptrs.push_back(&r);
  return fit_normalization(ptrs, std::move(source));
}

std::set<std::string> held_out_subjects(const std::vector<std::string>& subjects, std::size_t n, std::uint64_t seed) {
  if (n == 0) return {};
  if (n >= subjects.size()) throw Error(ErrorCode::too_few_subjects, "cannot hold out every subject for testing");
  std::vector<std::string> sorted = subjects;
  std::sort(sorted.begin(), sorted.end());
  std::mt19937_64 rng(mix_seed(seed, 6));
  std::shuffle(sorted.begin(), sorted.end(), rng);
  return {sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::vector<DatasetSplit> make_splits(const Dataset& data, const RunConfig& config) {
  std::vector<std::string> ids;
  for (const auto& s : data.subjects) ids.push_back(s.subject_id);
  const auto test = held_out_subjects(ids, config.n_test_subjects, config.seed);
  return split_subjects(ids, config.n_folds, config.seed, test);
}

MemberResult train_member(const Dataset& data, const DatasetSplit& split, const RunConfig& config, std::size_t fold,
                          std::size_t workers, const FoldEpochCallback& on_epoch) {
  const auto builder = WindowBuilder::from_config(config);
  const auto train_recs = data.recordings_of(split.train_subjects);
  const auto val_recs = data.recordings_of(split.val_subjects);
  if (train_recs.empty() || val_recs.empty()) {
    throw Error(ErrorCode::invalid_argument, "fold " + std::to_string(fold) + " has no training or validation data");
  }
  MemberResult out;
  out.member.stats = fit_member_stats(train_recs, builder, "fold " + std::to_string(fold));
  const auto max_tokens = config.model.max_tokens;
  const auto train = build_examples(train_recs, builder, out.member.stats, WindowMode::train,
                                    config.min_overlap_frames, max_tokens);
  const auto val = build_examples(val_recs, builder, out.member.stats, WindowMode::test, config.min_overlap_frames,
                                  max_tokens);
  TrainConfig tc = config.train;
  tc.seed = mix_seed(config.seed, 21, fold);
  EpochCallback cb;
  if (on_epoch) cb = [&](const EpochLog& e) { on_epoch(fold, e); };
  out.fit = fit_model(train, val, config.model, tc, workers, cb);
  out.member.params = out.fit.params;
  return out;
}

EnsembleResult train_ensemble(const Dataset& data, const RunConfig& config, std::size_t workers,
                              MemberSchedule schedule, const FoldEpochCallback& on_epoch) {
  if (workers == 0) workers = default_workers();
  EnsembleResult out;
  out.splits = make_splits(data, config);
  std::vector<MemberResult> members(out.splits.size());
  if (schedule == MemberSchedule::concurrent) {
    // one thread per member; each member trains single-threaded
    parallel_for(members.size(), std::max<std::size_t>(members.size(), 1), [&](std::size_t k) {
      members[k] = train_member(data, out.splits[k], config, k, 1, on_epoch);
    });
  } else {
    for (std::size_t k = 0; k < members.size(); ++k) {
      members[k] = train_member(data, out.splits[k], config, k, workers, on_epoch);
    }
  }
  for (auto& m : members) {
    out.model.members.push_back(std::move(m.member));
    out.fits.push_back(std::move(m.fit));
  }
  return out;
}

// --- prediction ------------------------------------------------------------

std::vector<PrimitiveSequence> ground_truth_windows(const LabeledRecording& rec, const WindowSpec& spec,
                                                    std::size_t min_overlap, std::size_t max_tokens) {
  const auto n = rec.recording.frame_count();
  std::vector<PrimitiveSequence> out;
  for (auto s : core_starts(n, spec, WindowMode::test)) {
    out.push_back(derive_target_sequence(rec.segments, s, std::min(s + spec.core_frames(), n), min_overlap,
                                         max_tokens));
  }
  return out;
}

namespace {

RecordingPrediction finish_prediction(const LabeledRecording& rec, const RunConfig& config,
                                      std::vector<WindowPrediction> windows) {
  RecordingPrediction p;
  p.recording_id = rec.id();
  p.subject = rec.recording.subject_id;
  p.activity = rec.recording.activity;
  p.duration_s = rec.recording.duration_s();
  p.gt_windows = ground_truth_windows(rec, config.window, config.min_overlap_frames, config.model.max_tokens);
  Stitcher stitcher(p.recording_id);
  for (const auto& w : windows) stitcher.push(w);
  p.session = stitcher.session();
  p.windows = std::move(windows);
  p.true_counts = count(rec.segments);
  p.true_counts.activity = p.activity;
  p.predicted_counts = count(p.session);
  p.predicted_counts.activity = p.activity;
  return p;
}

}  // namespace

RecordingPrediction predict_recording(const EnsembleModel& ensemble, const LabeledRecording& rec,
                                      const RunConfig& config, std::size_t workers) {
  ensemble.validate();
  if (ensemble.config().input_dim != rec.recording.channel_count()) {
    throw Error(ErrorCode::dimension_mismatch, "ensemble expects " + std::to_string(ensemble.config().input_dim) +
                                                   " channels, recording has " +
                                                   std::to_string(rec.recording.channel_count()));
  }
  const auto builder = WindowBuilder::from_config(config);
  const auto id = rec.id();
  const auto starts = core_starts(rec.recording.frame_count(), config.window, WindowMode::test);
  std::vector<WindowPrediction> windows(starts.size());
  parallel_for(starts.size(), workers == 0 ? default_workers() : workers, [&](std::size_t k) {
    windows[k] = decode_window(ensemble, builder.build(rec.recording.frames, starts[k], id));
  });
  return finish_prediction(rec, config, std::move(windows));
}

std::vector<RecordingPrediction> predict_recordings(const EnsembleModel& ensemble,
                                                    const std::vector<const LabeledRecording*>& recs,
                                                    const RunConfig& config, std::size_t workers) {
  std::vector<RecordingPrediction> out;
  out.reserve(recs.size());
  for (const auto* r : recs) out.push_back(predict_recording(ensemble, *r, config, workers));
  return out;
}

// --- baseline --------------------------------------------------------------

json BaselineModel::to_json() const { return {{"classifier", classifier.to_json()}, {"normalization", stats.to_json()}}; }

BaselineModel BaselineModel::from_json(const json& j) {
  try {
    return {LogisticRegression::from_json(j.at("classifier")), NormalizationStats::from_json(j.at("normalization"))};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("baseline model: ") + e.what());
  }
}

BaselineModel train_baseline(const Dataset& data, const std::set<std::string>& train_subjects,
                             const RunConfig& config) {
  const auto builder = WindowBuilder::from_config(config);
  const auto recs = data.recordings_of(train_subjects);
  if (recs.empty()) throw Error(ErrorCode::invalid_argument, "no baseline training recordings");
  BaselineModel model;
  model.stats = fit_member_stats(recs, builder, "baseline");
  std::vector<LabeledRecording> normalized;
  for (const auto* r : recs) {
    LabeledRecording copy = *r;
    copy.recording.frames = builder.transformed(r->recording.frames);
    apply_normalization(copy.recording.frames, model.stats);
    normalized.push_back(std::move(copy));
  }
  auto tc = config.baseline.train;
  tc.seed = mix_seed(config.seed, 40);
  model.classifier = train_pointwise(normalized, tc);
  return model;
}

RecordingPrediction predict_baseline(const BaselineModel& model, const LabeledRecording& rec,
                                     const RunConfig& config) {
  const auto builder = WindowBuilder::from_config(config);
  Frames frames = builder.transformed(rec.recording.frames);
  apply_normalization(frames, model.stats);
  const auto track = pointwise_track(frames, model.classifier, config.baseline.train.context_frames);
  const auto smoothed =
      smooth(track, KaiserSmoother(config.baseline.smoother.window_length, config.baseline.smoother.beta));
  const auto n = rec.recording.frame_count();
  const auto starts = core_starts(n, config.window, WindowMode::test);
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (auto s : starts) ranges.emplace_back(s, std::min(s + config.window.core_frames(), n));
  auto seqs = collapse(smoothed, ranges);
  std::vector<WindowPrediction> windows;
  const auto id = rec.id();
  for (std::size_t k = 0; k < starts.size(); ++k) windows.push_back({id, starts[k], std::move(seqs[k])});
  return finish_prediction(rec, config, std::move(windows));
}

// --- persistence -----------------------------------------------------------

json predictions_to_json(const std::vector<RecordingPrediction>& preds) {
  json arr = json::array();
  for (const auto& p : preds) {
    json windows = json::array();
    for (std::size_t k = 0; k < p.windows.size(); ++k) {
      windows.push_back({{"core_begin", p.windows[k].core_begin},
                         {"tokens", sequence_to_json(p.windows[k].tokens)},
                         {"gt", sequence_to_json(p.gt_windows.at(k))}});
    }
    json j = session_to_json(p.session, p.predicted_counts);
    j["subject"] = p.subject;
    j["activity"] = p.activity;
    j["duration_s"] = p.duration_s;
    j["true_counts"] = counts_to_json(p.true_counts);
    j["windows"] = windows;
    arr.push_back(j);
  }
  return arr;
}

namespace {

PrimitiveCounts counts_from_json(const json& j) {
  PrimitiveCounts c;
  for (auto cls : kAllClasses) c.counts[code_of(cls)] = j.at(std::string(to_string(cls))).get<std::size_t>();
  return c;
}

}  // namespace

std::vector<RecordingPrediction> predictions_from_json(const json& j) {
  std::vector<RecordingPrediction> out;
  try {
    for (const auto& r : j) {
      RecordingPrediction p;
      p.recording_id = r.at("recording").get<std::string>();
      p.subject = r.at("subject").get<std::string>();
      p.activity = r.at("activity").get<std::string>();
      p.duration_s = r.at("duration_s").get<double>();
      p.session = {p.recording_id, sequence_from_json(r.at("sequence"))};
      p.predicted_counts = counts_from_json(r.at("counts"));
      p.predicted_counts.activity = p.activity;
      p.true_counts = counts_from_json(r.at("true_counts"));
      p.true_counts.activity = p.activity;
      for (const auto& w : r.at("windows")) {
        p.windows.push_back({p.recording_id, w.at("core_begin").get<std::size_t>(), sequence_from_json(w.at("tokens"))});
        p.gt_windows.push_back(sequence_from_json(w.at("gt")));
      }
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("predictions: ") + e.what());
  }
  return out;
}

// --- evaluation ------------------------------------------------------------

std::vector<ScoredRecord> score_predictions(const std::vector<RecordingPrediction>& preds) {
  std::vector<ScoredRecord> out;
  for (const auto& p : preds) {
    for (std::size_t k = 0; k < p.windows.size(); ++k) {
      out.push_back(score({p.subject, p.activity, p.recording_id, p.gt_windows.at(k), p.windows[k].tokens}));
    }
  }
  return out;
}

json evaluation_json(const std::vector<RecordingPrediction>& preds, const Dataset& data) {
  json out;
  const auto records = score_predictions(preds);
  if (records.empty()) {
    out["windows"] = 0;
    return out;
  }
  out["windows"] = records.size();
  for (auto g : {GroupBy::overall, GroupBy::primitive_class, GroupBy::activity, GroupBy::subject}) {
    json rows = json::array();
    for (const auto& m : aggregate(records, g)) rows.push_back(group_metrics_to_json(m));
    out["metrics"][std::string(to_string(g))] = rows;
  }
  OutcomeTallies pooled;
  for (const auto& r : records) pooled += r.tallies;
  out["tallies"] = pooled.to_json();
  out["confusion_matrix"] = confusion_matrix(pooled).to_json();

  // session level: stitched ground truth against the stitched prediction
  OutcomeTallies session_tallies;
  for (const auto& p : preds) {
    std::vector<WindowPrediction> gt;
    for (std::size_t k = 0; k < p.gt_windows.size(); ++k) gt.push_back({p.recording_id, p.windows[k].core_begin, p.gt_windows[k]});
    session_tallies += tally(align(stitch_windows(gt).sequence, p.session.sequence));
  }
  out["session_metrics"] = metrics_to_json(compute_metrics(session_tallies));

  json counting = json::array();
  std::map<std::string, std::pair<PrimitiveCounts, PrimitiveCounts>> by_activity;
  PrimitiveCounts all_true, all_pred;
  for (const auto& p : preds) {
    counting.push_back({{"recording", p.recording_id},
                        {"subject", p.subject},
                        {"activity", p.activity},
                        {"true", counts_to_json(p.true_counts)},
                        {"predicted", counts_to_json(p.predicted_counts)},
                        {"error_percent", counting_error_to_json(counting_error(p.true_counts, p.predicted_counts))}});
    by_activity[p.activity].first += p.true_counts;
    by_activity[p.activity].second += p.predicted_counts;
    all_true += p.true_counts;
    all_pred += p.predicted_counts;
  }
  json activity_errors = json::object();
  for (const auto& [a, c] : by_activity) activity_errors[a] = counting_error_to_json(counting_error(c.first, c.second));
  out["counting"] = {{"recordings", counting},
                     {"by_activity", activity_errors},
                     {"overall", counting_error_to_json(counting_error(all_true, all_pred))},
                     {"true_total", all_true.total()},
                     {"predicted_total", all_pred.total()}};

  // impairment correlation over subjects with a defined F1
  std::vector<double> fma, f1;
  for (const auto& g : aggregate(records, GroupBy::subject)) {
    const auto* s = data.subject(g.group);
    if (s == nullptr || !g.micro.f1) continue;
    fma.push_back(static_cast<double>(s->ue_fma_score));
    f1.push_back(*g.micro.f1);
  }
  std::optional<double> rho;
  if (fma.size() >= 2) rho = spearman_rho(fma, f1);
  out["ue_fma_f1_spearman"] = rho ? json(*rho) : json(nullptr);
  return out;
}

void write_counts_csv(const std::vector<RecordingPrediction>& preds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << "recording,subject,activity,class,true,predicted,error_percent\n";
  for (const auto& p : preds) {
    for (auto c : kAllClasses) {
      const auto e = counting_error_percent(p.true_counts[c], p.predicted_counts[c]);
      out << p.recording_id << ',' << p.subject << ',' << p.activity << ',' << to_string(c) << ','
          << p.true_counts[c] << ',' << p.predicted_counts[c] << ',' << (e ? json(*e).dump() : "undefined") << '\n';
    }
  }
}

void write_metrics_csv(const json& evaluation, const std::filesystem::path& path, const std::string& model_name,
                       bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  if (!append) out << "model,group_by,group,tp,fn,fp,sensitivity,fdr,f1,aer\n";
  if (!evaluation.contains("metrics")) return;
  auto cell = [](const json& v) { return v.is_null() ? std::string("undefined") : v.dump(); };
  for (const auto& [group_by, rows] : evaluation.at("metrics").items()) {
    for (const auto& r : rows) {
      const auto& m = r.at("micro");
      out << model_name << ',' << group_by << ',' << r.at("group").get<std::string>() << ',' << r.at("tp") << ','
          << r.at("fn") << ',' << r.at("fp") << ',' << cell(m.at("sensitivity")) << ',' << cell(m.at("fdr")) << ','
          << cell(m.at("f1")) << ',' << cell(m.at("aer")) << '\n';
    }
  }
}

}  // namespace primseq
