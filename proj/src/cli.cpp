#include "primseq/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "primseq/config.hpp"
#include "primseq/error.hpp"
#include "primseq/model_io.hpp"
#include "primseq/pipeline.hpp"
#include "primseq/stream.hpp"

namespace primseq {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string data_dir;
  double speed = 1.0;
  std::optional<std::size_t> folds;
  std::string recording;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c;
  if (!o.config_path.empty()) c = load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.folds) c.n_folds = *o.folds;
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  if (!o.data_dir.empty()) c.data_root = o.data_dir;
  c.validate();
  return c;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// wall-clock per stage lives in its own file so every other output stays reproducible
void record_timing(const fs::path& out, const std::string& stage, double seconds) {
  const auto path = out / "timing.json";
  json t = fs::exists(path) ? read_json(path) : json::object();
  t[stage] = seconds;
  write_json(t, path);
}

fs::path model_path(const fs::path& out, std::size_t fold) { return out / ("model." + std::to_string(fold) + ".bin"); }

EnsembleModel load_ensemble(const RunConfig& c) {
  EnsembleModel e;
  for (std::size_t k = 0; k < c.n_folds; ++k) {
    const auto p = model_path(c.output_dir, k);
    if (!fs::exists(p)) throw Error(ErrorCode::io, "missing " + p.string() + " (run train first)");
    e.members.push_back(load_member(p));
  }
  e.validate();
  return e;
}

std::set<std::string> test_subjects(const RunConfig& c, const Dataset& data) {
  const auto path = c.output_dir / "splits.json";
  std::set<std::string> out;
  if (fs::exists(path)) {
    const auto j = read_json(path);
    for (const auto& s : j.at("test_subjects")) out.insert(s.get<std::string>());
  } else {
    std::vector<std::string> ids;
    for (const auto& s : data.subjects) ids.push_back(s.subject_id);
    out = held_out_subjects(ids, c.n_test_subjects, c.seed);
  }
  if (out.empty()) {
    for (const auto& s : data.subjects) out.insert(s.subject_id);
  }
  return out;
}

json versions_json() {
  return {{"primseq", kVersion},
          {"model_format", kModelFormatVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)}};
}

json set_json(const std::set<std::string>& s) { return json(std::vector<std::string>(s.begin(), s.end())); }

// --- commands --------------------------------------------------------------

int cmd_synth(const Options& o, std::ostream& out) {
  RunConfig c = resolve_config(o);
  c.validate_paths(false);
  const fs::path dir = o.out_dir.empty() ? c.data_root : fs::path(o.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec = c.synth;
  spec.manifest = c.manifest();
  const auto data = synthesize_dataset(spec, c.seed);
  save_dataset(data, dir);
  std::size_t segments = 0;
  for (const auto& r : data.recordings) segments += r.segments.size();
  out << "synthesized " << data.recordings.size() << " recordings (" << segments << " segments) into "
      << dir.string() << " in " << elapsed(t0) << " s\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  c.validate_paths(true);
  const auto data = load_dataset(c.data_root);
  fs::create_directories(c.output_dir);
  save_config(c, c.output_dir / "config.json");

  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train_ensemble(data, c, 0, MemberSchedule::sequential, [&](std::size_t fold, const EpochLog& e) {
    out << "fold " << fold << " epoch " << e.epoch << ": loss " << e.train_loss << ", validation AER " << e.val_aer
        << std::endl;
  });
  for (std::size_t k = 0; k < result.model.members.size(); ++k) {
    save_member(result.model.members[k], model_path(c.output_dir, k));
  }
  json splits = json::array();
  for (const auto& s : result.splits) {
    splits.push_back({{"train", set_json(s.train_subjects)}, {"val", set_json(s.val_subjects)}});
  }
  const auto test = result.splits.empty() ? std::set<std::string>{} : result.splits.front().test_subjects;
  write_json({{"folds", splits}, {"test_subjects", set_json(test)}}, c.output_dir / "splits.json");
  json logs = json::array();
  for (std::size_t k = 0; k < result.fits.size(); ++k) {
    json l = training_log_to_json(result.fits[k]);
    l["fold"] = k;
    logs.push_back(l);
    out << "fold " << k << ": best epoch " << result.fits[k].best_epoch << ", validation AER "
        << result.fits[k].best_aer << '\n';
  }
  write_json(logs, c.output_dir / "training.json");
  record_timing(c.output_dir, "train", elapsed(t0));

  if (c.baseline.enabled) {
    const auto tb = std::chrono::steady_clock::now();
    std::set<std::string> train_subjects;
    for (const auto& s : data.subjects) {
      if (!test.contains(s.subject_id)) train_subjects.insert(s.subject_id);
    }
    write_json(train_baseline(data, train_subjects, c).to_json(), c.output_dir / "baseline.json");
    record_timing(c.output_dir, "train_baseline", elapsed(tb));
  }
  return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  c.validate_paths(true);
  const auto data = load_dataset(c.data_root);
  const auto ensemble = load_ensemble(c);
  const auto recs = data.recordings_of(test_subjects(c, data));
  const auto t0 = std::chrono::steady_clock::now();
  const auto preds = predict_recordings(ensemble, recs, c);
  write_json(predictions_to_json(preds), c.output_dir / "predictions.json");
  record_timing(c.output_dir, "predict", elapsed(t0));
  out << "predicted " << preds.size() << " recordings\n";

  const auto baseline_path = c.output_dir / "baseline.json";
  if (c.baseline.enabled && fs::exists(baseline_path)) {
    const auto tb = std::chrono::steady_clock::now();
    const auto model = BaselineModel::from_json(read_json(baseline_path));
    std::vector<RecordingPrediction> bp;
    for (const auto* r : recs) bp.push_back(predict_baseline(model, *r, c));
    write_json(predictions_to_json(bp), c.output_dir / "baseline_predictions.json");
    record_timing(c.output_dir, "predict_baseline", elapsed(tb));
  }
  return kExitOk;
}

int cmd_count(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  const auto preds = predictions_from_json(read_json(c.output_dir / "predictions.json"));
  json sessions = json::array();
  for (const auto& p : preds) sessions.push_back(session_to_json(p.session, p.predicted_counts));
  write_json(sessions, c.output_dir / "counts.json");
  write_counts_csv(preds, c.output_dir / "counts.csv");
  for (const auto& p : preds) {
    out << p.recording_id << ": " << p.predicted_counts.total() << " primitives (true " << p.true_counts.total()
        << ")\n";
  }
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  c.validate_paths(true);
  const auto data = load_dataset(c.data_root);
  const auto t0 = std::chrono::steady_clock::now();
  const auto preds = predictions_from_json(read_json(c.output_dir / "predictions.json"));
  json report;
  report["config_hash"] = c.hash();
  report["config"] = c.to_json();
  report["versions"] = versions_json();
  if (fs::exists(c.output_dir / "splits.json")) report["splits"] = read_json(c.output_dir / "splits.json");
  if (fs::exists(c.output_dir / "training.json")) {
    json summary = json::array();
    for (const auto& l : read_json(c.output_dir / "training.json")) {
      summary.push_back({{"fold", l.at("fold")},
                         {"best_epoch", l.at("best_epoch")},
                         {"best_aer", l.at("best_aer")},
                         {"epochs", l.at("epochs").size()}});
    }
    report["training"] = summary;
  }
  report["evaluation"] = evaluation_json(preds, data);
  write_metrics_csv(report["evaluation"], c.output_dir / "metrics.csv", "seq2seq", false);
  const auto baseline_path = c.output_dir / "baseline_predictions.json";
  if (fs::exists(baseline_path)) {
    report["baseline"] = evaluation_json(predictions_from_json(read_json(baseline_path)), data);
    write_metrics_csv(report["baseline"], c.output_dir / "metrics.csv", "baseline", true);
  }
  record_timing(c.output_dir, "eval", elapsed(t0));
  report["timing"] = read_json(c.output_dir / "timing.json");
  write_json(report, c.output_dir / "report.json");

  const auto& overall = report["evaluation"]["metrics"]["overall"];
  if (!overall.empty()) out << "overall: " << overall[0]["micro"].dump() << '\n';
  if (report.contains("baseline") && report["baseline"].contains("metrics")) {
    out << "baseline: " << report["baseline"]["metrics"]["overall"][0]["micro"].dump() << '\n';
  }
  return kExitOk;
}

int cmd_bench(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  c.validate_paths(true);
  const auto data = load_dataset(c.data_root);
  const auto ensemble = load_ensemble(c);
  const auto builder = WindowBuilder::from_config(c);
  using clock = std::chrono::steady_clock;
  double window_s = 0.0, decode_s = 0.0, stitch_s = 0.0, duration_s = 0.0;
  std::size_t windows = 0;
  const auto recs = data.recordings_of(test_subjects(c, data));
  for (const auto* r : recs) {
    const auto id = r->id();
    duration_s += r->recording.duration_s();
    std::vector<WindowPrediction> preds;
    for (auto s : core_starts(r->recording.frame_count(), c.window, WindowMode::test)) {
      auto t = clock::now();
      const auto w = builder.build(r->recording.frames, s, id);
      window_s += elapsed(t);
      t = clock::now();
      preds.push_back(decode_window(ensemble, w));
      decode_s += elapsed(t);
      ++windows;
    }
    const auto t = clock::now();
    const auto counts = count(stitch_windows(preds));
    stitch_s += elapsed(t);
    (void)counts;
  }
  const double total = window_s + decode_s + stitch_s;
  const double minutes = duration_s / 60.0;
  const json report = {{"recordings", recs.size()},
                       {"windows", windows},
                       {"processed_duration_s", duration_s},
                       {"compute_s", total},
                       {"seconds_per_minute", minutes > 0.0 ? json(total / minutes) : json(0.0)},
                       {"stages_s", {{"windowing", window_s}, {"decode", decode_s}, {"stitch_count", stitch_s}}},
                       {"members", ensemble.members.size()},
                       {"hidden_dim", ensemble.config().hidden_dim}};
  fs::create_directories(c.output_dir);
  write_json(report, c.output_dir / "bench.json");
  out << report.dump(2) << '\n';
  return kExitOk;
}

int cmd_stream(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  c.validate_paths(true);
  if (!(o.speed > 0.0)) throw UsageError("--speed must be positive (use inf for unthrottled replay)");
  const auto data = load_dataset(c.data_root);
  const auto ensemble = load_ensemble(c);
  std::vector<const LabeledRecording*> recs;
  if (!o.recording.empty()) {
    for (const auto& r : data.recordings) {
      if (r.id() == o.recording) recs.push_back(&r);
    }
    if (recs.empty()) throw Error(ErrorCode::invalid_argument, "no recording '" + o.recording + "'");
  } else {
    recs = data.recordings_of(test_subjects(c, data));
  }
  std::ofstream events(c.output_dir / "stream_events.jsonl");
  if (!events) throw Error(ErrorCode::io, "cannot write stream_events.jsonl");
  json reports = json::array();
  for (const auto* r : recs) {
    const auto result = stream_replay(*r, ensemble, c, o.speed, [&](const StreamEvent& e) {
      events << stream_event_to_json(e).dump() << '\n';
      events.flush();
      out << e.recording_id << " window " << e.window_index << ": +" << e.tokens_added << " -> "
          << e.counts.total() << " primitives\n";
    });
    reports.push_back(stream_report_json(result));
  }
  write_json(reports, c.output_dir / "stream_report.json");
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Functional primitive sequence prediction and counting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;
  std::string speed_text = "1.0";

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Run config JSON");
    sub->add_option("--seed", o.seed, "Override the run seed");
    sub->add_option("--out", o.out_dir, "Output directory");
    sub->add_option("--data", o.data_dir, "Dataset directory");
    return sub;
  };
  auto* synth = common(app.add_subcommand("synth", "Generate a synthetic dataset"));
  auto* train = common(app.add_subcommand("train", "Train the fold ensemble and the baseline"));
  train->add_option("--folds", o.folds, "Number of folds (ensemble members)");
  auto* predict = common(app.add_subcommand("predict", "Predict held-out recordings"));
  auto* count_cmd = common(app.add_subcommand("count", "Export primitive counts"));
  auto* eval = common(app.add_subcommand("eval", "Score predictions and write report.json"));
  auto* bench = common(app.add_subcommand("bench", "Time the decode, stitch and count path"));
  auto* stream = common(app.add_subcommand("stream", "Replay recordings in simulated real time"));
  stream->add_option("--speed", speed_text, "Replay speed factor, or inf");
  stream->add_option("--recording", o.recording, "Replay a single recording id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (speed_text == "inf" || speed_text == "infinity") {
      o.speed = kUnboundedSpeed;
    } else {
      try {
        o.speed = std::stod(speed_text);
      } catch (const std::exception&) {
        throw UsageError("--speed expects a number or inf");
      }
    }
    if (!o.config_path.empty() && !fs::exists(o.config_path)) {
      throw UsageError("config not found: " + o.config_path);
    }
    if (*synth) return cmd_synth(o, out);
    if (*train) return cmd_train(o, out);
    if (*predict) return cmd_predict(o, out);
    if (*count_cmd) return cmd_count(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*bench) return cmd_bench(o, out);
    if (*stream) return cmd_stream(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::config ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("primseq");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace primseq
