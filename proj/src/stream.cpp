#include "primseq/stream.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include "primseq/error.hpp"

namespace primseq {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

class FrameBuffer {
 public:
  explicit FrameBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(Eigen::RowVectorXd frame) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return frames_.size() < capacity_; });
    frames_.push_back(std::move(frame));
    not_empty_.notify_one();
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_one();
  }

  /// Moves every buffered frame into `out`; false once closed and drained.
  bool drain(std::vector<Eigen::RowVectorXd>& out) {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !frames_.empty() || closed_; });
    if (frames_.empty()) return false;
    while (!frames_.empty()) {
      out.push_back(std::move(frames_.front()));
      frames_.pop_front();
    }
    not_full_.notify_one();
    return true;
  }

 private:
  std::size_t capacity_;
  std::deque<Eigen::RowVectorXd> frames_;
  bool closed_ = false;
  std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

StreamResult stream_replay(const LabeledRecording& rec, const EnsembleModel& ensemble, const RunConfig& config,
                           double speed, const std::function<void(const StreamEvent&)>& on_event) {
  ensemble.validate();
  if (ensemble.config().input_dim != rec.recording.channel_count()) {
    throw Error(ErrorCode::dimension_mismatch, "ensemble expects " + std::to_string(ensemble.config().input_dim) +
                                                   " channels, recording has " +
                                                   std::to_string(rec.recording.channel_count()));
  }
  if (!(speed > 0.0)) throw Error(ErrorCode::invalid_argument, "speed must be positive");
  const bool throttled = std::isfinite(speed);
  const auto builder = WindowBuilder::from_config(config);
  const auto& spec = config.window;
  const double rate = spec.sample_rate_hz;
  const std::size_t n = rec.recording.frame_count();
  const std::size_t core = spec.core_frames();
  const std::size_t flank = spec.flank_frames();
  const std::size_t slide = spec.slide_frames(WindowMode::test);
  const std::string id = rec.id();

  FrameBuffer buffer(spec.window_frames());
  const auto t0 = Clock::now();

  std::jthread producer([&] {
    for (std::size_t i = 0; i < n; ++i) {
      if (throttled) {
        // frame i is complete at the end of its sample period
        const auto due = t0 + std::chrono::duration_cast<Clock::duration>(
                                  std::chrono::duration<double>(static_cast<double>(i + 1) / (rate * speed)));
        std::this_thread::sleep_until(due);
      }
      buffer.push(rec.recording.frames.row(static_cast<Eigen::Index>(i)));
    }
    buffer.close();
  });

  StreamResult result;
  Stitcher stitcher(id);
  Frames raw(static_cast<Eigen::Index>(n), rec.recording.frames.cols());
  std::size_t available = 0;
  std::size_t next_start = 0;
  std::size_t window_index = 0;
  std::vector<Eigen::RowVectorXd> incoming;

  auto emit = [&](std::size_t start) {
    const auto c0 = Clock::now();
    const Frames prefix = raw.topRows(static_cast<Eigen::Index>(available));
    const auto pred = decode_window(ensemble, builder.build(prefix, start, id));
    StreamEvent e;
    e.recording_id = id;
    e.window_index = window_index++;
    e.core_begin = start;
    e.core_end = std::min(start + core, available);
    e.tokens_added = stitcher.push(pred);
    e.counts = count(stitcher.session());
    e.compute_s = std::chrono::duration<double>(Clock::now() - c0).count();
    e.timestamp_s = seconds_since(t0);
    if (throttled) e.lag_s = e.timestamp_s * speed - static_cast<double>(e.core_end) / rate;
    result.max_compute_s = std::max(result.max_compute_s, e.compute_s);
    if (e.lag_s) result.max_lag_s = std::max(result.max_lag_s.value_or(*e.lag_s), *e.lag_s);
    if (on_event) on_event(e);
    result.events.push_back(std::move(e));
  };

  try {
    while (buffer.drain(incoming)) {
      for (auto& f : incoming) raw.row(static_cast<Eigen::Index>(available++)) = f;
      incoming.clear();
      // a core is decodable once its trailing flank has arrived
      while (next_start < n && next_start + core + flank <= available) {
        emit(next_start);
        next_start += slide;
      }
    }
    for (auto s : core_starts(n, spec, WindowMode::test)) {
      if (s >= next_start) emit(s);
    }
  } catch (...) {
    // let the producer finish so the buffer is not left blocked
    std::vector<Eigen::RowVectorXd> sink;
    while (buffer.drain(sink)) sink.clear();
    throw;
  }

  result.session = stitcher.session();
  result.counts = count(result.session);
  result.counts.activity = rec.recording.activity;
  result.wall_s = seconds_since(t0);
  return result;
}

double causal_lag_floor_s(const StreamEvent& e, std::size_t frame_count, const WindowSpec& spec) {
  const auto after = frame_count - std::min(frame_count, e.core_end);
  return static_cast<double>(std::min(spec.flank_frames(), after)) / spec.sample_rate_hz;
}

json stream_event_to_json(const StreamEvent& e) {
  return {{"recording", e.recording_id},
          {"window", e.window_index},
          {"core_begin", e.core_begin},
          {"core_end", e.core_end},
          {"timestamp_s", e.timestamp_s},
          {"tokens_added", e.tokens_added},
          {"counts", counts_to_json(e.counts)},
          {"lag_s", e.lag_s ? json(*e.lag_s) : json(nullptr)},
          {"compute_s", e.compute_s}};
}

json stream_report_json(const StreamResult& r) {
  json lags = json::array();
  for (const auto& e : r.events) lags.push_back(e.lag_s ? json(*e.lag_s) : json(nullptr));
  return {{"recording", r.session.recording_id},
          {"sequence", sequence_to_json(r.session.sequence)},
          {"counts", counts_to_json(r.counts)},
          {"windows", r.events.size()},
          {"lag_s", lags},
          {"max_lag_s", r.max_lag_s ? json(*r.max_lag_s) : json(nullptr)},
          {"max_compute_s", r.max_compute_s},
          {"wall_s", r.wall_s}};
}

}  // namespace primseq
