#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <json.hpp>

#include "primseq/pipeline.hpp"

namespace primseq {

inline constexpr double kUnboundedSpeed = std::numeric_limits<double>::infinity();

struct StreamEvent {
  std::string recording_id;
  std::size_t window_index = 0;
  std::size_t core_begin = 0;
  std::size_t core_end = 0;
  // seconds since replay start on the monotonic clock
  double timestamp_s = 0.0;
  std::size_t tokens_added = 0;
  PrimitiveCounts counts;
  // emit time minus core end time, in recording seconds; absent when unthrottled
  std::optional<double> lag_s;
  double compute_s = 0.0;
};

struct StreamResult {
  SessionPrediction session;
  PrimitiveCounts counts;
  std::vector<StreamEvent> events;
  std::optional<double> max_lag_s;
  double max_compute_s = 0.0;
  double wall_s = 0.0;
};

/// Replays `rec` through a bounded frame buffer on a clock scaled by `speed`
/// (kUnboundedSpeed disables throttling). Each window is decoded as soon as
/// its trailing flank has arrived and stitched incrementally. Throws
/// Error(dimension_mismatch) when the ensemble and recording disagree.
StreamResult stream_replay(const LabeledRecording& rec, const EnsembleModel& ensemble, const RunConfig& config,
                           double speed = 1.0, const std::function<void(const StreamEvent&)>& on_event = {});

/// Smallest lag a window can show: the trailing flank, or what remains of the recording after the core.
double causal_lag_floor_s(const StreamEvent& e, std::size_t frame_count, const WindowSpec& spec);

nlohmann::json stream_event_to_json(const StreamEvent& e);
nlohmann::json stream_report_json(const StreamResult& r);

}  // namespace primseq
