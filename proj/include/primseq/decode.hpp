#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "primseq/model.hpp"
#include "primseq/preprocess.hpp"

namespace primseq {

struct WindowPrediction {
  std::string recording_id;
  std::size_t core_begin = 0;
  PrimitiveSequence tokens;
};

struct SessionPrediction {
  std::string recording_id;
  PrimitiveSequence sequence;
};

struct PrimitiveCounts {
  std::array<std::size_t, kNumClasses> counts{};
  std::optional<std::string> activity;

  std::size_t total() const;
  std::size_t operator[](PrimitiveClass c) const { return counts[code_of(c)]; }
  PrimitiveCounts& operator+=(const PrimitiveCounts& other);
  bool operator==(const PrimitiveCounts&) const = default;
};

/// A source of per-step token distributions; lets tests drive decode_window
/// with hand-set distributions.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual void reset(const Frames& raw_window) = 0;
  virtual TokenDistribution step(std::size_t prev_token) = 0;
};

/// Greedy decode shared by all members: distributions are averaged
/// elementwise, the argmax (lowest code on ties) is appended unless it is EOS,
/// and fed back to every member. Stops at EOS or `max_decode_len`.
PrimitiveSequence ensemble_greedy_decode(std::vector<StepModel*>& members, const Frames& raw_window,
                                         std::size_t max_decode_len);

/// Each member normalizes the raw (sensor-centric) window with its own stats.
WindowPrediction decode_window(const EnsembleModel& ensemble, const Window& window);

/// Incremental boundary-deduplicating concatenation with one-token lookback.
class Stitcher {
 public:
  explicit Stitcher(std::string recording_id) : session_{std::move(recording_id), {}} {}

  /// Appends a window; returns the number of tokens actually added.
  /// Throws on a window from another recording or out of core order.
  std::size_t push(const WindowPrediction& window);
  const SessionPrediction& session() const { return session_; }
  std::size_t merges() const { return merges_; }

 private:
  SessionPrediction session_;
  std::optional<std::size_t> last_core_begin_;
  std::size_t merges_ = 0;
};

SessionPrediction stitch_windows(const std::vector<WindowPrediction>& predictions);

PrimitiveCounts count(const PrimitiveSequence& sequence);
PrimitiveCounts count(const SessionPrediction& session);
/// Per-class segment counts of a labeled recording.
PrimitiveCounts count(const std::vector<PrimitiveSegment>& segments);

struct CountingError {
  // 100·(true − predicted)/true per class; nullopt when the true count is 0
  std::array<std::optional<double>, kNumClasses> per_class;
  std::optional<double> pooled;
};

std::optional<double> counting_error_percent(std::size_t true_count, std::size_t predicted_count);
CountingError counting_error(const PrimitiveCounts& truth, const PrimitiveCounts& predicted);

nlohmann::json counts_to_json(const PrimitiveCounts& counts);
nlohmann::json session_to_json(const SessionPrediction& session, const PrimitiveCounts& counts);
nlohmann::json counting_error_to_json(const CountingError& e);
nlohmann::json sequence_to_json(const PrimitiveSequence& seq);
PrimitiveSequence sequence_from_json(const nlohmann::json& j);

}  // namespace primseq
