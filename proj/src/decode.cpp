#include "primseq/decode.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

#include "primseq/error.hpp"

namespace primseq {

using nlohmann::json;

namespace {

class MemberStepModel final : public StepModel {
 public:
  explicit MemberStepModel(const EnsembleMember& member) : member_(member) {}

  void reset(const Frames& raw_window) override {
    Frames normalized = raw_window;
    apply_normalization(normalized, member_.stats);
    state_ = init_decoder(encode(member_.params, normalized));
  }

  TokenDistribution step(std::size_t prev_token) override {
    auto out = decode_step(member_.params, state_, prev_token);
    state_ = std::move(out.state);
    return out.probabilities;
  }

 private:
  const EnsembleMember& member_;
  DecoderState state_;
};

}  // namespace

std::size_t PrimitiveCounts::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

PrimitiveCounts& PrimitiveCounts::operator+=(const PrimitiveCounts& other) {
  for (std::size_t c = 0; c < kNumClasses; ++c) counts[c] += other.counts[c];
  return *this;
}

PrimitiveSequence ensemble_greedy_decode(std::vector<StepModel*>& members, const Frames& raw_window,
                                         std::size_t max_decode_len) {
  if (members.empty()) throw Error(ErrorCode::invalid_argument, "ensemble has no members");
  for (auto* m : members) m->reset(raw_window);
  PrimitiveSequence out;
  std::size_t token = kSosToken;
  const double inv = 1.0 / static_cast<double>(members.size());
  for (std::size_t step = 0; step < max_decode_len; ++step) {
    TokenDistribution avg{};
    for (auto* m : members) {
      const auto p = m->step(token);
      for (std::size_t v = 0; v < kVocabSize; ++v) avg[v] += p[v];
    }
    for (auto& v : avg) v *= inv;
    token = static_cast<std::size_t>(std::max_element(avg.begin(), avg.end()) - avg.begin());
    if (token == kEosToken || token == kSosToken) break;
    out.push_back(class_from_code(token));
  }
  return out;
}

WindowPrediction decode_window(const EnsembleModel& ensemble, const Window& window) {
  const auto& config = ensemble.config();
  std::vector<std::unique_ptr<MemberStepModel>> owned;
  std::vector<StepModel*> members;
  for (const auto& m : ensemble.members) {
    owned.push_back(std::make_unique<MemberStepModel>(m));
    members.push_back(owned.back().get());
  }
  WindowPrediction pred;
  pred.recording_id = window.recording_id;
  pred.core_begin = window.origin_core_begin;
  pred.tokens = ensemble_greedy_decode(members, window.frames, config.max_decode_len());
  if (pred.tokens.size() > config.max_tokens) pred.tokens.resize(config.max_tokens);
  return pred;
}

std::size_t Stitcher::push(const WindowPrediction& window) {
  if (window.recording_id != session_.recording_id) {
    throw Error(ErrorCode::mixed_recordings,
                "window from '" + window.recording_id + "' pushed into '" + session_.recording_id + "'");
  }
  if (last_core_begin_ && window.core_begin <= *last_core_begin_) {
    throw Error(ErrorCode::unsorted_input, "window cores must arrive in increasing start order");
  }
  last_core_begin_ = window.core_begin;
  if (window.tokens.empty()) return 0;
  auto& seq = session_.sequence;
  auto first = window.tokens.begin();
  if (!seq.empty() && seq.back() == *first) {
    ++first;
    ++merges_;
  }
  const auto added = static_cast<std::size_t>(window.tokens.end() - first);
  seq.insert(seq.end(), first, window.tokens.end());
  return added;
}

SessionPrediction stitch_windows(const std::vector<WindowPrediction>& predictions) {
  if (predictions.empty()) return {};
  Stitcher stitcher(predictions.front().recording_id);
  for (const auto& p : predictions) stitcher.push(p);
  return stitcher.session();
}

PrimitiveCounts count(const PrimitiveSequence& sequence) {
  PrimitiveCounts c;
  for (auto t : sequence) ++c.counts[code_of(t)];
  return c;
}

PrimitiveCounts count(const SessionPrediction& session) { return count(session.sequence); }

PrimitiveCounts count(const std::vector<PrimitiveSegment>& segments) {
  PrimitiveCounts c;
  for (const auto& s : segments) ++c.counts[code_of(s.cls)];
  return c;
}

std::optional<double> counting_error_percent(std::size_t true_count, std::size_t predicted_count) {
  if (true_count == 0) return std::nullopt;
  return 100.0 * (static_cast<double>(true_count) - static_cast<double>(predicted_count)) /
         static_cast<double>(true_count);
}

CountingError counting_error(const PrimitiveCounts& truth, const PrimitiveCounts& predicted) {
  CountingError e;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    e.per_class[c] = counting_error_percent(truth.counts[c], predicted.counts[c]);
  }
  e.pooled = counting_error_percent(truth.total(), predicted.total());
  return e;
}

json counts_to_json(const PrimitiveCounts& counts) {
  json j = json::object();
  for (auto c : kAllClasses) j[std::string(to_string(c))] = counts[c];
  return j;
}

json sequence_to_json(const PrimitiveSequence& seq) {
  json arr = json::array();
  for (auto t : seq) arr.push_back(to_string(t));
  return arr;
}

PrimitiveSequence sequence_from_json(const json& j) {
  PrimitiveSequence seq;
  for (const auto& t : j) seq.push_back(primitive_from_string(t.get<std::string>()));
  return seq;
}

json session_to_json(const SessionPrediction& session, const PrimitiveCounts& counts) {
  return {{"recording", session.recording_id},
          {"sequence", sequence_to_json(session.sequence)},
          {"counts", counts_to_json(counts)}};
}

json counting_error_to_json(const CountingError& e) {
  json j = json::object();
  for (auto c : kAllClasses) {
    const auto& v = e.per_class[code_of(c)];
    j[std::string(to_string(c))] = v ? json(*v) : json("undefined");
  }
  j["pooled"] = e.pooled ? json(*e.pooled) : json("undefined");
  return j;
}

}  // namespace primseq
