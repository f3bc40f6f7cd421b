#include "primseq/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "primseq/error.hpp"

namespace primseq {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kReservedActivities = {
    "shelf",         "tabletop",           "feeding",       "drinking",       "combing_hair",
    "donning_glasses", "applying_deodorant", "washing_face", "brushing_teeth"};

namespace {

std::string_view kind_name(QuantityKind k) {
  switch (k) {
    case QuantityKind::acceleration: return "acceleration";
    case QuantityKind::quaternion_component: return "quaternion_component";
    case QuantityKind::joint_angle: return "joint_angle";
  }
  return "joint_angle";
}

QuantityKind kind_from_name(const std::string& s) {
  if (s == "acceleration") return QuantityKind::acceleration;
  if (s == "quaternion_component") return QuantityKind::quaternion_component;
  if (s == "joint_angle") return QuantityKind::joint_angle;
  throw Error(ErrorCode::parse, "unknown quantity kind '" + s + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    fields.push_back(trim(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return fields;
}

double parse_double(std::string_view field, std::size_t row, std::size_t col) {
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw Error(ErrorCode::parse, "malformed value '" + std::string(field) + "' at row " +
                                      std::to_string(row) + ", column " + std::to_string(col));
  }
  return v;
}

std::string subject_name(std::size_t index, std::size_t total) {
  const int width = total >= 100 ? 3 : 2;
  std::ostringstream ss;
  ss << 'S' << std::setw(width) << std::setfill('0') << (index + 1);
  return ss.str();
}

std::size_t to_frames(double seconds, double rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

struct SignatureTable {
  std::vector<Eigen::VectorXd> offsets;  // per class
  Eigen::VectorXd phases;
  std::array<double, kNumClasses> freqs{};
};

constexpr double kQuaternionBias = 2.0;

SignatureTable make_signature_table(const SynthSpec& spec, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(spec.manifest.channel_count());
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SignatureTable table;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    Eigen::VectorXd off(n);
    for (Eigen::Index i = 0; i < n; ++i) off[i] = spec.offset_scale * normal(rng);
    table.offsets.push_back(std::move(off));
    table.freqs[c] = spec.base_frequency_hz + spec.frequency_step_hz * static_cast<double>(c);
  }
  table.phases.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) table.phases[i] = 2.0 * std::numbers::pi * unit(rng);
  return table;
}

// Raw (pre-quaternion-normalization) signature.
void raw_signature(const SynthSpec& spec, const SignatureTable& table, PrimitiveClass cls, double t,
                   Eigen::Ref<Eigen::RowVectorXd> out) {
  const auto c = code_of(cls);
  const double w = 2.0 * std::numbers::pi * table.freqs[c] * t;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = table.offsets[c][i] + spec.amplitude * std::sin(w + table.phases[i]);
  }
  for (auto g : spec.manifest.quaternion_groups()) out[static_cast<Eigen::Index>(g)] += kQuaternionBias;
}

void normalize_quaternion_groups(const ChannelManifest& manifest, Eigen::Ref<Eigen::RowVectorXd> row) {
  for (auto g : manifest.quaternion_groups()) {
    auto q = row.segment(static_cast<Eigen::Index>(g), 4);
    q /= q.norm();
  }
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 finalizer over a combined key
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

// --- ChannelManifest -------------------------------------------------------

ChannelManifest::ChannelManifest(std::vector<ChannelDescriptor> channels) : channels_(std::move(channels)) {
  if (channels_.empty()) throw Error(ErrorCode::invalid_argument, "manifest has no channels");
  for (std::size_t i = 0; i < channels_.size();) {
    if (channels_[i].kind != QuantityKind::quaternion_component) {
      ++i;
      continue;
    }
    if (i + 4 > channels_.size()) {
      throw Error(ErrorCode::invalid_argument, "incomplete quaternion group at channel " + std::to_string(i));
    }
    for (std::size_t k = 1; k < 4; ++k) {
      const auto& c = channels_[i + k];
      if (c.kind != QuantityKind::quaternion_component || c.sensor_id != channels_[i].sensor_id) {
        throw Error(ErrorCode::invalid_argument,
                    "quaternion components of sensor '" + channels_[i].sensor_id + "' are not contiguous");
      }
    }
    quaternion_groups_.push_back(i);
    i += 4;
  }
}

ChannelManifest ChannelManifest::default_manifest() {
  static const std::array<std::string, 9> sensors = {"pelvis",         "upper_trunk",   "head",
                                                     "right_upper_arm", "right_forearm", "right_hand",
                                                     "left_upper_arm",  "left_forearm",  "left_hand"};
  static const std::array<std::string, 14> angles = {
      "trunk_flexion",        "trunk_lateral_flexion", "trunk_rotation",
      "right_shoulder_flexion", "right_shoulder_abduction", "right_shoulder_rotation",
      "right_elbow_flexion",  "right_forearm_pronation", "right_wrist_flexion",
      "left_shoulder_flexion", "left_shoulder_abduction", "left_shoulder_rotation",
      "left_elbow_flexion",   "left_wrist_flexion"};
  std::vector<ChannelDescriptor> ch;
  for (const auto& s : sensors) {
    for (const char* axis : {"x", "y", "z"}) {
      ch.push_back({s + "_acc_" + axis, s, QuantityKind::acceleration, "m/s^2"});
    }
    for (const char* comp : {"w", "x", "y", "z"}) {
      ch.push_back({s + "_q" + comp, s, QuantityKind::quaternion_component, "1"});
    }
  }
  for (const auto& a : angles) ch.push_back({a, "skeleton", QuantityKind::joint_angle, "deg"});
  return ChannelManifest(std::move(ch));
}

ChannelManifest ChannelManifest::plain(std::size_t n) {
  std::vector<ChannelDescriptor> ch;
  for (std::size_t i = 0; i < n; ++i) {
    ch.push_back({"ch" + std::to_string(i), "none", QuantityKind::joint_angle, "1"});
  }
  return ChannelManifest(std::move(ch));
}

json ChannelManifest::to_json() const {
  json arr = json::array();
  for (const auto& c : channels_) {
    arr.push_back({{"name", c.name}, {"sensor", c.sensor_id}, {"kind", kind_name(c.kind)}, {"unit", c.unit}});
  }
  return {{"channel_count", channels_.size()}, {"channels", arr}};
}

ChannelManifest ChannelManifest::from_json(const json& j) {
  try {
    std::vector<ChannelDescriptor> ch;
    for (const auto& c : j.at("channels")) {
      ch.push_back({c.at("name").get<std::string>(), c.at("sensor").get<std::string>(),
                    kind_from_name(c.at("kind").get<std::string>()), c.value("unit", std::string{})});
    }
    if (j.contains("channel_count") && j.at("channel_count").get<std::size_t>() != ch.size()) {
      throw Error(ErrorCode::dimension_mismatch, "manifest channel_count disagrees with descriptor list");
    }
    return ChannelManifest(std::move(ch));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("manifest: ") + e.what());
  }
}

ChannelManifest ChannelManifest::load(const fs::path& path) { return from_json(read_json(path)); }

void ChannelManifest::save(const fs::path& path) const { write_text(path, to_json().dump(2) + "\n"); }

// --- records ---------------------------------------------------------------

std::string IMURecording::id() const { return subject_id + "_" + activity + "_" + std::to_string(trial); }

void validate_segments(const std::vector<PrimitiveSegment>& segments, std::size_t frame_count) {
  if (segments.empty()) throw Error(ErrorCode::segment_gap, "no segments");
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.start >= s.end) {
      throw Error(ErrorCode::segment_bounds, "segment " + std::to_string(i) + " has start >= end");
    }
    if (s.end > frame_count) {
      throw Error(ErrorCode::segment_bounds, "segment " + std::to_string(i) + " ends past frame " +
                                                 std::to_string(frame_count));
    }
    if (s.start < cursor) {
      throw Error(ErrorCode::overlapping_segments,
                  "segment " + std::to_string(i) + " starts at " + std::to_string(s.start) +
                      " before previous end " + std::to_string(cursor));
    }
    if (s.start > cursor) {
      throw Error(ErrorCode::segment_gap,
                  "frames [" + std::to_string(cursor) + ", " + std::to_string(s.start) + ") are unlabeled");
    }
    cursor = s.end;
  }
  if (cursor != frame_count) {
    throw Error(ErrorCode::segment_gap,
                "frames [" + std::to_string(cursor) + ", " + std::to_string(frame_count) + ") are unlabeled");
  }
}

void validate_recording(const LabeledRecording& rec, const ChannelManifest& manifest) {
  const auto& r = rec.recording;
  if (!(r.sample_rate_hz > 0.0)) throw Error(ErrorCode::invalid_argument, "sample rate must be positive");
  if (r.channel_count() != manifest.channel_count()) {
    throw Error(ErrorCode::dimension_mismatch, "recording has " + std::to_string(r.channel_count()) +
                                                   " channels, manifest expects " +
                                                   std::to_string(manifest.channel_count()));
  }
  if (!r.frames.allFinite()) throw Error(ErrorCode::non_finite, "recording " + r.id());
  validate_segments(rec.segments, r.frame_count());
}

void validate_subject(const SubjectInfo& s) {
  if (s.ue_fma_score < 0 || s.ue_fma_score > 66) {
    throw Error(ErrorCode::invalid_argument, "UE-FMA score " + std::to_string(s.ue_fma_score) + " outside 0..66");
  }
}

std::string frame_file_name(const std::string& id) { return id + ".frames.csv"; }
std::string label_file_name(const std::string& id) { return id + ".labels.json"; }
std::string meta_file_name(const std::string& id) { return id + ".meta.json"; }

json segments_to_json(const std::vector<PrimitiveSegment>& segments) {
  json arr = json::array();
  for (const auto& s : segments) {
    arr.push_back({{"class", to_string(s.cls)}, {"start", s.start}, {"end", s.end}});
  }
  return arr;
}

std::vector<PrimitiveSegment> segments_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::parse, "labels must be a JSON array");
  std::vector<PrimitiveSegment> out;
  try {
    for (const auto& o : j) {
      out.push_back({primitive_from_string(o.at("class").get<std::string>()), o.at("start").get<std::size_t>(),
                     o.at("end").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("labels: ") + e.what());
  }
  return out;
}

json subject_to_json(const SubjectInfo& s) {
  return {{"subject_id", s.subject_id},
          {"paretic_side", s.paretic_side == PareticSide::left ? "left" : "right"},
          {"ue_fma_score", s.ue_fma_score}};
}

SubjectInfo subject_from_json(const json& j) {
  try {
    SubjectInfo s;
    s.subject_id = j.at("subject_id").get<std::string>();
    const auto side = j.at("paretic_side").get<std::string>();
    if (side != "left" && side != "right") throw Error(ErrorCode::parse, "paretic_side '" + side + "'");
    s.paretic_side = side == "left" ? PareticSide::left : PareticSide::right;
    s.ue_fma_score = j.at("ue_fma_score").get<int>();
    validate_subject(s);
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("subject: ") + e.what());
  }
}

LabeledRecording load_recording(const fs::path& frames_path, const fs::path& labels_path,
                                const ChannelManifest& manifest) {
  LabeledRecording rec;
  auto& r = rec.recording;

  fs::path meta_path = labels_path;
  {
    auto name = labels_path.filename().string();
    const std::string suffix = ".labels.json";
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      meta_path.replace_filename(name.substr(0, name.size() - suffix.size()) + ".meta.json");
    }
  }
  if (meta_path != labels_path && fs::exists(meta_path)) {
    const auto meta = read_json(meta_path);
    try {
      r.subject_id = meta.at("subject_id").get<std::string>();
      r.activity = meta.at("activity").get<std::string>();
      r.trial = meta.at("trial").get<int>();
      r.sample_rate_hz = meta.value("sample_rate_hz", 100.0);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse, meta_path.string() + ": " + e.what());
    }
  } else {
    r.subject_id = frames_path.stem().stem().string();
    r.activity = "unknown";
  }

  const std::string text = read_file(frames_path);
  std::string_view rest(text);
  const std::size_t n = manifest.channel_count();
  std::vector<double> values;
  std::size_t row = 0;
  bool header = true;
  while (!rest.empty()) {
    auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (trim(line).empty()) continue;
    auto fields = split_commas(line);
    if (header) {
      header = false;
      if (fields.size() != n + 1 || fields[0] != "t") {
        throw Error(ErrorCode::dimension_mismatch, "header has " + std::to_string(fields.size()) +
                                                       " columns, expected t + " + std::to_string(n));
      }
      for (std::size_t c = 0; c < n; ++c) {
        if (fields[c + 1] != manifest.channels()[c].name) {
          throw Error(ErrorCode::parse, "header column " + std::to_string(c + 1) + " is '" +
                                            std::string(fields[c + 1]) + "', manifest says '" +
                                            manifest.channels()[c].name + "'");
        }
      }
      continue;
    }
    ++row;
    if (fields.size() != n + 1) {
      throw Error(ErrorCode::dimension_mismatch, "row " + std::to_string(row) + " has " +
                                                     std::to_string(fields.size() - 1) + " values, manifest has " +
                                                     std::to_string(n) + " channels");
    }
    for (std::size_t c = 1; c <= n; ++c) {
      const double v = parse_double(fields[c], row, c);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::non_finite, "row " + std::to_string(row) + ", column " + std::to_string(c));
      }
      values.push_back(v);
    }
  }
  if (header) throw Error(ErrorCode::parse, frames_path.string() + " is empty");
  r.frames = Eigen::Map<Frames>(values.data(), static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(n));

  rec.segments = segments_from_json(read_json(labels_path));
  validate_recording(rec, manifest);
  return rec;
}

void save_recording(const LabeledRecording& rec, const ChannelManifest& manifest, const fs::path& dir) {
  validate_recording(rec, manifest);
  const auto id = rec.id();
  const auto& r = rec.recording;

  std::string csv = "t";
  for (const auto& c : manifest.channels()) {
    csv += ',';
    csv += c.name;
  }
  csv += '\n';
  csv.reserve(csv.size() + r.frame_count() * manifest.channel_count() * 12);
  for (Eigen::Index i = 0; i < r.frames.rows(); ++i) {
    append_double(csv, static_cast<double>(i) / r.sample_rate_hz);
    for (Eigen::Index c = 0; c < r.frames.cols(); ++c) {
      csv += ',';
      append_double(csv, r.frames(i, c));
    }
    csv += '\n';
  }
  write_text(dir / frame_file_name(id), csv);
  write_text(dir / label_file_name(id), segments_to_json(rec.segments).dump(1) + "\n");
  json meta = {{"subject_id", r.subject_id},
               {"activity", r.activity},
               {"trial", r.trial},
               {"sample_rate_hz", r.sample_rate_hz}};
  write_text(dir / meta_file_name(id), meta.dump(2) + "\n");
}

// --- synthesis -------------------------------------------------------------

json SynthSpec::to_json() const {
  json d = json::array();
  for (const auto& r : durations) d.push_back({r.min_s, r.max_s});
  return {{"n_subjects", n_subjects},
          {"trials_per_subject", trials_per_subject},
          {"duration_s", duration_s},
          {"sample_rate_hz", sample_rate_hz},
          {"offset_scale", offset_scale},
          {"amplitude", amplitude},
          {"base_frequency_hz", base_frequency_hz},
          {"frequency_step_hz", frequency_step_hz},
          {"noise_std", noise_std},
          {"durations_s", d},
          {"channel_count", manifest.channel_count()}};
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s;
  s.n_subjects = j.value("n_subjects", s.n_subjects);
  s.trials_per_subject = j.value("trials_per_subject", s.trials_per_subject);
  s.duration_s = j.value("duration_s", s.duration_s);
  s.sample_rate_hz = j.value("sample_rate_hz", s.sample_rate_hz);
  s.offset_scale = j.value("offset_scale", s.offset_scale);
  s.amplitude = j.value("amplitude", s.amplitude);
  s.base_frequency_hz = j.value("base_frequency_hz", s.base_frequency_hz);
  s.frequency_step_hz = j.value("frequency_step_hz", s.frequency_step_hz);
  s.noise_std = j.value("noise_std", s.noise_std);
  if (j.contains("durations_s")) {
    const auto& d = j.at("durations_s");
    if (!d.is_array() || d.size() != kNumClasses) {
      throw Error(ErrorCode::config, "durations_s needs one [min, max] pair per class");
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) s.durations[c] = {d[c].at(0).get<double>(), d[c].at(1).get<double>()};
  }
  if (j.contains("channel_count")) {
    const auto n = j.at("channel_count").get<std::size_t>();
    if (n != s.manifest.channel_count()) s.manifest = ChannelManifest::plain(n);
  }
  return s;
}

std::vector<const LabeledRecording*> Dataset::recordings_of(const std::set<std::string>& ids) const {
  std::vector<const LabeledRecording*> out;
  for (const auto& r : recordings) {
    if (ids.contains(r.recording.subject_id)) out.push_back(&r);
  }
  return out;
}

const SubjectInfo* Dataset::subject(const std::string& id) const {
  for (const auto& s : subjects) {
    if (s.subject_id == id) return &s;
  }
  return nullptr;
}

namespace {

void check_spec(const SynthSpec& spec) {
  if (spec.n_subjects == 0 || spec.trials_per_subject == 0) {
    throw Error(ErrorCode::invalid_argument, "synthetic dataset needs at least one subject and trial");
  }
  if (!(spec.duration_s > 0.0) || !(spec.sample_rate_hz > 0.0) ||
      to_frames(spec.duration_s, spec.sample_rate_hz) == 0) {
    throw Error(ErrorCode::invalid_argument, "synthetic duration must be positive");
  }
  for (const auto& d : spec.durations) {
    if (!(d.min_s > 0.0) || d.max_s < d.min_s || to_frames(d.min_s, spec.sample_rate_hz) == 0) {
      throw Error(ErrorCode::invalid_argument, "duration ranges must be positive with min <= max");
    }
  }
  if (spec.noise_std < 0.0) throw Error(ErrorCode::invalid_argument, "noise_std must be non-negative");
}

}  // namespace

std::vector<PrimitiveSegment> schedule_segments(const SynthSpec& spec, std::uint64_t seed,
                                                std::size_t recording_index) {
  check_spec(spec);
  const std::size_t total = to_frames(spec.duration_s, spec.sample_rate_hz);
  std::size_t shortest = total;
  for (const auto& d : spec.durations) shortest = std::min(shortest, to_frames(d.min_s, spec.sample_rate_hz));

  std::mt19937_64 rng(mix_seed(seed, 2, recording_index));
  std::vector<PrimitiveSegment> segs;
  std::size_t t = 0;
  while (t < total) {
    std::size_t code = 0;
    if (segs.empty()) {
      code = std::uniform_int_distribution<std::size_t>(0, kNumClasses - 1)(rng);
    } else {
      // never repeat the previous class
      const auto prev = code_of(segs.back().cls);
      code = std::uniform_int_distribution<std::size_t>(0, kNumClasses - 2)(rng);
      if (code >= prev) ++code;
    }
    const auto& range = spec.durations[code];
    const auto len = std::uniform_int_distribution<std::size_t>(
        to_frames(range.min_s, spec.sample_rate_hz), to_frames(range.max_s, spec.sample_rate_hz))(rng);
    std::size_t end = std::min(total, t + len);
    // a tail too short to stand as its own primitive is absorbed
    if (total - end < shortest) end = total;
    segs.push_back({static_cast<PrimitiveClass>(code), t, end});
    t = end;
  }
  return segs;
}

Eigen::VectorXd class_signature(const SynthSpec& spec, std::uint64_t seed, PrimitiveClass cls, double t_s) {
  const auto table = make_signature_table(spec, seed);
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(spec.manifest.channel_count()));
  raw_signature(spec, table, cls, t_s, row);
  normalize_quaternion_groups(spec.manifest, row);
  return row.transpose();
}

Dataset synthesize_dataset(const SynthSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  Dataset data;
  data.manifest = spec.manifest;
  const auto table = make_signature_table(spec, seed);
  const std::size_t total = to_frames(spec.duration_s, spec.sample_rate_hz);
  const auto n_ch = static_cast<Eigen::Index>(spec.manifest.channel_count());

  std::mt19937_64 subject_rng(mix_seed(seed, 4));
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    SubjectInfo info;
    info.subject_id = subject_name(s, spec.n_subjects);
    info.paretic_side = std::uniform_int_distribution<int>(0, 1)(subject_rng) == 0 ? PareticSide::left
                                                                                  : PareticSide::right;
    info.ue_fma_score = std::uniform_int_distribution<int>(10, 66)(subject_rng);
    data.subjects.push_back(info);
  }

  std::size_t index = 0;
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    for (std::size_t k = 0; k < spec.trials_per_subject; ++k, ++index) {
      LabeledRecording rec;
      auto& r = rec.recording;
      r.subject_id = data.subjects[s].subject_id;
      r.activity = kReservedActivities[(s + k) % kReservedActivities.size()];
      r.trial = static_cast<int>(k / kReservedActivities.size()) + 1;
      r.sample_rate_hz = spec.sample_rate_hz;
      r.frames.resize(static_cast<Eigen::Index>(total), n_ch);
      rec.segments = schedule_segments(spec, seed, index);

      std::mt19937_64 noise_rng(mix_seed(seed, 3, index));
      std::normal_distribution<double> noise(0.0, 1.0);
      for (const auto& seg : rec.segments) {
        for (std::size_t f = seg.start; f < seg.end; ++f) {
          auto row = r.frames.row(static_cast<Eigen::Index>(f));
          raw_signature(spec, table, seg.cls, static_cast<double>(f) / spec.sample_rate_hz, row);
          if (spec.noise_std > 0.0) {
            for (Eigen::Index c = 0; c < n_ch; ++c) row[c] += spec.noise_std * noise(noise_rng);
          }
          normalize_quaternion_groups(spec.manifest, row);
        }
      }
      data.recordings.push_back(std::move(rec));
    }
  }
  return data;
}

// --- dataset directories ---------------------------------------------------

void save_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir / "recordings");
  data.manifest.save(dir / "manifest.json");
  json subjects = json::array();
  for (const auto& s : data.subjects) subjects.push_back(subject_to_json(s));
  write_text(dir / "subjects.json", subjects.dump(2) + "\n");
  json index = json::array();
  for (const auto& r : data.recordings) {
    save_recording(r, data.manifest, dir / "recordings");
    index.push_back(r.id());
  }
  write_text(dir / "dataset.json", json{{"recordings", index}}.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io, "dataset directory " + dir.string() + " not found");
  Dataset data;
  data.manifest = ChannelManifest::load(dir / "manifest.json");
  for (const auto& s : read_json(dir / "subjects.json")) data.subjects.push_back(subject_from_json(s));
  const auto index = read_json(dir / "dataset.json");
  for (const auto& id_json : index.at("recordings")) {
    const auto id = id_json.get<std::string>();
    data.recordings.push_back(load_recording(dir / "recordings" / frame_file_name(id),
                                             dir / "recordings" / label_file_name(id), data.manifest));
    if (!data.subject(data.recordings.back().recording.subject_id)) {
      throw Error(ErrorCode::parse, "recording " + id + " references unknown subject");
    }
  }
  return data;
}

std::vector<DatasetSplit> split_subjects(const std::vector<std::string>& subjects, std::size_t n_folds,
                                         std::uint64_t seed, const std::set<std::string>& test_subjects) {
  if (n_folds < 1) throw Error(ErrorCode::invalid_argument, "n_folds must be at least 1");
  std::vector<std::string> pool;
  for (const auto& s : subjects) {
    if (!test_subjects.contains(s)) pool.push_back(s);
  }
  std::sort(pool.begin(), pool.end());
  if (std::adjacent_find(pool.begin(), pool.end()) != pool.end()) {
    throw Error(ErrorCode::invalid_argument, "duplicate subject ids");
  }
  for (const auto& t : test_subjects) {
    if (std::find(subjects.begin(), subjects.end(), t) == subjects.end()) {
      throw Error(ErrorCode::invalid_argument, "test subject " + t + " is not in the dataset");
    }
  }
  const std::size_t min_subjects = std::max<std::size_t>(n_folds, 2);
  if (pool.size() < min_subjects) {
    throw Error(ErrorCode::too_few_subjects, std::to_string(pool.size()) + " subjects for " +
                                                 std::to_string(n_folds) + " folds");
  }
  std::mt19937_64 rng(mix_seed(seed, 5));
  std::shuffle(pool.begin(), pool.end(), rng);

  std::vector<DatasetSplit> splits(n_folds);
  if (n_folds == 1) {
    // single member: hold out one subject for early stopping
    splits[0].val_subjects.insert(pool.front());
    splits[0].train_subjects.insert(pool.begin() + 1, pool.end());
  } else {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      for (std::size_t k = 0; k < n_folds; ++k) {
        (i % n_folds == k ? splits[k].val_subjects : splits[k].train_subjects).insert(pool[i]);
      }
    }
  }
  for (auto& s : splits) s.test_subjects = test_subjects;
  return splits;
}

}  // namespace primseq
