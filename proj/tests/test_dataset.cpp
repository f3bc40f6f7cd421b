#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "oracles.hpp"
#include "primseq/dataset.hpp"
#include "primseq/error.hpp"

using namespace primseq;

namespace {

void write_frames(const std::filesystem::path& path, const ChannelManifest& m, std::size_t rows, std::size_t width,
                  const std::string& poison = {}) {
  std::ofstream out(path);
  out << "t";
  for (const auto& c : m.channels()) out << ',' << c.name;
  out << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    out << static_cast<double>(r) / 100.0;
    for (std::size_t c = 0; c < width; ++c) {
      if (!poison.empty() && r == 3 && c == 5) {
        out << ',' << poison;
      } else {
        // quaternion groups need a valid norm; 0.5 everywhere gives unit quaternions
        out << ",0.5";
      }
    }
    out << '\n';
  }
}

void write_labels(const std::filesystem::path& path, const std::vector<PrimitiveSegment>& segs) {
  std::ofstream out(path);
  out << segments_to_json(segs).dump();
}

ErrorCode load_error(const std::filesystem::path& f, const std::filesystem::path& l, const ChannelManifest& m) {
  try {
    load_recording(f, l, m);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

}  // namespace

TEST_CASE("primitive names and codes") {
  CHECK(code_of(PrimitiveClass::reach) == 0);
  CHECK(code_of(PrimitiveClass::idle) == 4);
  for (auto c : kAllClasses) CHECK(primitive_from_string(to_string(c)) == c);
  CHECK_THROWS_AS(class_from_code(5), Error);
  CHECK_THROWS_AS(primitive_from_string("wave"), Error);
}

TEST_CASE("default manifest has 77 channels in 9 quaternion groups") {
  const auto m = ChannelManifest::default_manifest();
  CHECK(m.channel_count() == 77);
  CHECK(m.quaternion_groups().size() == 9);
  for (auto g : m.quaternion_groups()) {
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(m.channels()[g + k].kind == QuantityKind::quaternion_component);
      CHECK(m.channels()[g + k].sensor_id == m.channels()[g].sensor_id);
    }
  }
  CHECK(ChannelManifest::from_json(m.to_json()) == m);
}

TEST_CASE("load_recording: tiling example and error diagnostics") {
  oracle::TempDir dir("load");
  const auto m = ChannelManifest::default_manifest();
  const auto frames = dir.path / "r.frames.csv";
  const auto labels = dir.path / "r.labels.json";
  write_frames(frames, m, 600, 77);

  SUBCASE("600 frames with idle/reach/idle tiling") {
    write_labels(labels, {{PrimitiveClass::idle, 0, 100}, {PrimitiveClass::reach, 100, 300}, {PrimitiveClass::idle, 300, 600}});
    const auto rec = load_recording(frames, labels, m);
    CHECK(rec.segments.size() == 3);
    CHECK(rec.recording.frame_count() == 600);
    CHECK(rec.recording.channel_count() == 77);
  }
  SUBCASE("overlapping segments") {
    write_labels(labels, {{PrimitiveClass::reach, 0, 300}, {PrimitiveClass::idle, 250, 600}});
    try {
      load_recording(frames, labels, m);
      FAIL("expected overlap error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::overlapping_segments);
      CHECK(std::string(e.what()).find("overlapping segments") != std::string::npos);
    }
  }
  SUBCASE("gap and bounds are distinct diagnostics") {
    write_labels(labels, {{PrimitiveClass::reach, 0, 300}, {PrimitiveClass::idle, 310, 600}});
    CHECK(load_error(frames, labels, m) == ErrorCode::segment_gap);
    write_labels(labels, {{PrimitiveClass::reach, 0, 300}, {PrimitiveClass::idle, 300, 601}});
    CHECK(load_error(frames, labels, m) == ErrorCode::segment_bounds);
  }
  SUBCASE("row with 76 values") {
    write_frames(frames, m, 600, 76);
    write_labels(labels, {{PrimitiveClass::idle, 0, 600}});
    try {
      load_recording(frames, labels, m);
      FAIL("expected dimension error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::dimension_mismatch);
      CHECK(std::string(e.what()).find("dimensionality mismatch") != std::string::npos);
    }
  }
  SUBCASE("non-finite and malformed values") {
    write_labels(labels, {{PrimitiveClass::idle, 0, 600}});
    write_frames(frames, m, 600, 77, "nan");
    CHECK(load_error(frames, labels, m) == ErrorCode::non_finite);
    write_frames(frames, m, 600, 77, "abc");
    CHECK(load_error(frames, labels, m) == ErrorCode::parse);
  }
}

TEST_CASE("save_recording then load_recording round-trips exactly") {
  oracle::TempDir dir("roundtrip");
  SynthSpec spec;
  spec.n_subjects = 1;
  spec.duration_s = 5.0;
  const auto data = synthesize_dataset(spec, 11);
  const auto& rec = data.recordings.front();
  save_recording(rec, data.manifest, dir.path);
  const auto back = load_recording(dir.path / frame_file_name(rec.id()), dir.path / label_file_name(rec.id()),
                                   data.manifest);
  CHECK(back.id() == rec.id());
  CHECK(back.segments == rec.segments);
  CHECK(back.recording.frames == rec.recording.frames);
}

TEST_CASE("synthesize_dataset is a pure function of (spec, seed)") {
  SynthSpec spec;
  spec.n_subjects = 3;
  spec.duration_s = 12.0;
  const auto a = synthesize_dataset(spec, 1);
  const auto b = synthesize_dataset(spec, 1);
  const auto c = synthesize_dataset(spec, 2);
  REQUIRE(a.recordings.size() == 3);
  for (std::size_t i = 0; i < a.recordings.size(); ++i) {
    CHECK(a.recordings[i].segments == b.recordings[i].segments);
    CHECK(a.recordings[i].recording.frames == b.recordings[i].recording.frames);
  }
  CHECK(a.subjects == b.subjects);
  CHECK(a.recordings[0].recording.frames != c.recordings[0].recording.frames);

  oracle::TempDir d1("synth1"), d2("synth2");
  save_dataset(a, d1.path);
  save_dataset(b, d2.path);
  const auto loaded = load_dataset(d1.path);
  CHECK(loaded.recordings.size() == a.recordings.size());
  CHECK(loaded.recordings[1].recording.frames == a.recordings[1].recording.frames);
  // byte-identical directories
  for (const auto& entry : std::filesystem::recursive_directory_iterator(d1.path)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), d1.path);
    std::ifstream f1(entry.path(), std::ios::binary), f2(d2.path / rel, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK_MESSAGE(s1 == s2, rel.string());
  }
}

TEST_CASE("synthetic recordings satisfy the tiling invariants and never repeat a class") {
  SynthSpec spec;
  spec.n_subjects = 4;
  spec.trials_per_subject = 2;
  spec.duration_s = 30.0;
  const auto data = synthesize_dataset(spec, 5);
  for (const auto& r : data.recordings) {
    std::size_t total = 0;
    for (std::size_t k = 0; k < r.segments.size(); ++k) {
      const auto& s = r.segments[k];
      CHECK(s.start < s.end);
      total += s.length();
      if (k > 0) {
        CHECK(s.start == r.segments[k - 1].end);
        CHECK(s.cls != r.segments[k - 1].cls);
      }
    }
    CHECK(total == r.recording.frame_count());
  }
  for (const auto& s : data.subjects) {
    CHECK(s.ue_fma_score >= 0);
    CHECK(s.ue_fma_score <= 66);
  }
}

TEST_CASE("zero noise: every frame equals its class's clean signature") {
  SynthSpec spec;
  spec.n_subjects = 1;
  spec.duration_s = 8.0;
  spec.noise_std = 0.0;
  const std::uint64_t seed = 9;
  const auto data = synthesize_dataset(spec, seed);
  const auto& rec = data.recordings.front();
  for (const auto& s : rec.segments) {
    for (std::size_t t = s.start; t < s.end; t += 7) {
      const Eigen::VectorXd clean = class_signature(spec, seed, s.cls, static_cast<double>(t) / spec.sample_rate_hz);
      const Eigen::VectorXd got = rec.recording.frames.row(static_cast<Eigen::Index>(t)).transpose();
      CHECK((got - clean).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("seed 7, 4 subjects: per-class segment totals match a scheduler-only replay") {
  SynthSpec spec;
  spec.n_subjects = 4;
  spec.duration_s = 40.0;
  const auto data = synthesize_dataset(spec, 7);
  std::map<PrimitiveClass, std::size_t> from_data, from_replay;
  for (const auto& r : data.recordings) {
    for (const auto& s : r.segments) ++from_data[s.cls];
  }
  for (std::size_t i = 0; i < spec.n_subjects * spec.trials_per_subject; ++i) {
    for (const auto& s : schedule_segments(spec, 7, i)) ++from_replay[s.cls];
  }
  CHECK(from_data == from_replay);
}

TEST_CASE("degenerate synth specs are rejected") {
  SynthSpec spec;
  spec.n_subjects = 0;
  CHECK_THROWS_AS(synthesize_dataset(spec, 1), Error);
  spec.n_subjects = 2;
  spec.duration_s = 0.0;
  CHECK_THROWS_AS(synthesize_dataset(spec, 1), Error);
}

TEST_CASE("split_subjects") {
  auto ids = [](std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back("P" + std::to_string(100 + i));
    return v;
  };

  SUBCASE("33 subjects, 4 folds: validation sizes 9,8,8,8 and training 24 or 25") {
    const auto splits = split_subjects(ids(33), 4, 3);
    REQUIRE(splits.size() == 4);
    std::multiset<std::size_t> val_sizes, train_sizes;
    for (const auto& s : splits) {
      val_sizes.insert(s.val_subjects.size());
      train_sizes.insert(s.train_subjects.size());
    }
    CHECK(val_sizes == std::multiset<std::size_t>{8, 8, 8, 9});
    CHECK(train_sizes == std::multiset<std::size_t>{24, 25, 25, 25});
  }
  SUBCASE("4 subjects, 4 folds: singleton validation sets forming a partition") {
    const auto all = ids(4);
    const auto splits = split_subjects(all, 4, 1);
    std::set<std::string> uni;
    for (const auto& s : splits) {
      CHECK(s.val_subjects.size() == 1);
      for (const auto& v : s.val_subjects) {
        CHECK(!s.train_subjects.contains(v));
        CHECK(uni.insert(v).second);
      }
    }
    CHECK(uni == std::set<std::string>(all.begin(), all.end()));
  }
  SUBCASE("deterministic given seed; test subjects excluded") {
    const auto a = split_subjects(ids(10), 3, 4, {"P100", "P101"});
    const auto b = split_subjects(ids(10), 3, 4, {"P100", "P101"});
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].val_subjects == b[k].val_subjects);
      CHECK(!a[k].val_subjects.contains("P100"));
      CHECK(!a[k].train_subjects.contains("P101"));
      CHECK(a[k].test_subjects == std::set<std::string>{"P100", "P101"});
    }
  }
  SUBCASE("too few subjects") {
    try {
      split_subjects(ids(3), 4, 1);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::too_few_subjects);
    }
  }
}
