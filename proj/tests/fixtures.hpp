#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "primseq/config.hpp"

namespace fixture {

// Small enough for a full train/predict/eval cycle in a few seconds.
inline primseq::RunConfig tiny_run_config(const std::filesystem::path& root) {
  primseq::RunConfig c;
  c.data_root = root / "data";
  c.output_dir = root / "out";
  c.synth.n_subjects = 6;
  c.synth.duration_s = 20.0;
  c.model.hidden_dim = 8;
  c.model.embed_dim = 4;
  c.model.frame_pool = 10;
  c.train.max_epochs = 2;
  c.train.batch_size = 16;
  c.train.learning_rate = 3e-3;
  c.n_folds = 2;
  c.n_test_subjects = 2;
  c.baseline.train.epochs = 3;
  c.baseline.train.context_frames = 50;
  c.baseline.smoother.window_length = 21;
  return c;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// True when both trees hold the same relative file names with identical bytes.
inline bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++n;
    const auto rel = std::filesystem::relative(e.path(), a);
    if (!std::filesystem::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return false;
  }
  std::size_t m = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(b)) m += e.is_regular_file() ? 1 : 0;
  return n == m && n > 0;
}

}  // namespace fixture
