#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace primseq {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kVersion = "0.1.0";

/// Entry point for `primseq <command> [flags]`. Commands: synth, train,
/// predict, count, eval, bench, stream.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace primseq
