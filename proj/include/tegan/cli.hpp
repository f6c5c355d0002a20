#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tegan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

// Subcommands: data-synth, train, train-oracle, translate, sample,
// interpolate, eval. Returns the process exit code; never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

const char* version() noexcept;

}  // namespace tegan::cli
