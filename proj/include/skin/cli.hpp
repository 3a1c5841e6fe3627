#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace skin::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;
// A training run stopped early on request; resumable from its progress checkpoint.
inline constexpr int kExitInterrupted = 3;

/// Runs one `skin` command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace skin::cli
