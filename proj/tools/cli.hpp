#pragma once

#include <string>
#include <vector>

namespace rimlab::cli {

/// Entry point of the `rimlab` tool. Returns the process exit code.
int run(int argc, const char* const* argv);

/// Convenience for tests: args excludes the program name.
int run(const std::vector<std::string>& args);

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPartial = 3;

} // namespace rimlab::cli
