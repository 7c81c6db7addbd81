#pragma once

#include <ostream>

namespace thinkstop::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line. serve-sim blocks until SIGINT or SIGTERM; callers must not
/// have those signals handled elsewhere.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace thinkstop::cli
