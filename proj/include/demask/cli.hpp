#pragma once

#include <ostream>

namespace demask {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// The `demask` command line. Usage errors print the help text and return 2;
/// runtime failures print one "demask: error: ..." line and return 1.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace demask
