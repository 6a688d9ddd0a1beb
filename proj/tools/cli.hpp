#pragma once

#include <ostream>

namespace mantra {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Entry point of the `mantra` command. Reports go to `out`, progress and
/// diagnostics to `err`; artifacts only under --out.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mantra
