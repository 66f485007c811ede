#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace msegnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumeric = 3;

// Runs one command. `args` excludes the program name. Human-readable
// progress goes to `out`, diagnostics to `err`; the return value is the
// process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msegnn::cli
