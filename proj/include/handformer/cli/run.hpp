#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace handformer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

// Runs one subcommand. `args` excludes the program name. Logs go to `out` as
// key=value lines, diagnostics to `err`. Returns the process exit status.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace handformer::cli
