#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace occlume::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { kSuccess = 0, kRuntimeError = 1, kUsageError = 2 };

/// Run the `occlume` command line. argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace occlume::cli
