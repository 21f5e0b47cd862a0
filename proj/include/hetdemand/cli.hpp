#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hetdemand {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitIo = 3,
  kExitEstimation = 4,
};

// Runs the tool on `args` (program name excluded). Normal output goes to
// `out`, diagnostics and human summaries to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hetdemand
