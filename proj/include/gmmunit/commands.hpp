#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gmmunit {

// Exit codes. Each failure prints one line "error class=<class>: <message>"
// to the error stream.
enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_usage = 2,
  exit_config = 3,
  exit_data = 4,
  exit_checkpoint = 5,
  exit_numeric = 6,
};

// Runs one command line (args[0] is the program name).
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gmmunit
