#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nlidisc/config.hpp"

namespace nlidisc::cli {

/// Exit codes of run().
enum ExitCode : int {
  exit_ok = 0,
  /// A module raised an error; a JSON error object went to `err`.
  exit_failure = 1,
  /// Bad flags (CLI11 prints the usage message).
  exit_usage = 2,
  /// --strict and some batch items failed.
  exit_partial = 3,
  /// replay or --verify found reports that differ.
  exit_replay_diff = 4,
};

/// Entry point behind the nlidisc executable. `args` excludes the program
/// name. Settings precedence is flags > environment > config file.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env = process_env);

}  // namespace nlidisc::cli
