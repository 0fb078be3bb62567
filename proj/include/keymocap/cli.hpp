#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace keymocap {

/// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitInput = 3, kExitNumeric = 4 };

/// One experiment. Each field has a key of the same name in an experiment
/// JSON file; command-line flags override the file.
struct ExperimentSpec {
  std::filesystem::path scenario_config;  // empty: built-in scenario
  std::filesystem::path solve_config;     // empty: built-in solve settings
  std::vector<std::string> methods{"bundle"};
  std::filesystem::path out_dir{"out"};
  std::optional<std::uint64_t> seed;
};

/// Runs the tool in-process. Usage and errors go to `err`, progress to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace keymocap
