#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "selbias/cli/config.hpp"
#include "selbias/error.hpp"

namespace selbias::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumerical = 3,
};

int exit_code_for(ErrorKind kind);

// Inputs named on the command line in addition to the config paths.
struct CommandInputs {
  std::vector<std::string> files;  // estimate: positional inputs
  std::string series;              // series: which kind
};

int cmd_simulate(const RunConfig& config, std::ostream& log);
int cmd_match(const RunConfig& config, std::ostream& log);
int cmd_estimate(const RunConfig& config, const CommandInputs& inputs, std::ostream& log);
int cmd_verify(const RunConfig& config, std::ostream& log);
int cmd_series(const RunConfig& config, const CommandInputs& inputs, std::ostream& log);
int cmd_em_fit(const RunConfig& config, std::ostream& log);
int cmd_spline_fit(const RunConfig& config, std::ostream& log);

const std::vector<std::string>& series_kinds();

// Full command line entry point; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace selbias::cli
