#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rclqr::cli {

enum ExitCode : int {
  kSuccess = 0,
  kRuntimeFailure = 1,
  kConfigError = 2,
  kInstability = 3,
  kSolverFailure = 4,
  kDimensionMismatch = 5,
  kUnstableInitialPolicy = 6,
};

// Runs one invocation. argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rclqr::cli
