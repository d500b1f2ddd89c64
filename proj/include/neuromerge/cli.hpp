#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace neuromerge::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,   // bad flags or argument values
    kInvalid = 2, // validation, configuration, format or I/O problems
    kNumeric = 3, // degenerate numerics, failed self-checks
};

// Runs one invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace neuromerge::cli
