#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mlorder::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,         // unexpected internal error
  kUsage = 2,           // bad flags or arguments
  kValidation = 3,      // corpus parse/validation failure
  kScorer = 4,          // scorer transport, protocol or fixture failure
  kSizeLimit = 5,       // sentence above the word cap
  kPartialFailure = 6,  // analyze: some sentences failed
  kMismatch = 7,        // selfcheck: viterbi and brute force disagree
};

/// Entry point for the `mlorder` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mlorder::cli
