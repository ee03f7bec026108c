#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cernn::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kDataError = 3,
  kNumericFailure = 4,
};

// args excludes the program name. Results go to the --output path (or `out`
// when it is "-"); diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace cernn::cli
