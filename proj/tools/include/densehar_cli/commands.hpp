#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace densehar::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitNumeric = 3,
  kExitInternal = 4,
};

// Full command line without the program name, e.g. {"train", "--out", "m.bin", "train.csv"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace densehar::cli
