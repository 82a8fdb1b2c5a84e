#pragma once

#include <string>
#include <vector>

namespace attnsup::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kDiverged = 3 };

int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace attnsup::cli
