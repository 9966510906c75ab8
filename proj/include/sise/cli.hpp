#pragma once

#include <string>
#include <vector>

namespace sise::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kModel = 3 };

/// Entry point shared by the `sise` tool and in-process tests. `args`
/// excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace sise::cli
