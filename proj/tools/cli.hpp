#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace semlink::cli {

enum ExitCode : int {
    kOk = 0,
    kUsageError = 1,
    kDataError = 2,
    kNumericError = 3,
};

/// Runs the `semlink` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Version string printed by `--version`.
std::string version_string();

}  // namespace semlink::cli
