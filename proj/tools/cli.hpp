#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace safer::cli {

enum ExitCode : int {
    kOk = 0,
    kVerificationFailed = 1,
    kArgumentError = 2,
    kDataError = 3,
};

// Runs one invocation. `args` excludes the program name. Reports go to `out`,
// logs to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace safer::cli
