#pragma once

#include <iosfwd>

namespace meshdrag::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kValidation = 2,
    kGuidance = 3,
    kDiverged = 4,
};

/// Full command-line driver; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace meshdrag::cli
