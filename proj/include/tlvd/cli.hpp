#pragma once

#include <exception>
#include <ostream>

namespace tlvd::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kConfig = 2,
    kBackend = 3,
    kRetrieval = 4,
    kInvariant = 5,
};

int exit_code_for(const std::exception& e);

/// Runs the tool. Artifact paths go to `out`; structured errors go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tlvd::cli
