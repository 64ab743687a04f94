#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "badge/error.hpp"

namespace badge {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitValidation = 2, kExitConfig = 3 };

ExitCode exit_code_for(ErrorCode code) noexcept;

/// Runs one command line (args exclude the program name). Data goes to `out`,
/// diagnostics to `err`. `serve` blocks until the process is stopped.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace badge
