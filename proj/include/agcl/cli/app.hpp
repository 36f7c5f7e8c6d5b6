#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace agcl::cli {

/// Exit codes of run_command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // usage, configuration, validation, I/O
inline constexpr int kExitNumeric = 2;  // numeric failure or failed verification

/// Entry point of the `agcl` tool; `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Fan-out of `ablate`, read from AGCL_THREADS (default 1).
std::size_t ablate_workers();

}  // namespace agcl::cli
