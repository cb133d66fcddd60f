#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace surge {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // verification or simulation failure
inline constexpr int kExitUsage = 2;    // bad arguments or scenario file

/// Runs the command line; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count for sweeps: SURGE_LAB_THREADS if set and positive, else the
/// hardware concurrency, never more than `jobs`.
unsigned sweep_threads(std::size_t jobs);

}  // namespace surge
