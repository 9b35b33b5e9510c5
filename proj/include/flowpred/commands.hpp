// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <iosfwd>

namespace flowpred {

/// Exit status of a command line run.
enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2 };

/// Subcommands: train, reclassify, predict, eval, simulate, generate, rerun.
/// Output directories can be redirected with FLOWPRED_OUT_DIR.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flowpred
