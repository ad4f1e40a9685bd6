#pragma once

// Batch front end: parametrize, deform, volmap, unflip, serve.

#include <ostream>

namespace flipfree {

enum ExitCode : int {
  kExitConverged = 0,
  kExitError = 1,
  kExitMaxIter = 2,
  kExitStalled = 3,
  kExitValidation = 4,
};

/// Runs one command line and returns the process exit code. Every solver
/// command writes a JSON manifest, also on failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flipfree
