#pragma once

#include <iosfwd>

namespace fluidrecon {

/// Entry point of the `fluidrecon` tool, usable in-process. Returns the exit
/// code: 0 success, 1 usage or validation error, 2 input parse error or
/// missing input, 3 non-convergence.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fluidrecon
