#pragma once

#include <iosfwd>

namespace strata {

/// Runs the `strata` command line. Failures print one line
/// `error code=<code>: <message>` to `err`; the return value is the exit
/// status (0 success, 1 failed run or check, 2 usage error).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace strata
