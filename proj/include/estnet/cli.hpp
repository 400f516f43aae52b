#pragma once

#include <iosfwd>

namespace estnet {

/// Exit codes: 0 success, 1 a `check` verdict failed, 2 config error,
/// 3 infeasibility (beta or gain), 4 solver failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace estnet
