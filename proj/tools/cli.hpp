#pragma once

#include <ostream>

namespace playertrack::cli {

/// Runs one `playertrack` command. Returns the process exit code; normal
/// output goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace playertrack::cli
