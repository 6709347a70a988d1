#pragma once

namespace fairfed {

/// Full command-line entry point: parses argv, dispatches to the
/// generate | train | sweep | report subcommand, and maps errors to exit
/// codes (0 success, 1 runtime error, 2 usage or validation error).
/// LOG_LEVEL (quiet | info | debug) controls progress output on stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace fairfed
