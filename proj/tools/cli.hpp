#pragma once

namespace kite {

// Full command-line entry point (subcommand dispatch, flag parsing, file
// output). Separated from main() so tests can invoke it in-process.
int run_cli(int argc, const char* const* argv);

}  // namespace kite
