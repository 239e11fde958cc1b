#pragma once

#include <ostream>

namespace dtr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
/// Unexpected failures such as unwritable output files.
inline constexpr int kExitInternal = 1;

/// Entry point of the `dtr` tool: `dtr <subcommand> <config.json> [--seed N]
/// [--threads N] [--out-dir DIR]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dtr
