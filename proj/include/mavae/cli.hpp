#pragma once

#include <ostream>

namespace mavae {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

// Entry point for `mavae <synth|select|train|eval|cv|ablate> --config <path> --out <dir> [--seed <u64>]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mavae
