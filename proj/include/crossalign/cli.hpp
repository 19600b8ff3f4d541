// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synth -> describe -> embed -> train -> sweep /
// compare -> visualize.
//
// Exit codes: 0 success, 2 usage or flag error, 3 validation error (coverage,
// format, I/O), 4 runtime numerical error. Options may also come from a
// `--config FILE` of `key=value` lines using the flag names without dashes;
// precedence is command line > CROSSALIGN_SEED (for --seed) > config > default.

#pragma once

#include <iostream>

#include "crossalign/error.hpp"

namespace crossalign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitRuntime = 4;

inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::config: return kExitUsage;
        case ErrorKind::numerical:
        case ErrorKind::degenerate: return kExitRuntime;
        default: return kExitValidation;
    }
}

/// Runs one command line; never throws.
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace crossalign::cli
