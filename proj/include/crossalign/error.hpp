// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Error type shared by every module. The kind drives the CLI exit code.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crossalign {

enum class ErrorKind {
    usage,       // API misuse, bad flags
    config,      // invalid hyperparameters (tau <= 0, ...)
    dimension,   // shape mismatch
    index,       // label / index out of range
    validation,  // duplicate ids, coverage gaps, mixed kinds
    format,      // bad magic / version / malformed line
    truncation,  // file shorter than its header declares
    not_found,   // lookup of an unknown id
    provider,    // description provider failure
    io,          // open / write failure
    degenerate,  // zero vectors, all-zero distances
    numerical,   // non-finite loss during training
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return "usage error";
        case ErrorKind::config: return "config error";
        case ErrorKind::dimension: return "dimension error";
        case ErrorKind::index: return "index error";
        case ErrorKind::validation: return "validation error";
        case ErrorKind::format: return "format error";
        case ErrorKind::truncation: return "truncation error";
        case ErrorKind::not_found: return "not-found error";
        case ErrorKind::provider: return "provider error";
        case ErrorKind::io: return "I/O error";
        case ErrorKind::degenerate: return "degenerate-input error";
        case ErrorKind::numerical: return "numerical error";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace crossalign
