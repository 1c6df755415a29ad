// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rlrtr {

/// Invalid argument to a library operation (bad shape, out-of-range mode, ...).
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// File-system or format failure; the message names the offending file.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure (non-convergence, singular system, non-finite value).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Configuration-file failure; the message names the offending key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rlrtr
