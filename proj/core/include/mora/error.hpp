// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mora {

enum class ErrorCode {
    DimensionMismatch,
    AllMasked,
    InvalidBudget,
    InvalidConfig,
    WrongMode,
    NonMonotonicTask,
    TraceMismatch,
    InvalidDims,
    EmptyDataset,
    UnknownAxis,
    HashMismatch,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Every recoverable failure in the library surfaces as a mora::Error carrying
/// a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mora
