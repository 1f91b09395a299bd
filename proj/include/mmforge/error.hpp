// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mmforge {

enum class ErrorKind {
    malformed,
    duplicate,
    unknown_category,
    unknown_path,
    unmappable,
    undecodable_image,
    unreadable,
    missing_hash,
    missing_loss,
    non_finite,
    invalid_argument,
    empty_corpus,
    retries_exhausted,
    non_retryable_status,
    malformed_response,
    unsupported,
    no_score,
    empty_generation,
    config,
    stage_failure,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace mmforge
