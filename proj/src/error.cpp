// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/error.hpp"

namespace mmforge {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::malformed: return "malformed";
    case ErrorKind::duplicate: return "duplicate";
    case ErrorKind::unknown_category: return "unknown category";
    case ErrorKind::unknown_path: return "unknown path";
    case ErrorKind::unmappable: return "unmappable";
    case ErrorKind::undecodable_image: return "undecodable image";
    case ErrorKind::unreadable: return "unreadable";
    case ErrorKind::missing_hash: return "missing hash";
    case ErrorKind::missing_loss: return "missing loss";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::empty_corpus: return "empty corpus";
    case ErrorKind::retries_exhausted: return "retries exhausted";
    case ErrorKind::non_retryable_status: return "non-retryable status";
    case ErrorKind::malformed_response: return "malformed response";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::no_score: return "no score";
    case ErrorKind::empty_generation: return "empty generation";
    case ErrorKind::config: return "config";
    case ErrorKind::stage_failure: return "stage failure";
    }
    return "error";
}

}  // namespace mmforge
