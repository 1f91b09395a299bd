// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/rng.hpp"

#include "mmforge/digest.hpp"

#include <string>

namespace mmforge {

Rng Rng::derive(std::uint64_t seed, std::string_view label) {
    return Rng(hash64(std::to_string(seed) + '\x1f' + std::string(label)));
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = n * (UINT64_MAX / n);
    for (;;) {
        const auto x = next();
        if (x < limit)
            return x % n;
    }
}

}  // namespace mmforge
