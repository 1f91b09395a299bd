// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mmforge {

/// Seeded generator whose outputs are identical on every platform: the
/// engine is mt19937_64 and the range reductions are defined here rather
/// than by the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Seed derived from a base seed and a label, e.g. an item id.
    static Rng derive(std::uint64_t seed, std::string_view label);

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Uniform double in [0, 1).
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

}  // namespace mmforge
