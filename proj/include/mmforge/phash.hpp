// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/image.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

namespace mmforge {

struct PHash {
    std::uint64_t bits = 0;

    bool operator==(const PHash&) const = default;
};

/// 16 lowercase hex digits, most significant nibble first.
std::string to_hex(PHash h);
/// Throws Error(malformed) unless `hex` is exactly 16 hex digits.
PHash phash_from_hex(std::string_view hex);

/// Grayscale image reduced to 32x32 by exact area averaging. Cells hold the
/// integer sum of pixel * overlap-area; every cell's total weight is
/// width * height, so a cell's mean intensity is value / (width * height).
using Thumbnail32 = std::array<std::int64_t, 32 * 32>;
Thumbnail32 area_resize_32(const GrayImage& image);

/// Low-frequency 8x8 block of the unnormalized 2-D DCT-II of the
/// mean-centred thumbnail, row-major (vertical frequency major).
std::array<double, 64> low_frequency_dct(const Thumbnail32& thumb);

/// 64-bit perceptual hash. Bit i (value 1 << i) is set iff coefficient i of
/// the 8x8 low-frequency DCT block exceeds the median of the 63 non-DC
/// coefficients. Bit 0 (DC) is always clear.
PHash phash64(const GrayImage& image);

inline int hamming(PHash a, PHash b) noexcept { return std::popcount(a.bits ^ b.bits); }

}  // namespace mmforge
