// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/phash.hpp"

#include "mmforge/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <vector>

namespace mmforge {

namespace {

constexpr int kSide = 32;
constexpr int kBlock = 8;

struct AxisWeight {
    int src;
    int dst;
    std::int64_t weight;
};

// Source pixel s covers [32s, 32s + 32) and output cell d covers
// [d*n, d*n + n) in units of 1/(32n) of the full axis.
std::vector<AxisWeight> axis_weights(int n) {
    std::vector<AxisWeight> out;
    for (int s = 0; s < n; ++s) {
        const std::int64_t lo = std::int64_t{kSide} * s;
        const std::int64_t hi = lo + kSide;
        for (auto d = static_cast<int>(lo / n); d < kSide && std::int64_t{d} * n < hi; ++d) {
            const std::int64_t cell_lo = std::int64_t{d} * n;
            const std::int64_t overlap = std::min(hi, cell_lo + n) - std::max(lo, cell_lo);
            if (overlap > 0)
                out.push_back({s, d, overlap});
        }
    }
    return out;
}

const std::array<std::array<double, kSide>, kBlock>& cos_table() {
    static const auto table = [] {
        std::array<std::array<double, kSide>, kBlock> t{};
        for (int u = 0; u < kBlock; ++u)
            for (int x = 0; x < kSide; ++x)
                t[u][x] = std::cos(std::numbers::pi * (2 * x + 1) * u / (2.0 * kSide));
        return t;
    }();
    return table;
}

}  // namespace

std::string to_hex(PHash h) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h.bits & 0xF];
        h.bits >>= 4;
    }
    return out;
}

PHash phash_from_hex(std::string_view hex) {
    PHash h;
    if (hex.size() != 16)
        throw Error(ErrorKind::malformed, "phash must be 16 hex digits: '" + std::string(hex) + "'");
    const auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), h.bits, 16);
    if (ec != std::errc() || ptr != hex.data() + hex.size())
        throw Error(ErrorKind::malformed, "bad phash hex '" + std::string(hex) + "'");
    return h;
}

Thumbnail32 area_resize_32(const GrayImage& image) {
    if (image.width < 1 || image.height < 1 ||
        image.pixels.size() != static_cast<std::size_t>(image.width) * image.height)
        throw Error(ErrorKind::undecodable_image, "empty or inconsistent raster");
    const auto wx = axis_weights(image.width);
    const auto wy = axis_weights(image.height);

    std::vector<std::int64_t> rows(static_cast<std::size_t>(image.height) * kSide, 0);
    for (int y = 0; y < image.height; ++y) {
        const auto* src = image.pixels.data() + static_cast<std::size_t>(y) * image.width;
        auto* dst = rows.data() + static_cast<std::size_t>(y) * kSide;
        for (const auto& w : wx)
            dst[w.dst] += std::int64_t{src[w.src]} * w.weight;
    }
    Thumbnail32 out{};
    for (const auto& w : wy) {
        const auto* src = rows.data() + static_cast<std::size_t>(w.src) * kSide;
        auto* dst = out.data() + static_cast<std::size_t>(w.dst) * kSide;
        for (int x = 0; x < kSide; ++x)
            dst[x] += src[x] * w.weight;
    }
    return out;
}

std::array<double, 64> low_frequency_dct(const Thumbnail32& thumb) {
    // Centring in exact integer arithmetic makes the result independent of
    // any uniform intensity offset, bit for bit.
    std::int64_t total = 0;
    for (auto v : thumb)
        total += v;
    std::array<double, kSide * kSide> centred{};
    for (std::size_t i = 0; i < thumb.size(); ++i)
        centred[i] = static_cast<double>(thumb[i] * (kSide * kSide) - total);

    const auto& c = cos_table();
    std::array<double, kSide * kBlock> horiz{};  // [y][u]
    for (int y = 0; y < kSide; ++y)
        for (int u = 0; u < kBlock; ++u) {
            double acc = 0.0;
            for (int x = 0; x < kSide; ++x)
                acc += centred[static_cast<std::size_t>(y * kSide + x)] * c[u][x];
            horiz[static_cast<std::size_t>(y * kBlock + u)] = acc;
        }
    std::array<double, 64> out{};
    for (int v = 0; v < kBlock; ++v)
        for (int u = 0; u < kBlock; ++u) {
            double acc = 0.0;
            for (int y = 0; y < kSide; ++y)
                acc += horiz[static_cast<std::size_t>(y * kBlock + u)] * c[v][y];
            out[static_cast<std::size_t>(v * kBlock + u)] = 4.0 * acc;
        }
    return out;
}

PHash phash64(const GrayImage& image) {
    const auto coeffs = low_frequency_dct(area_resize_32(image));
    std::array<double, 63> ac{};
    std::copy(coeffs.begin() + 1, coeffs.end(), ac.begin());
    std::nth_element(ac.begin(), ac.begin() + 31, ac.end());
    const double median = ac[31];
    PHash h;
    for (int i = 1; i < 64; ++i)
        if (coeffs[static_cast<std::size_t>(i)] > median)
            h.bits |= std::uint64_t{1} << i;
    return h;
}

}  // namespace mmforge
