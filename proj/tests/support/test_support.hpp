// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

// Shared helpers and independent reference implementations for tests.
// The oracles deliberately avoid the library's code paths.

#pragma once

#include "mmforge/corpus.hpp"
#include "mmforge/image.hpp"
#include "mmforge/mapping.hpp"
#include "mmforge/phash.hpp"
#include "mmforge/rng.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

namespace mmforge::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "mmforge") {
        static std::uint64_t counter = 0;
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(stamp) + "-" + std::to_string(++counter));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path source_dir() { return MMFORGE_TEST_SOURCE_DIR; }
inline std::filesystem::path fixture_corpus() { return source_dir() / "assets" / "fixtures" / "corpus"; }
inline std::filesystem::path bundled_taxonomy() { return source_dir() / "assets" / "taxonomy" / "instruction_tags.txt"; }

inline GrayImage make_gray(int w, int h, std::vector<std::uint8_t> pixels) {
    GrayImage g;
    g.width = w;
    g.height = h;
    g.pixels = std::move(pixels);
    return g;
}

/// Random grey image with values in [lo, hi].
inline GrayImage random_gray(int w, int h, Rng& rng, int lo = 0, int hi = 255) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
    for (auto& p : px)
        p = static_cast<std::uint8_t>(lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))));
    return make_gray(w, h, std::move(px));
}

/// Smooth random image: a sum of a few low-frequency bumps, values in
/// [lo, hi]. Closer to natural content than white noise.
inline GrayImage smooth_gray(int w, int h, Rng& rng, int lo = 30, int hi = 220) {
    struct Bump {
        double cx, cy, r, amp;
    };
    std::vector<Bump> bumps(5);
    for (auto& b : bumps)
        b = {rng.unit() * w, rng.unit() * h, (0.15 + 0.3 * rng.unit()) * w, rng.unit() * 2 - 1};
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (const auto& b : bumps)
                s += b.amp * std::exp(-((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) / (b.r * b.r));
            v[static_cast<std::size_t>(y) * w + x] = s;
        }
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    std::vector<std::uint8_t> px(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        px[i] = static_cast<std::uint8_t>(lo + std::lround((v[i] - *mn) / (*mx - *mn + 1e-12) * (hi - lo)));
    return make_gray(w, h, std::move(px));
}

/// Checkerboard with cells of cw x ch pixels; the top-left cell is dark.
inline GrayImage checkerboard(int w, int h, int cw, int ch, std::uint8_t dark = 0, std::uint8_t light = 255) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            px[static_cast<std::size_t>(y) * w + x] = ((x / cw + y / ch) % 2) ? light : dark;
    return make_gray(w, h, std::move(px));
}

inline GrayImage add_offset(GrayImage g, int offset) {
    for (auto& p : g.pixels)
        p = static_cast<std::uint8_t>(p + offset);
    return g;
}

// ------------------------------------------------------------ pHash oracle

/// Box-filter resize to 32x32 computed cell by cell in floating point.
inline std::vector<double> oracle_resize(const GrayImage& g) {
    std::vector<double> out(32 * 32, 0.0);
    const double sx = static_cast<double>(g.width) / 32.0, sy = static_cast<double>(g.height) / 32.0;
    for (int cy = 0; cy < 32; ++cy)
        for (int cx = 0; cx < 32; ++cx) {
            const double x0 = cx * sx, x1 = (cx + 1) * sx, y0 = cy * sy, y1 = (cy + 1) * sy;
            double acc = 0;
            for (int y = static_cast<int>(std::floor(y0)); y < std::min(g.height, static_cast<int>(std::ceil(y1))); ++y)
                for (int x = static_cast<int>(std::floor(x0)); x < std::min(g.width, static_cast<int>(std::ceil(x1)));
                     ++x) {
                    const double ox = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                    const double oy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                    if (ox > 0 && oy > 0)
                        acc += g.at(x, y) * ox * oy;
                }
            out[static_cast<std::size_t>(cy) * 32 + cx] = acc / (sx * sy);
        }
    return out;
}

/// Direct (non-separable) unnormalised 2-D DCT-II coefficient (u, v) of a
/// 32x32 block: no per-frequency scale factors, so row and column 0 compare
/// on the same footing as the rest. Mean removal does not change any
/// u+v > 0 coefficient.
inline double oracle_dct(const std::vector<double>& block, int u, int v) {
    double acc = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            acc += block[static_cast<std::size_t>(y) * 32 + x] * std::cos(std::numbers::pi * (2 * x + 1) * u / 64.0) *
                   std::cos(std::numbers::pi * (2 * y + 1) * v / 64.0);
    return acc;
}

struct OracleHash {
    PHash hash;
    /// Smallest |coef - median| over the 63 AC coefficients, relative to the
    /// largest |coef|; how far the hash is from a tie.
    double margin = 0;
};

/// 64-bit hash from the low 8x8 block: bit (v*8 + u) set iff that AC
/// coefficient exceeds the median of the 63 AC coefficients (sorted
/// middle element); the DC bit is always clear.
inline OracleHash oracle_phash(const GrayImage& g) {
    const auto block = oracle_resize(g);
    std::vector<double> coef(64);
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u)
            coef[static_cast<std::size_t>(v) * 8 + u] = oracle_dct(block, u, v);
    std::vector<double> ac(coef.begin() + 1, coef.end());
    std::sort(ac.begin(), ac.end());
    const double median = ac[31];
    OracleHash out;
    double max_abs = 0, min_gap = INFINITY;
    for (int i = 1; i < 64; ++i) {
        if (coef[static_cast<std::size_t>(i)] > median)
            out.hash.bits |= std::uint64_t{1} << i;
        max_abs = std::max(max_abs, std::abs(coef[static_cast<std::size_t>(i)]));
        if (coef[static_cast<std::size_t>(i)] != median)
            min_gap = std::min(min_gap, std::abs(coef[static_cast<std::size_t>(i)] - median));
    }
    out.margin = max_abs > 0 ? min_gap / max_abs : 0;
    return out;
}

inline int oracle_hamming(std::uint64_t a, std::uint64_t b) {
    int d = 0;
    for (int i = 0; i < 64; ++i)
        d += static_cast<int>(((a >> i) & 1u) != ((b >> i) & 1u));
    return d;
}

// ------------------------------------------------------------- TF-IDF oracle

struct ToySeed {
    std::string unit;
    std::set<std::string> tags;
};

/// Straight from the definitions: tf = count/unit_total, idf =
/// ln((1+U)/(1+df)) + 1, with U the number of units and df the number of
/// units whose count for the tag is positive.
inline std::map<std::string, std::map<std::string, double>> oracle_tfidf(const std::vector<ToySeed>& seed) {
    std::map<std::string, std::map<std::string, long>> counts;
    for (const auto& s : seed)
        for (const auto& t : s.tags)
            counts[s.unit][t] += 1;
    const double units = static_cast<double>(counts.size());
    std::map<std::string, std::map<std::string, double>> w;
    for (const auto& [unit, row] : counts) {
        long total = 0;
        for (const auto& [_, c] : row)
            total += c;
        for (const auto& [tag, c] : row) {
            long df = 0;
            for (const auto& [_, other] : counts)
                df += other.count(tag) ? 1 : 0;
            w[unit][tag] = (static_cast<double>(c) / static_cast<double>(total)) *
                           (std::log((1.0 + units) / (1.0 + static_cast<double>(df))) + 1.0);
        }
    }
    return w;
}

inline std::vector<SeedExample> to_seed(const std::vector<ToySeed>& toy) {
    std::vector<SeedExample> out;
    for (std::size_t i = 0; i < toy.size(); ++i)
        out.push_back(SeedExample{"s" + std::to_string(i), ImageRef{}, toy[i].tags, "q", "a",
                                  InstructionTag::from_path(toy[i].unit)});
    return out;
}

// ------------------------------------------------------------------ images

inline std::vector<std::uint8_t> encode_png(const cv::Mat& img) {
    std::vector<std::uint8_t> out;
    cv::imencode(".png", img, out);
    return out;
}

inline cv::Mat random_bgr(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    cv::Mat m(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                m.at<cv::Vec3b>(y, x)[c] = static_cast<std::uint8_t>(rng.below(256));
    return m;
}

inline InstructionRecord text_record(const std::string& q, const std::string& a, const std::string& source = "t",
                                     Category cat = Category::comprehensive) {
    InstructionRecord r;
    r.turns = {Turn{q, a}};
    r.source = source;
    r.category = DataCategory::make(cat, cat == Category::image_caption    ? SubType::caption
                                         : cat == Category::gpt4_synthetic ? SubType::synthetic
                                                                           : SubType::text_instruction);
    r.record_id = compute_record_id(r);
    return r;
}

}  // namespace mmforge::test
