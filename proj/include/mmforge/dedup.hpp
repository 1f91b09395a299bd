// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/corpus.hpp"
#include "mmforge/error.hpp"
#include "mmforge/phash.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mmforge {

inline constexpr int kDefaultNearDupThreshold = 4;
inline constexpr double kDefaultLossDropFraction = 0.05;

struct DedupStats {
    std::uint64_t input = 0;
    std::uint64_t kept = 0;
    std::uint64_t dropped = 0;

    DedupStats& operator+=(const DedupStats& o) {
        input += o.input;
        kept += o.kept;
        dropped += o.dropped;
        return *this;
    }
    bool operator==(const DedupStats&) const = default;
};

template <typename T>
struct Filtered {
    std::vector<T> kept;
    DedupStats stats;
};

/// Streaming exact-duplicate gate: first occurrence of an id is admitted.
class ExactDeduper {
public:
    bool admit(const std::string& id);
    const DedupStats& stats() const noexcept { return stats_; }

private:
    std::unordered_set<std::string> seen_;
    DedupStats stats_;
};

/// BK-tree over Hamming distance for "any stored hash within t" queries.
class HammingIndex {
public:
    void insert(PHash h);
    bool any_within(PHash h, int threshold) const;
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        PHash hash;
        std::vector<std::pair<int, std::uint32_t>> children;  // (distance, node)
    };
    std::vector<Node> nodes_;
};

/// Streaming greedy near-duplicate gate: a hash is rejected iff it lies
/// within `threshold` of a previously admitted hash.
class NearDupGate {
public:
    explicit NearDupGate(int threshold);
    bool admit(PHash h);
    int threshold() const noexcept { return threshold_; }

private:
    int threshold_;
    HammingIndex kept_;
};

Filtered<InstructionRecord> dedup_exact(std::vector<InstructionRecord> records);

/// Greedy near-duplicate filter over distinct images in first-seen order;
/// every record of an admitted image is kept, every record of a rejected
/// image is dropped. Records without an image pass through untouched. Throws
/// Error(missing_hash) when an image-bearing record has no entry in `hashes`.
Filtered<InstructionRecord> near_dup_filter(std::vector<InstructionRecord> records,
                                            const std::map<std::string, PHash>& hashes, int threshold);

struct LossScore {
    std::string record_id;
    double loss = 0.0;
};

using LossTable = std::unordered_map<std::string, double>;

/// Nearest-rank percentile at (1 - fraction): the value at rank
/// N - floor(fraction * N) (1-based) of the ascending losses.
double nearest_rank_cutoff(std::vector<double> losses, double fraction);

namespace detail {

template <typename T, typename IdOf>
std::vector<double> losses_of(const std::vector<T>& items, const LossTable& losses, IdOf id_of) {
    std::vector<double> values;
    values.reserve(items.size());
    for (const auto& item : items) {
        const std::string& id = id_of(item);
        const auto it = losses.find(id);
        if (it == losses.end())
            throw Error(ErrorKind::missing_loss, "no loss for " + id);
        if (!std::isfinite(it->second))
            throw Error(ErrorKind::non_finite, "loss for " + id);
        values.push_back(it->second);
    }
    return values;
}

template <typename T>
Filtered<T> keep_at_most(std::vector<T> items, const std::vector<double>& values, double cutoff) {
    Filtered<T> out;
    out.stats.input = items.size();
    for (std::size_t i = 0; i < items.size(); ++i)
        if (values[i] <= cutoff)
            out.kept.push_back(std::move(items[i]));
    out.stats.kept = out.kept.size();
    out.stats.dropped = out.stats.input - out.stats.kept;
    return out;
}

}  // namespace detail

/// Drops items whose loss is strictly greater than a fixed cutoff. Order of
/// kept items is preserved. Idempotent for a given cutoff.
template <typename T, typename IdOf>
Filtered<T> loss_cutoff_filter(std::vector<T> items, const LossTable& losses, double cutoff, IdOf id_of) {
    const auto values = detail::losses_of(items, losses, id_of);
    return detail::keep_at_most(std::move(items), values, cutoff);
}

/// Drops items whose loss is strictly greater than the nearest-rank
/// (1 - fraction) cutoff of their own losses. Order of kept items is
/// preserved. `cutoff_out` receives the cutoff when items is non-empty.
template <typename T, typename IdOf>
Filtered<T> loss_percentile_filter(std::vector<T> items, const LossTable& losses, double fraction, IdOf id_of,
                                   double* cutoff_out = nullptr) {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw Error(ErrorKind::invalid_argument, "loss drop fraction must be in [0, 1)");
    const auto values = detail::losses_of(items, losses, id_of);
    if (items.empty())
        return Filtered<T>{};
    const double cutoff = nearest_rank_cutoff(values, fraction);
    if (cutoff_out)
        *cutoff_out = cutoff;
    return detail::keep_at_most(std::move(items), values, cutoff);
}

Filtered<InstructionRecord> loss_percentile_filter(std::vector<InstructionRecord> records, const LossTable& losses,
                                                   double fraction = kDefaultLossDropFraction);

/// JSONL of {record_id, loss}. Rejects duplicates and non-finite or negative values.
LossTable read_loss_table(const std::filesystem::path& path);
void write_loss_table(const std::filesystem::path& path, const std::vector<LossScore>& scores);

/// JSONL of {image_id, phash_hex}, sorted by image_id.
std::map<std::string, PHash> read_hash_cache(const std::filesystem::path& path);
void write_hash_cache(const std::filesystem::path& path, const std::map<std::string, PHash>& hashes);

}  // namespace mmforge
