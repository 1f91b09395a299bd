// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/dedup.hpp"

#include "mmforge/jsonl.hpp"

#include <algorithm>

namespace mmforge {

bool ExactDeduper::admit(const std::string& id) {
    ++stats_.input;
    if (seen_.insert(id).second) {
        ++stats_.kept;
        return true;
    }
    ++stats_.dropped;
    return false;
}

void HammingIndex::insert(PHash h) {
    if (nodes_.empty()) {
        nodes_.push_back(Node{h, {}});
        return;
    }
    std::uint32_t cur = 0;
    for (;;) {
        const int d = hamming(nodes_[cur].hash, h);
        auto& children = nodes_[cur].children;
        const auto it = std::find_if(children.begin(), children.end(), [d](const auto& c) { return c.first == d; });
        if (it == children.end()) {
            const auto idx = static_cast<std::uint32_t>(nodes_.size());
            children.emplace_back(d, idx);
            nodes_.push_back(Node{h, {}});
            return;
        }
        cur = it->second;
    }
}

bool HammingIndex::any_within(PHash h, int threshold) const {
    if (nodes_.empty())
        return false;
    std::vector<std::uint32_t> stack{0};
    while (!stack.empty()) {
        const auto& node = nodes_[stack.back()];
        stack.pop_back();
        const int d = hamming(node.hash, h);
        if (d <= threshold)
            return true;
        for (const auto& [cd, child] : node.children)
            if (cd >= d - threshold && cd <= d + threshold)
                stack.push_back(child);
    }
    return false;
}

NearDupGate::NearDupGate(int threshold) : threshold_(threshold) {
    if (threshold < 0 || threshold > 64)
        throw Error(ErrorKind::invalid_argument, "near-duplicate threshold must be in [0, 64]");
}

bool NearDupGate::admit(PHash h) {
    if (kept_.any_within(h, threshold_))
        return false;
    kept_.insert(h);
    return true;
}

Filtered<InstructionRecord> dedup_exact(std::vector<InstructionRecord> records) {
    ExactDeduper gate;
    Filtered<InstructionRecord> out;
    for (auto& r : records)
        if (gate.admit(r.record_id))
            out.kept.push_back(std::move(r));
    out.stats = gate.stats();
    return out;
}

Filtered<InstructionRecord> near_dup_filter(std::vector<InstructionRecord> records,
                                            const std::map<std::string, PHash>& hashes, int threshold) {
    NearDupGate gate(threshold);
    // The gate decides once per distinct image; later records sharing an
    // admitted image are kept.
    std::unordered_map<std::string, bool> decided;
    Filtered<InstructionRecord> out;
    out.stats.input = records.size();
    for (auto& r : records) {
        if (!r.image) {
            out.kept.push_back(std::move(r));
            continue;
        }
        const auto& id = r.image->image_id;
        auto d = decided.find(id);
        if (d == decided.end()) {
            const auto it = hashes.find(id);
            if (it == hashes.end())
                throw Error(ErrorKind::missing_hash, "no phash for image " + id);
            d = decided.emplace(id, gate.admit(it->second)).first;
        }
        if (d->second)
            out.kept.push_back(std::move(r));
    }
    out.stats.kept = out.kept.size();
    out.stats.dropped = out.stats.input - out.stats.kept;
    return out;
}

double nearest_rank_cutoff(std::vector<double> losses, double fraction) {
    if (losses.empty())
        throw Error(ErrorKind::invalid_argument, "percentile of an empty set");
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw Error(ErrorKind::invalid_argument, "loss drop fraction must be in [0, 1)");
    const auto n = losses.size();
    // The epsilon absorbs representation error in fraction * n (0.29 * 100
    // evaluates just below 29).
    const auto excluded = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    const std::size_t rank = std::max<std::size_t>(1, n - std::min(excluded, n));
    std::nth_element(losses.begin(), losses.begin() + static_cast<std::ptrdiff_t>(rank - 1), losses.end());
    return losses[rank - 1];
}

Filtered<InstructionRecord> loss_percentile_filter(std::vector<InstructionRecord> records, const LossTable& losses,
                                                   double fraction) {
    return loss_percentile_filter(std::move(records), losses, fraction,
                                  [](const InstructionRecord& r) -> const std::string& { return r.record_id; });
}

LossTable read_loss_table(const std::filesystem::path& path) {
    LossTable table;
    for (const auto& row : read_jsonl(path)) {
        std::string id;
        double loss = 0.0;
        try {
            id = row.at("record_id").get<std::string>();
            loss = row.at("loss").get<double>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::malformed, path.string() + ": " + e.what());
        }
        if (!std::isfinite(loss) || loss < 0.0)
            throw Error(ErrorKind::non_finite, path.string() + ": bad loss for " + id);
        if (!table.emplace(id, loss).second)
            throw Error(ErrorKind::duplicate, path.string() + ": duplicate loss for " + id);
    }
    return table;
}

void write_loss_table(const std::filesystem::path& path, const std::vector<LossScore>& scores) {
    AtomicFileWriter w(path);
    for (const auto& s : scores)
        w.write_line(json{{"record_id", s.record_id}, {"loss", s.loss}});
    w.commit();
}

std::map<std::string, PHash> read_hash_cache(const std::filesystem::path& path) {
    std::map<std::string, PHash> out;
    for (const auto& row : read_jsonl(path)) {
        try {
            out[row.at("image_id").get<std::string>()] = phash_from_hex(row.at("phash_hex").get<std::string>());
        } catch (const json::exception& e) {
            throw Error(ErrorKind::malformed, path.string() + ": " + e.what());
        }
    }
    return out;
}

void write_hash_cache(const std::filesystem::path& path, const std::map<std::string, PHash>& hashes) {
    AtomicFileWriter w(path);
    for (const auto& [id, h] : hashes)
        w.write_line(json{{"image_id", id}, {"phash_hex", to_hex(h)}});
    w.commit();
}

}  // namespace mmforge
