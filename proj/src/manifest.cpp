// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/manifest.hpp"

#include "mmforge/digest.hpp"
#include "mmforge/error.hpp"
#include "mmforge/jsonl.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_map>

namespace mmforge {

namespace {

constexpr std::array<std::string_view, 6> kStageNames{"Stage1", "Stage2a", "Stage2b", "Stage2c", "Stage3", "Stage4"};

std::string shard_name(StageId s, std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu", index);
    return "shards/" + std::string(to_string(s)) + "-" + buf + ".jsonl";
}

}  // namespace

std::string_view to_string(StageId s) noexcept { return kStageNames[static_cast<std::size_t>(s)]; }

StageId parse_stage_id(std::string_view name) {
    for (std::size_t i = 0; i < kStageNames.size(); ++i)
        if (kStageNames[i] == name)
            return static_cast<StageId>(i);
    throw Error(ErrorKind::config, "unknown manifest stage '" + std::string(name) + "'");
}

Category stage_category(StageId s) noexcept {
    switch (s) {
    case StageId::stage1:
        return Category::image_caption;
    case StageId::stage2a:
    case StageId::stage2b:
    case StageId::stage2c:
        return Category::comprehensive;
    case StageId::stage3:
        return Category::selective;
    case StageId::stage4:
        break;
    }
    return Category::gpt4_synthetic;
}

std::uint64_t record_hash(const std::string& record_id) noexcept { return hash64(record_id); }

json StageManifest::to_json() const {
    json cats = json::array();
    for (const auto c : categories)
        cats.push_back(std::string(to_string(c)));
    json shard_list = json::array();
    for (const auto& s : shards)
        shard_list.push_back(json{{"path", s.path}, {"sha256", s.sha256}, {"records", s.records}});
    return json{{"stage", std::string(to_string(stage))},
                {"categories", cats},
                {"budget", budget ? json(*budget) : json(nullptr)},
                {"available", available},
                {"selected", record_ids.size()},
                {"shards", shard_list}};
}

std::vector<StageManifest> plan_manifests(const std::vector<InstructionRecord>& records, const StageBudgets& budgets,
                                          std::vector<std::string>* warnings) {
    std::map<Category, std::vector<std::pair<std::uint64_t, std::string>>> by_category;
    for (const auto& r : records)
        by_category[r.category.category()].emplace_back(record_hash(r.record_id), r.record_id);
    for (auto& [_, v] : by_category)
        std::sort(v.begin(), v.end());

    std::vector<StageManifest> out;
    for (const auto id : kAllStageIds) {
        StageManifest m;
        m.stage = id;
        m.categories = {stage_category(id)};
        const auto& pool = by_category[stage_category(id)];
        const bool split = stage_category(id) == Category::comprehensive;
        const auto part = static_cast<std::size_t>(id) - static_cast<std::size_t>(StageId::stage2a);
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (!split || i % 3 == part)
                m.record_ids.push_back(pool[i].second);
        m.available = m.record_ids.size();
        if (const auto b = budgets.find(id); b != budgets.end()) {
            m.budget = b->second;
            if (b->second > m.available) {
                if (warnings)
                    warnings->push_back(std::string(to_string(id)) + ": budget " + std::to_string(b->second) +
                                        " exceeds " + std::to_string(m.available) + " available records; taking all");
            } else {
                m.record_ids.resize(b->second);
            }
        }
        if (m.record_ids.empty() && warnings)
            warnings->push_back(std::string(to_string(id)) + ": empty manifest");
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<StageManifest> emit_manifests(const std::vector<InstructionRecord>& records, const StageBudgets& budgets,
                                          const std::filesystem::path& dir, std::size_t shard_size,
                                          std::vector<std::string>* warnings) {
    if (shard_size == 0)
        throw Error(ErrorKind::invalid_argument, "shard size must be positive");
    auto manifests = plan_manifests(records, budgets, warnings);
    std::unordered_map<std::string, const InstructionRecord*> by_id;
    for (const auto& r : records)
        by_id.emplace(r.record_id, &r);

    for (auto& m : manifests) {
        for (std::size_t start = 0, index = 0; start < m.record_ids.size(); start += shard_size, ++index) {
            const auto end = std::min(start + shard_size, m.record_ids.size());
            ShardRef shard{shard_name(m.stage, index), {}, end - start};
            AtomicFileWriter w(dir / shard.path);
            for (auto i = start; i < end; ++i)
                w.write_line(to_json(*by_id.at(m.record_ids[i])));
            w.commit();
            shard.sha256 = sha256_file(dir / shard.path);
            m.shards.push_back(std::move(shard));
        }
        write_text_atomic(dir / (std::string(to_string(m.stage)) + ".json"), m.to_json().dump(2) + "\n");
    }
    return manifests;
}

}  // namespace mmforge
