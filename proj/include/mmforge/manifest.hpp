// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/corpus.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmforge {

enum class StageId { stage1, stage2a, stage2b, stage2c, stage3, stage4 };

inline constexpr std::array<StageId, 6> kAllStageIds{StageId::stage1,  StageId::stage2a, StageId::stage2b,
                                                     StageId::stage2c, StageId::stage3,  StageId::stage4};

/// "Stage1", "Stage2a", ...
std::string_view to_string(StageId s) noexcept;
StageId parse_stage_id(std::string_view name);

/// The single data category feeding a stage.
Category stage_category(StageId s) noexcept;

/// Missing entries mean "all available".
using StageBudgets = std::map<StageId, std::size_t>;

struct ShardRef {
    std::string path;  // relative to the manifest directory
    std::string sha256;
    std::size_t records = 0;
};

struct StageManifest {
    StageId stage = StageId::stage1;
    std::vector<Category> categories;
    std::optional<std::size_t> budget;
    /// Records of the stage's category before budget truncation.
    std::size_t available = 0;
    /// Selected record ids in hash order.
    std::vector<std::string> record_ids;
    std::vector<ShardRef> shards;

    json to_json() const;
};

/// Position of a record in the deterministic hash order.
std::uint64_t record_hash(const std::string& record_id) noexcept;

/// Partitions records by category into the six stages. Comprehensive
/// records are ordered by record hash and dealt round-robin to Stage2a/b/c;
/// every stage is then truncated to its budget in hash order. Warnings
/// (empty stage, budget above availability) are appended to `warnings`.
std::vector<StageManifest> plan_manifests(const std::vector<InstructionRecord>& records, const StageBudgets& budgets,
                                          std::vector<std::string>* warnings = nullptr);

/// plan_manifests, then writes `<dir>/<Stage>.json` and JSONL shards of at
/// most shard_size records under `<dir>/shards/`.
std::vector<StageManifest> emit_manifests(const std::vector<InstructionRecord>& records, const StageBudgets& budgets,
                                          const std::filesystem::path& dir, std::size_t shard_size = 1000,
                                          std::vector<std::string>* warnings = nullptr);

}  // namespace mmforge
