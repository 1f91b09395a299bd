// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mmforge {

/// The six first-level instruction categories, in canonical order.
inline constexpr std::array<std::string_view, 6> kFirstLevelCategories = {
    "Coarse Perception",
    "Fine-grained Perception (single-instance)",
    "Fine-grained Perception (cross-instance)",
    "Relation Reasoning",
    "Attribute Reasoning",
    "Logic Reasoning",
};

bool is_first_level_category(std::string_view name) noexcept;

/// Position of `name` in kFirstLevelCategories, or nullopt.
std::optional<std::size_t> first_level_index(std::string_view name) noexcept;

/// A leaf of the three-level instruction taxonomy. Construction validates the
/// first level, so every live tag names one of the six categories.
class InstructionTag {
public:
    static InstructionTag make(std::string level1, std::string level2, std::string level3);

    /// Splits "L1/L2/L3". The first two levels never contain '/', so the
    /// remainder after the second separator is the leaf name verbatim.
    static InstructionTag from_path(std::string_view path);

    const std::string& level1() const noexcept { return level1_; }
    const std::string& level2() const noexcept { return level2_; }
    const std::string& level3() const noexcept { return level3_; }
    const std::string& path() const noexcept { return path_; }

    bool operator==(const InstructionTag& other) const noexcept { return path_ == other.path_; }
    std::strong_ordering operator<=>(const InstructionTag& other) const noexcept {
        return path_ <=> other.path_;
    }

private:
    InstructionTag() = default;

    std::string level1_;
    std::string level2_;
    std::string level3_;
    std::string path_;
};

const std::string& first_level_of(const InstructionTag& tag) noexcept;

struct TaskFamily {
    std::string name;
    std::vector<InstructionTag> leaves;

    bool operator==(const TaskFamily&) const = default;
};

struct CategoryNode {
    std::string name;
    std::vector<TaskFamily> families;

    bool operator==(const CategoryNode&) const = default;
};

/// Immutable, validated instruction taxonomy.
///
/// Text format (see docs/taxonomy-format.md): one name per line, indented by
/// 0, 2 or 4 spaces for levels 1..3. Lines starting with '#' are comments;
/// `!leaves N` declares the expected leaf count and is checked on load.
class Taxonomy {
public:
    static Taxonomy parse(std::string_view text, std::string_view origin = "<memory>");
    static Taxonomy load(const std::filesystem::path& path);

    /// Canonical text form; parse(serialize()) reproduces an equal taxonomy.
    std::string serialize() const;

    const std::vector<CategoryNode>& categories() const noexcept { return categories_; }
    std::size_t leaf_count() const noexcept { return leaf_count_; }
    std::optional<std::size_t> declared_leaf_count() const noexcept { return declared_leaves_; }

    const InstructionTag* find(std::string_view path) const;
    /// Exact, case-sensitive lookup; throws Error(unknown_path).
    const InstructionTag& resolve(std::string_view path) const;

    /// Leaves in asset order.
    std::vector<InstructionTag> leaves() const;

    bool operator==(const Taxonomy& other) const { return categories_ == other.categories_; }

private:
    struct LeafIndex {
        std::size_t category;
        std::size_t family;
        std::size_t leaf;
    };

    void add_leaf_index(const std::string& path, LeafIndex idx, std::string_view origin);

    std::vector<CategoryNode> categories_;
    std::unordered_map<std::string, LeafIndex> index_;
    std::size_t leaf_count_ = 0;
    std::optional<std::size_t> declared_leaves_;
};

Taxonomy load_taxonomy(const std::filesystem::path& path);
const InstructionTag& resolve_tag(const Taxonomy& taxonomy, std::string_view path);

}  // namespace mmforge
