// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/image.hpp"
#include "mmforge/jsonl.hpp"
#include "mmforge/taxonomy.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mmforge {

struct SeedExample {
    std::string id;
    ImageRef image;
    std::set<std::string> image_tags;
    std::string question;
    std::string answer;
    InstructionTag instruction_tag;
};

/// Image-tag counts per instruction tag ("unit"). count(t, u) is the number
/// of seed examples of unit u whose tag set contains t.
class CountTable {
public:
    void add(const InstructionTag& unit, const std::set<std::string>& image_tags);
    void merge(const CountTable& other);

    std::uint64_t count(const std::string& tag, const std::string& unit_path) const;
    std::uint64_t unit_total(const std::string& unit_path) const;
    std::uint64_t document_frequency(const std::string& tag) const;
    /// Units with at least one counted tag.
    std::size_t unit_count() const;

    const std::map<std::string, std::map<std::string, std::uint64_t>>& units() const noexcept { return units_; }

    bool operator==(const CountTable&) const = default;

private:
    // unit path -> (image tag -> count)
    std::map<std::string, std::map<std::string, std::uint64_t>> units_;
};

/// Resolved seed rows: {id, image, image_tags, question, answer, instruction_tag}.
json to_json(const SeedExample& seed);
SeedExample seed_from_json(const json& j, const Taxonomy& taxonomy);
std::vector<SeedExample> read_seed(const std::filesystem::path& path, const Taxonomy& taxonomy);
void write_seed(const std::filesystem::path& path, const std::vector<SeedExample>& seed);

CountTable count_cooccurrence(const std::vector<SeedExample>& seed);

enum class Aggregator { sum, mean, max };

std::string_view to_string(Aggregator a) noexcept;
Aggregator parse_aggregator(std::string_view name);

/// TF-IDF weights of image tags within each instruction-tag unit:
/// tf = count / unit_total, idf = ln((1 + U) / (1 + df)) + 1, w = tf * idf.
class MappingTable {
public:
    static constexpr const char* kFormulaVersion = "tfidf-smooth-v1";

    MappingTable() = default;
    MappingTable(std::size_t unit_count, std::map<std::string, std::map<std::string, double>> units)
        : unit_count_(unit_count), units_(std::move(units)) {}

    std::size_t unit_count() const noexcept { return unit_count_; }
    const std::map<std::string, std::map<std::string, double>>& units() const noexcept { return units_; }
    double weight(const std::string& tag, const std::string& unit_path) const;
    std::size_t entry_count() const;

    bool operator==(const MappingTable&) const = default;

private:
    std::size_t unit_count_ = 0;
    // unit path -> (image tag -> entry)
    std::map<std::string, std::map<std::string, double>> units_;
};

/// Throws Error(empty_corpus) when no unit has any tags.
MappingTable compute_tfidf(const CountTable& counts);

struct ScoredTag {
    InstructionTag tag;
    double score = 0.0;
};

/// Top-k units by aggregated weight of `image_tags`, score > 0 only,
/// ordered by descending score then ascending path.
std::vector<ScoredTag> select_instruction_types(const std::set<std::string>& image_tags, const MappingTable& mapping,
                                                std::size_t k, Aggregator aggregator = Aggregator::sum);

/// JSONL: header {format, formula_version, U, rows} then one
/// {unit_path, tag, weight} per row in (unit_path, tag) order.
void save_mapping(const MappingTable& mapping, const std::filesystem::path& path);
MappingTable load_mapping(const std::filesystem::path& path);

}  // namespace mmforge
