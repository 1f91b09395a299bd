// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/image.hpp"
#include "mmforge/jsonl.hpp"
#include "mmforge/phash.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mmforge {

enum class Category { image_caption, comprehensive, selective, gpt4_synthetic };

enum class SubType {
    general_instruction,
    ocr,
    doc_chart_screen,
    math_reasoning,
    text_instruction,
    synthetic,
    caption,
};

enum class Provenance { collected, synthetic, gpt4_distilled };

std::string_view to_string(Category c) noexcept;
std::string_view to_string(SubType s) noexcept;
std::string_view to_string(Provenance p) noexcept;
Category parse_category(std::string_view name);
SubType parse_subtype(std::string_view name);
Provenance parse_provenance(std::string_view name);

/// Data category plus sub-type. ImageCaption always carries Caption, and the
/// Synthetic sub-type only appears under Gpt4AndSynthetic.
class DataCategory {
public:
    static DataCategory make(Category category, SubType subtype);

    Category category() const noexcept { return category_; }
    SubType subtype() const noexcept { return subtype_; }

    bool operator==(const DataCategory&) const = default;

private:
    DataCategory(Category c, SubType s) : category_(c), subtype_(s) {}

    Category category_;
    SubType subtype_;
};

struct Turn {
    std::string question;
    std::string answer;

    bool operator==(const Turn&) const = default;
};

struct InstructionRecord {
    std::string record_id;
    std::optional<ImageRef> image;
    std::vector<Turn> turns;
    std::string source;
    DataCategory category = DataCategory::make(Category::comprehensive, SubType::general_instruction);
    std::vector<std::string> instruction_tags;
    Provenance provenance = Provenance::collected;

    bool operator==(const InstructionRecord&) const = default;
};

/// Throws Error(unmappable) if the record breaks a structural invariant.
void validate(const InstructionRecord& record);

/// Content hash over (image_id, canonical turns, source).
std::string compute_record_id(const InstructionRecord& record);

/// Leading/trailing ASCII whitespace removed; interior untouched.
std::string trim(std::string_view text);

json to_json(const InstructionRecord& record);
InstructionRecord record_from_json(const json& j);

std::vector<InstructionRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<InstructionRecord>& records);

/// Names of the closed adapter registry: "unified", "qa", "llava",
/// "caption", "text". See docs/formats.md for the row shapes.
const std::vector<std::string>& registered_adapters();
bool is_registered_adapter(std::string_view name) noexcept;

struct SourceSpec {
    std::string name;
    std::string adapter;
    DataCategory default_category = DataCategory::make(Category::comprehensive, SubType::general_instruction);
    Provenance provenance = Provenance::collected;
    /// Base directory for relative image paths in raw rows.
    std::filesystem::path image_root;

    /// Throws Error(config) on unknown adapter or empty name.
    void check() const;
};

/// Maps a raw image locator to a stored, identified image.
using ImageResolver = std::function<ImageRef(std::string_view raw_ref)>;

/// Resolves image paths against a source root, stores the bytes in a
/// content-addressed store and remembers each image's perceptual hash.
/// Safe for concurrent use.
class StoringImageResolver {
public:
    explicit StoringImageResolver(ImageStore& store);

    ImageRef resolve(const std::filesystem::path& image_root, std::string_view raw_ref);
    ImageResolver bind(std::filesystem::path image_root);

    std::map<std::string, PHash> hashes() const;

private:
    ImageStore& store_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, ImageRef> by_path_;
    std::map<std::string, PHash> hashes_;
};

InstructionRecord normalize_record(const json& raw, const SourceSpec& spec, const ImageResolver& resolve_image);

struct IngestStats {
    std::uint64_t read = 0;
    std::uint64_t emitted = 0;
    std::uint64_t rejected = 0;

    IngestStats& operator+=(const IngestStats& o) {
        read += o.read;
        emitted += o.emitted;
        rejected += o.rejected;
        return *this;
    }
    bool operator==(const IngestStats&) const = default;
};

using RecordSink = std::function<void(InstructionRecord&&)>;

/// Normalizes each line of `shard`, emitting records in input order.
/// Rows that fail to parse or map are counted as rejected. A failing
/// stream throws Error(unreadable).
IngestStats ingest(std::istream& shard, const SourceSpec& spec, const ImageResolver& resolve_image,
                   const RecordSink& sink, std::vector<std::string>* rejections = nullptr);

/// Counts by one key, with fractions count/total in key order.
struct Partition {
    std::map<std::string, std::uint64_t> counts;
    std::uint64_t total = 0;

    void add(const std::string& key, std::uint64_t n = 1);
    void merge(const Partition& other);
    std::map<std::string, double> fractions() const;
    json to_json() const;

    bool operator==(const Partition&) const = default;
};

struct StatsReport {
    std::uint64_t records = 0;
    Partition by_category;
    Partition by_subtype;
    /// One count per distinct first-level category among a record's tags.
    Partition by_first_level_tag;

    void add(const InstructionRecord& record);
    void merge(const StatsReport& other);
    json to_json() const;

    bool operator==(const StatsReport&) const = default;
};

StatsReport corpus_stats(const std::vector<InstructionRecord>& records);

}  // namespace mmforge
