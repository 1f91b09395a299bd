// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/mapping.hpp"

#include "mmforge/error.hpp"
#include "mmforge/jsonl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mmforge {

void CountTable::add(const InstructionTag& unit, const std::set<std::string>& image_tags) {
    if (image_tags.empty())
        return;
    auto& row = units_[unit.path()];
    for (const auto& t : image_tags)
        ++row[t];
}

void CountTable::merge(const CountTable& other) {
    for (const auto& [unit, row] : other.units_) {
        auto& mine = units_[unit];
        for (const auto& [tag, n] : row)
            mine[tag] += n;
    }
}

std::uint64_t CountTable::count(const std::string& tag, const std::string& unit_path) const {
    const auto u = units_.find(unit_path);
    if (u == units_.end())
        return 0;
    const auto t = u->second.find(tag);
    return t == u->second.end() ? 0 : t->second;
}

std::uint64_t CountTable::unit_total(const std::string& unit_path) const {
    const auto u = units_.find(unit_path);
    if (u == units_.end())
        return 0;
    std::uint64_t total = 0;
    for (const auto& [tag, n] : u->second)
        total += n;
    return total;
}

std::uint64_t CountTable::document_frequency(const std::string& tag) const {
    std::uint64_t df = 0;
    for (const auto& [unit, row] : units_) {
        const auto t = row.find(tag);
        if (t != row.end() && t->second > 0)
            ++df;
    }
    return df;
}

std::size_t CountTable::unit_count() const {
    return static_cast<std::size_t>(std::count_if(units_.begin(), units_.end(), [](const auto& u) {
        return std::any_of(u.second.begin(), u.second.end(), [](const auto& t) { return t.second > 0; });
    }));
}

std::string_view to_string(Aggregator a) noexcept {
    switch (a) {
    case Aggregator::sum:
        return "sum";
    case Aggregator::mean:
        return "mean";
    case Aggregator::max:
        break;
    }
    return "max";
}

Aggregator parse_aggregator(std::string_view name) {
    for (const auto a : {Aggregator::sum, Aggregator::mean, Aggregator::max})
        if (to_string(a) == name)
            return a;
    throw Error(ErrorKind::config, "unknown aggregator '" + std::string(name) + "'");
}

json to_json(const SeedExample& seed) {
    return json{{"id", seed.id},
                {"image", to_json(seed.image)},
                {"image_tags", seed.image_tags},
                {"question", seed.question},
                {"answer", seed.answer},
                {"instruction_tag", seed.instruction_tag.path()}};
}

SeedExample seed_from_json(const json& j, const Taxonomy& taxonomy) {
    try {
        return SeedExample{j.at("id").get<std::string>(),
                           image_ref_from_json(j.at("image")),
                           j.at("image_tags").get<std::set<std::string>>(),
                           j.at("question").get<std::string>(),
                           j.at("answer").get<std::string>(),
                           resolve_tag(taxonomy, j.at("instruction_tag").get<std::string>())};
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("seed row: ") + e.what());
    }
}

std::vector<SeedExample> read_seed(const std::filesystem::path& path, const Taxonomy& taxonomy) {
    std::vector<SeedExample> out;
    for (const auto& row : read_jsonl(path))
        out.push_back(seed_from_json(row, taxonomy));
    return out;
}

void write_seed(const std::filesystem::path& path, const std::vector<SeedExample>& seed) {
    AtomicFileWriter w(path);
    for (const auto& s : seed)
        w.write_line(to_json(s));
    w.commit();
}

CountTable count_cooccurrence(const std::vector<SeedExample>& seed) {
    CountTable table;
    for (const auto& ex : seed)
        table.add(ex.instruction_tag, ex.image_tags);
    return table;
}

double MappingTable::weight(const std::string& tag, const std::string& unit_path) const {
    const auto u = units_.find(unit_path);
    if (u == units_.end())
        return 0.0;
    const auto t = u->second.find(tag);
    return t == u->second.end() ? 0.0 : t->second;
}

std::size_t MappingTable::entry_count() const {
    std::size_t n = 0;
    for (const auto& [unit, row] : units_)
        n += row.size();
    return n;
}

MappingTable compute_tfidf(const CountTable& counts) {
    const std::size_t big_u = counts.unit_count();
    if (big_u == 0)
        throw Error(ErrorKind::empty_corpus, "TF-IDF needs at least one unit with tags");

    std::map<std::string, std::uint64_t> df;
    for (const auto& [unit, row] : counts.units())
        for (const auto& [tag, n] : row)
            if (n > 0)
                ++df[tag];

    std::map<std::string, std::map<std::string, double>> units;
    for (const auto& [unit, row] : counts.units()) {
        std::uint64_t total = 0;
        for (const auto& [tag, n] : row)
            total += n;
        if (total == 0)
            continue;
        auto& out = units[unit];
        for (const auto& [tag, n] : row) {
            if (n == 0)
                continue;
            const double tf = static_cast<double>(n) / static_cast<double>(total);
            const double idf =
                std::log((1.0 + static_cast<double>(big_u)) / (1.0 + static_cast<double>(df.at(tag)))) + 1.0;
            out[tag] = tf * idf;
        }
    }
    return MappingTable(big_u, std::move(units));
}

std::vector<ScoredTag> select_instruction_types(const std::set<std::string>& image_tags, const MappingTable& mapping,
                                                std::size_t k, Aggregator aggregator) {
    std::vector<ScoredTag> scored;
    if (k == 0 || image_tags.empty())
        return scored;
    for (const auto& [unit, row] : mapping.units()) {
        double score = 0.0;
        for (const auto& t : image_tags) {
            const auto it = row.find(t);
            if (it == row.end())
                continue;
            if (aggregator == Aggregator::max)
                score = std::max(score, it->second);
            else
                score += it->second;
        }
        if (aggregator == Aggregator::mean)
            score /= static_cast<double>(image_tags.size());
        if (score > 0.0)
            scored.push_back(ScoredTag{InstructionTag::from_path(unit), score});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredTag& a, const ScoredTag& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.tag.path() < b.tag.path();
    });
    if (scored.size() > k)
        scored.erase(scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
    return scored;
}

void save_mapping(const MappingTable& mapping, const std::filesystem::path& path) {
    AtomicFileWriter w(path);
    w.write_line(json{{"format", "mmforge-mapping"},
                      {"formula_version", MappingTable::kFormulaVersion},
                      {"U", mapping.unit_count()},
                      {"rows", mapping.entry_count()}});
    for (const auto& [unit, row] : mapping.units())
        for (const auto& [tag, weight] : row)
            w.write_line(json{{"unit_path", unit}, {"tag", tag}, {"weight", weight}});
    w.commit();
}

MappingTable load_mapping(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::unreadable, "cannot open " + path.string());
    std::optional<json> header;
    std::size_t expected_rows = 0;
    std::size_t unit_count = 0;
    std::size_t rows = 0;
    std::map<std::string, std::map<std::string, double>> units;
    for_each_line(in, [&](std::string_view line, std::size_t lineno) {
        const auto fail = [&](const std::string& why) {
            return Error(ErrorKind::malformed, path.string() + ":" + std::to_string(lineno) + ": " + why);
        };
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw fail(e.what());
        }
        try {
            if (!header) {
                if (row.value("format", "") != "mmforge-mapping")
                    throw fail("not a mapping file");
                if (row.at("formula_version").get<std::string>() != MappingTable::kFormulaVersion)
                    throw fail("unsupported formula version");
                unit_count = row.at("U").get<std::size_t>();
                expected_rows = row.at("rows").get<std::size_t>();
                header = std::move(row);
                return;
            }
            const auto unit = row.at("unit_path").get<std::string>();
            InstructionTag::from_path(unit);
            const auto tag = row.at("tag").get<std::string>();
            const auto weight = row.at("weight").get<double>();
            if (!(weight > 0.0) || !std::isfinite(weight))
                throw fail("weights must be positive and finite");
            if (!units[unit].emplace(tag, weight).second)
                throw fail("duplicate row");
            ++rows;
        } catch (const json::exception& e) {
            throw fail(e.what());
        }
    });
    if (!header)
        throw Error(ErrorKind::malformed, path.string() + ": missing header");
    if (rows != expected_rows)
        throw Error(ErrorKind::malformed, path.string() + ": expected " + std::to_string(expected_rows) +
                                              " rows, found " + std::to_string(rows));
    return MappingTable(unit_count, std::move(units));
}

}  // namespace mmforge
