// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/taxonomy.hpp"

#include "mmforge/error.hpp"
#include "mmforge/jsonl.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace mmforge {

namespace {

std::string_view trim_right(std::string_view s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::string where(std::string_view origin, std::size_t line) {
    return std::string(origin) + ":" + std::to_string(line) + ": ";
}

}  // namespace

bool is_first_level_category(std::string_view name) noexcept {
    return first_level_index(name).has_value();
}

std::optional<std::size_t> first_level_index(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kFirstLevelCategories.size(); ++i)
        if (kFirstLevelCategories[i] == name)
            return i;
    return std::nullopt;
}

InstructionTag InstructionTag::make(std::string level1, std::string level2, std::string level3) {
    if (!is_first_level_category(level1))
        throw Error(ErrorKind::unknown_category, "'" + level1 + "' is not a first-level category");
    if (level2.empty() || level3.empty())
        throw Error(ErrorKind::malformed, "empty tag level under '" + level1 + "'");
    if (level2.find('/') != std::string::npos)
        throw Error(ErrorKind::malformed, "second-level name contains '/': " + level2);
    InstructionTag tag;
    tag.path_ = level1 + "/" + level2 + "/" + level3;
    tag.level1_ = std::move(level1);
    tag.level2_ = std::move(level2);
    tag.level3_ = std::move(level3);
    return tag;
}

InstructionTag InstructionTag::from_path(std::string_view path) {
    const auto a = path.find('/');
    const auto b = a == std::string_view::npos ? a : path.find('/', a + 1);
    if (b == std::string_view::npos)
        throw Error(ErrorKind::unknown_path, "not a three-level path: " + std::string(path));
    return make(std::string(path.substr(0, a)), std::string(path.substr(a + 1, b - a - 1)),
                std::string(path.substr(b + 1)));
}

const std::string& first_level_of(const InstructionTag& tag) noexcept { return tag.level1(); }

void Taxonomy::add_leaf_index(const std::string& path, LeafIndex idx, std::string_view origin) {
    if (!index_.emplace(path, idx).second)
        throw Error(ErrorKind::duplicate, std::string(origin) + ": duplicate path '" + path + "'");
}

Taxonomy Taxonomy::parse(std::string_view text, std::string_view origin) {
    Taxonomy tax;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = trim_right(raw);
        if (line.empty() || line.front() == '#')
            continue;
        if (line.front() == '!') {
            std::istringstream directive{std::string(line.substr(1))};
            std::string key;
            std::size_t value = 0;
            directive >> key;
            if (key == "leaves" && (directive >> value) && directive.eof()) {
                tax.declared_leaves_ = value;
                continue;
            }
            throw Error(ErrorKind::malformed, where(origin, lineno) + "bad directive");
        }
        if (line.find('\t') != std::string_view::npos)
            throw Error(ErrorKind::malformed, where(origin, lineno) + "tabs are not allowed");
        const auto indent = line.find_first_not_of(' ');
        const std::string name(line.substr(indent));
        switch (indent) {
        case 0: {
            if (!is_first_level_category(name))
                throw Error(ErrorKind::unknown_category,
                            where(origin, lineno) + "unknown first-level category '" + name + "'");
            for (const auto& c : tax.categories_)
                if (c.name == name)
                    throw Error(ErrorKind::duplicate,
                                where(origin, lineno) + "duplicate category '" + name + "'");
            tax.categories_.push_back(CategoryNode{name, {}});
            break;
        }
        case 2: {
            if (tax.categories_.empty())
                throw Error(ErrorKind::malformed, where(origin, lineno) + "task family before category");
            if (name.find('/') != std::string::npos)
                throw Error(ErrorKind::malformed, where(origin, lineno) + "task family name contains '/'");
            auto& families = tax.categories_.back().families;
            for (const auto& f : families)
                if (f.name == name)
                    throw Error(ErrorKind::duplicate,
                                where(origin, lineno) + "duplicate task family '" + name + "'");
            families.push_back(TaskFamily{name, {}});
            break;
        }
        case 4: {
            if (tax.categories_.empty() || tax.categories_.back().families.empty())
                throw Error(ErrorKind::malformed, where(origin, lineno) + "leaf before task family");
            auto& cat = tax.categories_.back();
            auto& fam = cat.families.back();
            auto tag = InstructionTag::make(cat.name, fam.name, name);
            tax.add_leaf_index(tag.path(),
                               LeafIndex{tax.categories_.size() - 1, cat.families.size() - 1,
                                         fam.leaves.size()},
                               where(origin, lineno));
            fam.leaves.push_back(std::move(tag));
            ++tax.leaf_count_;
            break;
        }
        default:
            throw Error(ErrorKind::malformed,
                        where(origin, lineno) + "indentation must be 0, 2 or 4 spaces");
        }
    }
    if (tax.categories_.empty())
        throw Error(ErrorKind::malformed, std::string(origin) + ": no categories");
    for (const auto& c : tax.categories_) {
        if (c.families.empty())
            throw Error(ErrorKind::malformed, std::string(origin) + ": category '" + c.name + "' is empty");
        for (const auto& f : c.families)
            if (f.leaves.empty())
                throw Error(ErrorKind::malformed,
                            std::string(origin) + ": task family '" + f.name + "' has no leaves");
    }
    if (tax.declared_leaves_ && *tax.declared_leaves_ != tax.leaf_count_)
        throw Error(ErrorKind::malformed, std::string(origin) + ": declared " +
                                              std::to_string(*tax.declared_leaves_) + " leaves, found " +
                                              std::to_string(tax.leaf_count_));
    return tax;
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
    return parse(read_text(path), path.string());
}

std::string Taxonomy::serialize() const {
    std::ostringstream out;
    out << "!leaves " << leaf_count_ << '\n';
    for (const auto& c : categories_) {
        out << c.name << '\n';
        for (const auto& f : c.families) {
            out << "  " << f.name << '\n';
            for (const auto& leaf : f.leaves)
                out << "    " << leaf.level3() << '\n';
        }
    }
    return out.str();
}

const InstructionTag* Taxonomy::find(std::string_view path) const {
    const auto it = index_.find(std::string(path));
    if (it == index_.end())
        return nullptr;
    const auto& [c, f, l] = it->second;
    return &categories_[c].families[f].leaves[l];
}

const InstructionTag& Taxonomy::resolve(std::string_view path) const {
    if (const auto* tag = find(path))
        return *tag;
    throw Error(ErrorKind::unknown_path, "'" + std::string(path) + "'");
}

std::vector<InstructionTag> Taxonomy::leaves() const {
    std::vector<InstructionTag> out;
    out.reserve(leaf_count_);
    for (const auto& c : categories_)
        for (const auto& f : c.families)
            out.insert(out.end(), f.leaves.begin(), f.leaves.end());
    return out;
}

Taxonomy load_taxonomy(const std::filesystem::path& path) { return Taxonomy::load(path); }

const InstructionTag& resolve_tag(const Taxonomy& taxonomy, std::string_view path) {
    return taxonomy.resolve(path);
}

}  // namespace mmforge
