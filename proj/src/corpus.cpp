// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/corpus.hpp"

#include "mmforge/digest.hpp"
#include "mmforge/error.hpp"
#include "mmforge/taxonomy.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace mmforge {

namespace {

constexpr std::array<std::pair<Category, std::string_view>, 4> kCategoryNames{{
    {Category::image_caption, "image_caption"},
    {Category::comprehensive, "comprehensive"},
    {Category::selective, "selective"},
    {Category::gpt4_synthetic, "gpt4_synthetic"},
}};

constexpr std::array<std::pair<SubType, std::string_view>, 7> kSubTypeNames{{
    {SubType::general_instruction, "general_instruction"},
    {SubType::ocr, "ocr"},
    {SubType::doc_chart_screen, "doc_chart_screen"},
    {SubType::math_reasoning, "math_reasoning"},
    {SubType::text_instruction, "text_instruction"},
    {SubType::synthetic, "synthetic"},
    {SubType::caption, "caption"},
}};

constexpr std::array<std::pair<Provenance, std::string_view>, 3> kProvenanceNames{{
    {Provenance::collected, "collected"},
    {Provenance::synthetic, "synthetic"},
    {Provenance::gpt4_distilled, "gpt4-distilled"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
    for (const auto& [e, name] : table)
        if (e == value)
            return name;
    return "?";
}

template <typename E, std::size_t N>
E value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view name,
           const char* what) {
    for (const auto& [e, n] : table)
        if (n == name)
            return e;
    throw Error(ErrorKind::malformed, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

const std::vector<std::string> kAdapters = {"caption", "llava", "qa", "text", "unified"};

constexpr std::string_view kDefaultCaptionPrompt = "Describe this image in detail.";

std::string required_text(const json& row, const char* key) {
    const auto it = row.find(key);
    if (it == row.end() || !it->is_string())
        throw Error(ErrorKind::unmappable, std::string("missing string field '") + key + "'");
    return it->get<std::string>();
}

std::optional<std::string> optional_text(const json& row, const char* key) {
    const auto it = row.find(key);
    if (it == row.end() || it->is_null())
        return std::nullopt;
    if (!it->is_string())
        throw Error(ErrorKind::unmappable, std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

std::string strip_image_token(std::string text) {
    static constexpr std::string_view token = "<image>";
    for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos))
        text.erase(pos, token.size());
    return text;
}

void push_turn(std::vector<Turn>& turns, std::string_view q, std::string_view a) {
    turns.push_back(Turn{trim(q), trim(a)});
}

std::vector<Turn> llava_turns(const json& row) {
    const auto it = row.find("conversations");
    if (it == row.end() || !it->is_array())
        throw Error(ErrorKind::unmappable, "missing 'conversations' array");
    std::vector<Turn> turns;
    std::optional<std::string> pending;
    for (const auto& msg : *it) {
        const auto from = required_text(msg, "from");
        const auto value = required_text(msg, "value");
        if (from == "system")
            continue;
        if (from == "human" || from == "user") {
            if (pending)
                throw Error(ErrorKind::unmappable, "two consecutive user turns");
            pending = strip_image_token(value);
        } else if (from == "gpt" || from == "assistant") {
            if (!pending)
                throw Error(ErrorKind::unmappable, "assistant turn without a question");
            push_turn(turns, *pending, value);
            pending.reset();
        } else {
            throw Error(ErrorKind::unmappable, "unknown speaker '" + from + "'");
        }
    }
    if (pending)
        throw Error(ErrorKind::unmappable, "trailing question without answer");
    return turns;
}

std::vector<Turn> turns_array(const json& arr) {
    if (!arr.is_array())
        throw Error(ErrorKind::unmappable, "'turns' must be an array");
    std::vector<Turn> turns;
    for (const auto& t : arr)
        push_turn(turns, required_text(t, "question"), required_text(t, "answer"));
    return turns;
}

}  // namespace

std::string_view to_string(Category c) noexcept { return name_of(kCategoryNames, c); }
std::string_view to_string(SubType s) noexcept { return name_of(kSubTypeNames, s); }
std::string_view to_string(Provenance p) noexcept { return name_of(kProvenanceNames, p); }
Category parse_category(std::string_view name) { return value_of(kCategoryNames, name, "category"); }
SubType parse_subtype(std::string_view name) { return value_of(kSubTypeNames, name, "sub-type"); }
Provenance parse_provenance(std::string_view name) { return value_of(kProvenanceNames, name, "provenance"); }

DataCategory DataCategory::make(Category category, SubType subtype) {
    if (category == Category::image_caption && subtype != SubType::caption)
        throw Error(ErrorKind::invalid_argument, "image_caption records must have sub-type caption");
    if (subtype == SubType::synthetic && category != Category::gpt4_synthetic)
        throw Error(ErrorKind::invalid_argument, "sub-type synthetic is only valid under gpt4_synthetic");
    return DataCategory(category, subtype);
}

std::string trim(std::string_view text) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    const auto b = text.find_first_not_of(ws);
    if (b == std::string_view::npos)
        return {};
    const auto e = text.find_last_not_of(ws);
    return std::string(text.substr(b, e - b + 1));
}

void validate(const InstructionRecord& r) {
    if (r.turns.empty())
        throw Error(ErrorKind::unmappable, "record has no turns");
    for (const auto& t : r.turns)
        if (trim(t.question).empty() || trim(t.answer).empty())
            throw Error(ErrorKind::unmappable, "empty question or answer");
    if (r.source.empty())
        throw Error(ErrorKind::unmappable, "record has no source");
    if (r.provenance == Provenance::synthetic && r.instruction_tags.empty())
        throw Error(ErrorKind::unmappable, "synthetic record without instruction tags");
    for (const auto& tag : r.instruction_tags)
        InstructionTag::from_path(tag);
}

std::string compute_record_id(const InstructionRecord& r) {
    Sha256 h;
    h.update_field("mmforge-record-v1");
    h.update_field(r.image ? std::string_view(r.image->image_id) : std::string_view());
    h.update_field(std::to_string(r.turns.size()));
    for (const auto& t : r.turns) {
        h.update_field(t.question);
        h.update_field(t.answer);
    }
    h.update_field(r.source);
    return h.hex();
}

json to_json(const InstructionRecord& r) {
    json turns = json::array();
    for (const auto& t : r.turns)
        turns.push_back(json{{"question", t.question}, {"answer", t.answer}});
    return json{{"record_id", r.record_id},
                {"image", r.image ? to_json(*r.image) : json(nullptr)},
                {"turns", std::move(turns)},
                {"source", r.source},
                {"category", to_string(r.category.category())},
                {"subtype", to_string(r.category.subtype())},
                {"instruction_tags", r.instruction_tags},
                {"provenance", to_string(r.provenance)}};
}

InstructionRecord record_from_json(const json& j) {
    InstructionRecord r;
    try {
        r.record_id = j.at("record_id").get<std::string>();
        if (const auto& img = j.at("image"); !img.is_null())
            r.image = image_ref_from_json(img);
        for (const auto& t : j.at("turns"))
            r.turns.push_back(Turn{t.at("question").get<std::string>(), t.at("answer").get<std::string>()});
        r.source = j.at("source").get<std::string>();
        r.category = DataCategory::make(parse_category(j.at("category").get<std::string>()),
                                        parse_subtype(j.at("subtype").get<std::string>()));
        r.instruction_tags = j.at("instruction_tags").get<std::vector<std::string>>();
        r.provenance = parse_provenance(j.at("provenance").get<std::string>());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("record: ") + e.what());
    }
    validate(r);
    if (compute_record_id(r) != r.record_id)
        throw Error(ErrorKind::malformed, "record_id does not match content: " + r.record_id);
    return r;
}

std::vector<InstructionRecord> read_records(const std::filesystem::path& path) {
    std::vector<InstructionRecord> out;
    for (const auto& row : read_jsonl(path))
        out.push_back(record_from_json(row));
    return out;
}

void write_records(const std::filesystem::path& path, const std::vector<InstructionRecord>& records) {
    AtomicFileWriter w(path);
    for (const auto& r : records)
        w.write_line(to_json(r));
    w.commit();
}

const std::vector<std::string>& registered_adapters() { return kAdapters; }

bool is_registered_adapter(std::string_view name) noexcept {
    return std::find(kAdapters.begin(), kAdapters.end(), name) != kAdapters.end();
}

void SourceSpec::check() const {
    if (name.empty())
        throw Error(ErrorKind::config, "source without a name");
    if (!is_registered_adapter(adapter))
        throw Error(ErrorKind::config, "source '" + name + "': unknown adapter '" + adapter + "'");
}

StoringImageResolver::StoringImageResolver(ImageStore& store) : store_(store) {}

ImageRef StoringImageResolver::resolve(const std::filesystem::path& image_root, std::string_view raw_ref) {
    const auto path = (image_root / std::filesystem::path(raw_ref)).lexically_normal();
    const auto key = path.string();
    {
        std::lock_guard lock(mu_);
        if (const auto it = by_path_.find(key); it != by_path_.end())
            return it->second;
    }
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_bytes(path);
    } catch (const Error&) {
        throw Error(ErrorKind::undecodable_image, "cannot read image " + key);
    }
    auto [ref, decoded] = store_.put(bytes);
    const auto hash = phash64(decoded.gray);
    std::lock_guard lock(mu_);
    by_path_.emplace(key, ref);
    hashes_.emplace(ref.image_id, hash);
    return ref;
}

ImageResolver StoringImageResolver::bind(std::filesystem::path image_root) {
    return [this, root = std::move(image_root)](std::string_view raw) { return resolve(root, raw); };
}

std::map<std::string, PHash> StoringImageResolver::hashes() const {
    std::lock_guard lock(mu_);
    return hashes_;
}

InstructionRecord normalize_record(const json& raw, const SourceSpec& spec, const ImageResolver& resolve_image) {
    if (!raw.is_object())
        throw Error(ErrorKind::unmappable, "row is not a JSON object");
    InstructionRecord r;
    r.source = spec.name;
    r.provenance = spec.provenance;

    std::optional<std::string> image_ref;
    if (const auto it = raw.find("image"); it != raw.end() && !it->is_null()) {
        if (it->is_string())
            image_ref = it->get<std::string>();
        else if (it->is_object() && spec.adapter == "unified")
            image_ref = it->at("uri").get<std::string>();
        else
            throw Error(ErrorKind::unmappable, "'image' must be a path string");
    }

    const auto& a = spec.adapter;
    if (a == "qa") {
        if (raw.contains("turns"))
            r.turns = turns_array(raw.at("turns"));
        else
            push_turn(r.turns, required_text(raw, "question"), required_text(raw, "answer"));
    } else if (a == "llava") {
        r.turns = llava_turns(raw);
    } else if (a == "caption") {
        if (!image_ref)
            throw Error(ErrorKind::unmappable, "caption row without image");
        push_turn(r.turns, optional_text(raw, "prompt").value_or(std::string(kDefaultCaptionPrompt)),
                  required_text(raw, "caption"));
    } else if (a == "text") {
        auto question = required_text(raw, "instruction");
        if (const auto input = optional_text(raw, "input"); input && !trim(*input).empty())
            question += "\n\n" + *input;
        push_turn(r.turns, question, required_text(raw, "output"));
        image_ref.reset();
    } else if (a == "unified") {
        if (!raw.contains("turns"))
            throw Error(ErrorKind::unmappable, "missing 'turns'");
        r.turns = turns_array(raw.at("turns"));
        if (const auto src = optional_text(raw, "source"))
            r.source = *src;
    } else {
        throw Error(ErrorKind::config, "unknown adapter '" + a + "'");
    }

    auto category = spec.default_category.category();
    auto subtype = spec.default_category.subtype();
    if (!image_ref)
        subtype = SubType::text_instruction;
    const auto cat_override = optional_text(raw, "category");
    const auto sub_override = optional_text(raw, "subtype");
    try {
        if (cat_override)
            category = parse_category(*cat_override);
        if (sub_override)
            subtype = parse_subtype(*sub_override);
        else if (category == Category::image_caption)
            subtype = SubType::caption;
        r.category = DataCategory::make(category, subtype);
    } catch (const Error& e) {
        throw Error(ErrorKind::unmappable, e.what());
    }
    if (const auto p = optional_text(raw, "provenance"))
        r.provenance = parse_provenance(*p);
    if (const auto it = raw.find("instruction_tags"); it != raw.end() && !it->is_null()) {
        try {
            r.instruction_tags = it->get<std::vector<std::string>>();
        } catch (const json::exception&) {
            throw Error(ErrorKind::unmappable, "'instruction_tags' must be a string array");
        }
    }

    if (image_ref)
        r.image = resolve_image(*image_ref);
    try {
        validate(r);
    } catch (const Error& e) {
        throw Error(ErrorKind::unmappable, e.what());
    }
    r.record_id = compute_record_id(r);
    return r;
}

IngestStats ingest(std::istream& shard, const SourceSpec& spec, const ImageResolver& resolve_image,
                   const RecordSink& sink, std::vector<std::string>* rejections) {
    spec.check();
    IngestStats stats;
    for_each_line(shard, [&](std::string_view line, std::size_t lineno) {
        ++stats.read;
        try {
            auto record = normalize_record(json::parse(line), spec, resolve_image);
            ++stats.emitted;
            sink(std::move(record));
        } catch (const json::exception& e) {
            ++stats.rejected;
            if (rejections)
                rejections->push_back(std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::unreadable)
                throw;
            ++stats.rejected;
            if (rejections)
                rejections->push_back(std::to_string(lineno) + ": " + e.what());
        }
    });
    return stats;
}

void Partition::add(const std::string& key, std::uint64_t n) {
    counts[key] += n;
    total += n;
}

void Partition::merge(const Partition& other) {
    for (const auto& [k, n] : other.counts)
        add(k, n);
}

std::map<std::string, double> Partition::fractions() const {
    std::map<std::string, double> out;
    if (total == 0)
        return out;
    for (const auto& [k, n] : counts)
        out[k] = static_cast<double>(n) / static_cast<double>(total);
    return out;
}

json Partition::to_json() const {
    json counts_j = json::object();
    for (const auto& [k, n] : counts)
        counts_j[k] = n;
    json fractions_j = json::object();
    for (const auto& [k, f] : fractions())
        fractions_j[k] = f;
    return json{{"total", total}, {"counts", std::move(counts_j)}, {"fractions", std::move(fractions_j)}};
}

void StatsReport::add(const InstructionRecord& r) {
    ++records;
    by_category.add(std::string(to_string(r.category.category())));
    by_subtype.add(std::string(to_string(r.category.subtype())));
    std::set<std::string> firsts;
    for (const auto& path : r.instruction_tags)
        firsts.insert(path.substr(0, path.find('/')));
    for (const auto& f : firsts)
        by_first_level_tag.add(f);
}

void StatsReport::merge(const StatsReport& o) {
    records += o.records;
    by_category.merge(o.by_category);
    by_subtype.merge(o.by_subtype);
    by_first_level_tag.merge(o.by_first_level_tag);
}

json StatsReport::to_json() const {
    return json{{"records", records},
                {"by_category", by_category.to_json()},
                {"by_subtype", by_subtype.to_json()},
                {"by_first_level_tag", by_first_level_tag.to_json()}};
}

StatsReport corpus_stats(const std::vector<InstructionRecord>& records) {
    StatsReport s;
    for (const auto& r : records)
        s.add(r);
    return s;
}

}  // namespace mmforge
