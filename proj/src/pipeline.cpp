// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/pipeline.hpp"

#include "mmforge/digest.hpp"
#include "mmforge/error.hpp"
#include "mmforge/jsonl.hpp"
#include "mmforge/mapping.hpp"
#include "mmforge/parallel.hpp"
#include "mmforge/report.hpp"
#include "mmforge/taxonomy.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <initializer_list>

namespace fs = std::filesystem;

namespace mmforge {

bool is_pipeline_stage(std::string_view name) noexcept {
    return std::find(kPipelineStages.begin(), kPipelineStages.end(), name) != kPipelineStages.end();
}

fs::path asset_dir() {
    if (const char* env = std::getenv("MMFORGE_ASSET_DIR"); env && *env)
        return env;
#ifdef MMFORGE_ASSET_DIR
    return MMFORGE_ASSET_DIR;
#else
    return "assets";
#endif
}

// ---------------------------------------------------------------- config

namespace {

void only_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object())
        throw Error(ErrorKind::config, where + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw Error(ErrorKind::config, where + ": unknown key '" + key + "'");
}

fs::path resolve_path(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    const auto it = j.find(key);
    return it == j.end() || it->is_null() ? fallback : it->get<T>();
}

SourceConfig parse_source(const json& j, const fs::path& base, std::size_t index) {
    const auto where = "sources[" + std::to_string(index) + "]";
    only_keys(j, {"name", "path", "adapter", "category", "subtype", "provenance", "image_root"}, where);
    SourceConfig s;
    s.spec.name = j.at("name").get<std::string>();
    s.spec.adapter = j.at("adapter").get<std::string>();
    s.path = resolve_path(base, j.at("path").get<std::string>());
    const auto category = parse_category(get_or<std::string>(j, "category", "comprehensive"));
    const auto default_sub = category == Category::image_caption    ? "caption"
                             : category == Category::gpt4_synthetic ? "synthetic"
                                                                    : "general_instruction";
    s.spec.default_category = DataCategory::make(category, parse_subtype(get_or<std::string>(j, "subtype", default_sub)));
    s.spec.provenance = parse_provenance(get_or<std::string>(j, "provenance", "collected"));
    s.spec.image_root = j.contains("image_root") ? resolve_path(base, j.at("image_root").get<std::string>())
                                                 : s.path.parent_path();
    s.spec.check();
    return s;
}

}  // namespace

PipelineConfig parse_config(const json& j, const fs::path& base_dir) {
    try {
        only_keys(j,
                  {"run_id", "runs_dir", "seed", "workers", "taxonomy", "prompts", "stages", "sources", "seed_data",
                   "endpoints", "dedup", "synthesis", "manifests"},
                  "config");
        PipelineConfig c;
        c.run_id = get_or<std::string>(j, "run_id", "");
        if (c.run_id.find_first_of("/\\") != std::string::npos || c.run_id == "." || c.run_id == "..")
            throw Error(ErrorKind::config, "run_id must be a plain name");
        // Run artifacts live relative to the working directory, not the config.
        c.runs_dir = fs::absolute(get_or<std::string>(j, "runs_dir", "runs")).lexically_normal();
        c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
        c.workers = get_or<std::size_t>(j, "workers", c.workers);
        if (c.workers == 0)
            throw Error(ErrorKind::config, "workers must be >= 1");
        c.taxonomy = j.contains("taxonomy") ? resolve_path(base_dir, j.at("taxonomy").get<std::string>())
                                            : asset_dir() / "taxonomy" / "instruction_tags.txt";
        c.prompts = j.contains("prompts") ? resolve_path(base_dir, j.at("prompts").get<std::string>())
                                          : asset_dir() / "prompts";

        if (j.contains("stages")) {
            c.stages = j.at("stages").get<std::vector<std::string>>();
            for (const auto& s : c.stages)
                if (!is_pipeline_stage(s))
                    throw Error(ErrorKind::config, "unknown stage '" + s + "'");
            for (std::size_t i = 0; i < c.stages.size(); ++i)
                if (c.stages[i] != kPipelineStages[i])
                    throw Error(ErrorKind::config, "stages must be a prefix of the stage order; expected '" +
                                                       std::string(kPipelineStages[i]) + "' at position " +
                                                       std::to_string(i));
            if (c.stages.empty())
                throw Error(ErrorKind::config, "stages is empty");
        }

        if (!j.contains("sources") || j.at("sources").empty())
            throw Error(ErrorKind::config, "at least one source is required");
        std::set<std::string> names;
        for (std::size_t i = 0; i < j.at("sources").size(); ++i) {
            auto s = parse_source(j.at("sources")[i], base_dir, i);
            if (!names.insert(s.spec.name).second)
                throw Error(ErrorKind::config, "duplicate source name '" + s.spec.name + "'");
            c.sources.push_back(std::move(s));
        }

        if (j.contains("seed_data") && !j.at("seed_data").is_null()) {
            const auto& sd = j.at("seed_data");
            only_keys(sd, {"path", "image_root"}, "seed_data");
            SeedDataConfig s;
            s.path = resolve_path(base_dir, sd.at("path").get<std::string>());
            s.image_root = sd.contains("image_root") ? resolve_path(base_dir, sd.at("image_root").get<std::string>())
                                                     : s.path.parent_path();
            c.seed_data = s;
        }
        const bool needs_seed = std::find(c.stages.begin(), c.stages.end(), "seed_map") != c.stages.end();
        if (needs_seed && !c.seed_data)
            throw Error(ErrorKind::config, "stage seed_map requires seed_data");

        if (j.contains("endpoints")) {
            for (const auto& [role, e] : j.at("endpoints").items()) {
                if (std::find(kEndpointRoles.begin(), kEndpointRoles.end(), role) == kEndpointRoles.end())
                    throw Error(ErrorKind::config, "unknown endpoint role '" + role + "'");
                only_keys(e,
                          {"base_url", "api_key", "model", "max_concurrent", "timeout_s", "temperature", "top_p",
                           "max_tokens", "seed", "retry"},
                          "endpoints." + role);
                c.endpoints.emplace(role, endpoint_from_json(role, e));
            }
        }

        if (j.contains("dedup")) {
            const auto& d = j.at("dedup");
            only_keys(d, {"near_dup_threshold", "loss_filter", "loss_drop_fraction"}, "dedup");
            c.near_dup_threshold = get_or<int>(d, "near_dup_threshold", c.near_dup_threshold);
            c.collected_loss_filter = get_or<bool>(d, "loss_filter", c.collected_loss_filter);
            c.loss_drop_fraction = get_or<double>(d, "loss_drop_fraction", c.loss_drop_fraction);
        }
        if (c.near_dup_threshold < 0 || c.near_dup_threshold > 64)
            throw Error(ErrorKind::config, "dedup.near_dup_threshold must be in [0, 64]");
        if (!(c.loss_drop_fraction >= 0.0 && c.loss_drop_fraction < 1.0))
            throw Error(ErrorKind::config, "dedup.loss_drop_fraction must be in [0, 1)");

        auto& s = c.synthesis;
        s.seed = c.seed;
        s.workers = c.workers;
        if (j.contains("synthesis")) {
            const auto& sj = j.at("synthesis");
            only_keys(sj,
                      {"seed", "types_per_image", "fewshot", "aggregator", "style_weights", "quality_threshold",
                       "loss_drop_fraction", "budget", "priority", "max_turns", "max_images", "source_name",
                       "generation_temperature"},
                      "synthesis");
            s.seed = get_or<std::uint64_t>(sj, "seed", s.seed);
            s.types_per_image = get_or<std::size_t>(sj, "types_per_image", s.types_per_image);
            s.fewshot = get_or<std::size_t>(sj, "fewshot", s.fewshot);
            s.aggregator = parse_aggregator(get_or<std::string>(sj, "aggregator", "sum"));
            if (sj.contains("style_weights")) {
                const auto& w = sj.at("style_weights");
                if (w.is_array()) {
                    const auto v = w.get<std::vector<double>>();
                    if (v.size() != 3)
                        throw Error(ErrorKind::config, "synthesis.style_weights needs 3 values");
                    std::copy(v.begin(), v.end(), s.style_weights.begin());
                } else {
                    only_keys(w, {"short", "brief_explain", "detailed_explain"}, "synthesis.style_weights");
                    s.style_weights = {get_or<double>(w, "short", 1.0), get_or<double>(w, "brief_explain", 1.0),
                                       get_or<double>(w, "detailed_explain", 1.0)};
                }
            }
            s.quality_threshold = get_or<int>(sj, "quality_threshold", s.quality_threshold);
            s.loss_drop_fraction = get_or<double>(sj, "loss_drop_fraction", s.loss_drop_fraction);
            if (sj.contains("budget") && !sj.at("budget").is_null())
                s.budget = sj.at("budget").get<std::size_t>();
            if (sj.contains("priority"))
                s.priority = sj.at("priority").get<std::vector<std::string>>();
            s.max_turns = get_or<std::size_t>(sj, "max_turns", s.max_turns);
            if (sj.contains("max_images") && !sj.at("max_images").is_null())
                c.max_synth_images = sj.at("max_images").get<std::size_t>();
            s.source_name = get_or<std::string>(sj, "source_name", s.source_name);
            c.generation_temperature = get_or<double>(sj, "generation_temperature", c.generation_temperature);
        }
        for (const auto& p : s.priority)
            if (!is_first_level_category(p))
                throw Error(ErrorKind::config, "synthesis.priority: unknown category '" + p + "'");
        for (const auto w : s.style_weights)
            if (!(w >= 0.0))
                throw Error(ErrorKind::config, "synthesis.style_weights must be non-negative");
        if (s.style_weights[0] + s.style_weights[1] + s.style_weights[2] <= 0.0)
            throw Error(ErrorKind::config, "synthesis.style_weights must not all be zero");
        if (s.max_turns == 0 || s.types_per_image == 0)
            throw Error(ErrorKind::config, "synthesis.max_turns and types_per_image must be >= 1");
        if (s.quality_threshold < 1 || s.quality_threshold > 10)
            throw Error(ErrorKind::config, "synthesis.quality_threshold must be in [1, 10]");
        if (!(s.loss_drop_fraction >= 0.0 && s.loss_drop_fraction < 1.0))
            throw Error(ErrorKind::config, "synthesis.loss_drop_fraction must be in [0, 1)");

        if (j.contains("manifests")) {
            const auto& m = j.at("manifests");
            only_keys(m, {"shard_size", "budgets"}, "manifests");
            c.shard_size = get_or<std::size_t>(m, "shard_size", c.shard_size);
            if (m.contains("budgets"))
                for (const auto& [stage, b] : m.at("budgets").items())
                    if (!b.is_null())
                        c.budgets[parse_stage_id(stage)] = b.get<std::size_t>();
        }
        if (c.shard_size == 0)
            throw Error(ErrorKind::config, "manifests.shard_size must be >= 1");
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("config: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::config)
            throw;
        throw Error(ErrorKind::config, e.what());
    }
}

PipelineConfig load_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(ErrorKind::config, e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path());
}

json to_json(const PipelineConfig& c) {
    json sources = json::array();
    for (const auto& s : c.sources)
        sources.push_back(json{{"name", s.spec.name},
                               {"path", s.path.string()},
                               {"adapter", s.spec.adapter},
                               {"category", std::string(to_string(s.spec.default_category.category()))},
                               {"subtype", std::string(to_string(s.spec.default_category.subtype()))},
                               {"provenance", std::string(to_string(s.spec.provenance))},
                               {"image_root", s.spec.image_root.string()}});
    json endpoints = json::object();
    for (const auto& [role, e] : c.endpoints)
        endpoints[role] = to_json(e, false);
    json budgets = json::object();
    for (const auto& [stage, b] : c.budgets)
        budgets[std::string(to_string(stage))] = b;
    const auto& s = c.synthesis;
    json j{{"run_id", c.run_id},
           {"runs_dir", c.runs_dir.string()},
           {"seed", c.seed},
           {"workers", c.workers},
           {"taxonomy", c.taxonomy.string()},
           {"prompts", c.prompts.string()},
           {"stages", c.stages},
           {"sources", sources},
           {"seed_data", c.seed_data ? json{{"path", c.seed_data->path.string()},
                                            {"image_root", c.seed_data->image_root.string()}}
                                     : json(nullptr)},
           {"endpoints", endpoints},
           {"dedup",
            {{"near_dup_threshold", c.near_dup_threshold},
             {"loss_filter", c.collected_loss_filter},
             {"loss_drop_fraction", c.loss_drop_fraction}}},
           {"synthesis",
            {{"seed", s.seed},
             {"types_per_image", s.types_per_image},
             {"fewshot", s.fewshot},
             {"aggregator", std::string(to_string(s.aggregator))},
             {"style_weights", s.style_weights},
             {"quality_threshold", s.quality_threshold},
             {"loss_drop_fraction", s.loss_drop_fraction},
             {"budget", s.budget ? json(*s.budget) : json(nullptr)},
             {"priority", s.priority},
             {"max_turns", s.max_turns},
             {"max_images", c.max_synth_images ? json(*c.max_synth_images) : json(nullptr)},
             {"source_name", s.source_name},
             {"generation_temperature", c.generation_temperature}}},
           {"manifests", {{"shard_size", c.shard_size}, {"budgets", budgets}}}};
    return j;
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v || !*v)
            return std::nullopt;
        return std::string(v);
    };
}

void apply_env_overrides(PipelineConfig& c, const EnvLookup& env) {
    const auto set_url = [&](std::string_view role, const std::string& url) {
        auto [it, _] = c.endpoints.try_emplace(std::string(role));
        it->second.name = std::string(role);
        it->second.base_url = url;
    };
    if (const auto url = env("MMFORGE_VLM_URL")) {
        set_url("generator", *url);
        set_url("judge", *url);
    }
    if (const auto url = env("MMFORGE_TAGGER_URL"))
        set_url("tagger", *url);
    if (const auto url = env("MMFORGE_SCORER_URL"))
        set_url("scorer", *url);
    if (const auto key = env("MMFORGE_VLM_KEY"))
        for (auto& [_, e] : c.endpoints)
            e.api_key = *key;
}

std::string default_run_id(const PipelineConfig& c) {
    auto j = to_json(c);
    j.erase("run_id");
    j.erase("runs_dir");
    j.erase("endpoints");
    return "run-" + sha256_hex(j.dump()).substr(0, 12);
}

// ------------------------------------------------------------ checkpoint

std::string_view to_string(StageStatus s) noexcept {
    switch (s) {
    case StageStatus::pending:
        return "pending";
    case StageStatus::running:
        return "running";
    case StageStatus::done:
        break;
    }
    return "done";
}

namespace {

StageStatus parse_status(const std::string& s) {
    for (const auto v : {StageStatus::pending, StageStatus::running, StageStatus::done})
        if (to_string(v) == s)
            return v;
    throw Error(ErrorKind::malformed, "unknown stage status '" + s + "'");
}

}  // namespace

StageState& Checkpoint::stage(std::string_view name) {
    for (auto& s : stages)
        if (s.name == name)
            return s;
    StageState st;
    st.name = std::string(name);
    stages.push_back(std::move(st));
    return stages.back();
}

const StageState* Checkpoint::find(std::string_view name) const {
    for (const auto& s : stages)
        if (s.name == name)
            return &s;
    return nullptr;
}

json Checkpoint::to_json() const {
    json st = json::array();
    for (const auto& s : stages)
        st.push_back(json{{"name", s.name},
                          {"status", std::string(mmforge::to_string(s.status))},
                          {"inputs", s.inputs},
                          {"outputs", s.outputs},
                          {"last_error", s.last_error}});
    return json{{"format", "mmforge-checkpoint-v1"}, {"run_id", run_id}, {"offline", offline},
                {"seeds", seeds},                    {"stages", st},       {"config", config}};
}

Checkpoint Checkpoint::from_json(const json& j) {
    try {
        if (j.at("format") != "mmforge-checkpoint-v1")
            throw Error(ErrorKind::malformed, "not a checkpoint");
        Checkpoint c;
        c.run_id = j.at("run_id").get<std::string>();
        c.offline = j.at("offline").get<bool>();
        c.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
        c.config = j.at("config");
        for (const auto& s : j.at("stages")) {
            StageState st;
            st.name = s.at("name").get<std::string>();
            st.status = parse_status(s.at("status").get<std::string>());
            st.inputs = s.at("inputs").get<std::map<std::string, std::string>>();
            st.outputs = s.at("outputs").get<std::map<std::string, std::string>>();
            st.last_error = s.at("last_error").get<std::string>();
            c.stages.push_back(std::move(st));
        }
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("checkpoint: ") + e.what());
    }
}

void Checkpoint::save(const fs::path& path) const { write_text_atomic(path, to_json().dump(2) + "\n"); }

Checkpoint Checkpoint::load(const fs::path& path) {
    try {
        return from_json(json::parse(read_text(path)));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, path.string() + ": " + e.what());
    }
}

int exit_code_for(const std::exception& e) noexcept {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (err->kind()) {
        case ErrorKind::config:
        case ErrorKind::invalid_argument:
        case ErrorKind::unknown_category:
        case ErrorKind::unknown_path:
            return 2;
        default:
            return 3;
        }
    }
    return 3;
}

// ---------------------------------------------------------------- runner

namespace {

constexpr const char* kCheckpointFile = "checkpoint.json";

std::string file_digest(const fs::path& p) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec))
        return "absent";
    return sha256_file(p);
}

std::string dir_digest(const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> files;
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        return "absent";
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file())
            files.emplace_back(fs::relative(e.path(), dir).generic_string(), sha256_file(e.path()));
    std::sort(files.begin(), files.end());
    Sha256 h;
    for (const auto& [name, digest] : files) {
        h.update_field(name);
        h.update_field(digest);
    }
    return h.hex();
}

std::string json_digest(const json& j) { return sha256_hex(j.dump()); }

template <typename T, typename F>
void write_jsonl(const fs::path& path, const std::vector<T>& items, F to) {
    AtomicFileWriter w(path);
    for (const auto& item : items)
        w.write_line(to(item));
    w.commit();
}

void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) { return json::parse(read_text(path)); }

std::vector<SynthQA> read_qas(const fs::path& path) {
    std::vector<SynthQA> out;
    for (const auto& row : read_jsonl(path))
        out.push_back(synth_qa_from_json(row));
    return out;
}

EndpointConfig fixture_endpoint(std::string_view role) {
    EndpointConfig e;
    e.name = std::string(role);
    e.model_name = "fixture";
    e.max_concurrent = 8;
    e.timeout_s = 30.0;
    e.retry.base_backoff_s = 0.05;
    e.retry.max_backoff_s = 1.0;
    return e;
}

class Runner {
public:
    Runner(PipelineConfig config, RunOptions options, fs::path run_dir, Checkpoint checkpoint)
        : cfg_(std::move(config)),
          opt_(std::move(options)),
          run_dir_(std::move(run_dir)),
          cp_(std::move(checkpoint)),
          store_(run_dir_ / "images") {}

    ~Runner() {
        gateway_.reset();
        if (fixture_)
            fixture_->stop();
    }

    RunSummary run();

private:
    void log(const std::string& msg) const {
        if (opt_.log)
            opt_.log(msg);
    }
    fs::path at(const std::string& rel) const { return run_dir_ / rel; }
    std::string digest_of(const std::string& rel) const { return file_digest(at(rel)); }

    void preflight() const;
    std::map<std::string, std::string> inputs_of(const std::string& stage) const;
    std::vector<std::string> execute(const std::string& stage);
    bool outputs_intact(const StageState& st) const;

    std::vector<std::string> stage_ingest();
    std::vector<std::string> stage_dedup();
    std::vector<std::string> stage_seed_map();
    std::vector<std::string> stage_synthesize();
    std::vector<std::string> stage_filter();
    std::vector<std::string> stage_assemble();
    std::vector<std::string> stage_manifests();
    std::vector<std::string> stage_report();

public:
    std::vector<std::string> synth_step(std::string_view step);

private:

    const Taxonomy& taxonomy() {
        if (!taxonomy_)
            taxonomy_ = load_taxonomy(cfg_.taxonomy);
        return *taxonomy_;
    }
    const PromptLibrary& prompts() {
        if (!prompts_)
            prompts_ = PromptLibrary::load(cfg_.prompts);
        return *prompts_;
    }
    Gateway& gateway();
    SynthContext context() {
        SynthContext ctx{gateway(), prompts(), store_};
        ctx.generation_temperature = cfg_.generation_temperature;
        return ctx;
    }
    json service_identity() const;

    PipelineConfig cfg_;
    RunOptions opt_;
    fs::path run_dir_;
    Checkpoint cp_;
    ImageStore store_;
    std::optional<Taxonomy> taxonomy_;
    std::optional<PromptLibrary> prompts_;
    std::unique_ptr<FixtureServer> fixture_;
    std::unique_ptr<Gateway> gateway_;
    std::vector<std::string> warnings_;
};

bool stage_uses_services(std::string_view s) { return s == "seed_map" || s == "synthesize" || s == "filter"; }

void Runner::preflight() const {
    if (!fs::is_regular_file(cfg_.taxonomy))
        throw Error(ErrorKind::config, "taxonomy not found: " + cfg_.taxonomy.string());
    load_taxonomy(cfg_.taxonomy);
    for (const auto& s : cfg_.sources)
        if (!fs::is_regular_file(s.path))
            throw Error(ErrorKind::config, "source '" + s.spec.name + "' not found: " + s.path.string());
    if (cfg_.seed_data && !fs::is_regular_file(cfg_.seed_data->path))
        throw Error(ErrorKind::config, "seed data not found: " + cfg_.seed_data->path.string());
    const bool services = std::any_of(cfg_.stages.begin(), cfg_.stages.end(), stage_uses_services);
    if (services) {
        PromptLibrary::load(cfg_.prompts);
        if (!opt_.offline)
            for (const auto role : kEndpointRoles) {
                const auto it = cfg_.endpoints.find(std::string(role));
                if (it == cfg_.endpoints.end())
                    throw Error(ErrorKind::config, "endpoint '" + std::string(role) + "' is not configured");
                it->second.check();
            }
    }
}

Gateway& Runner::gateway() {
    if (gateway_)
        return *gateway_;
    std::vector<EndpointConfig> endpoints;
    if (opt_.offline) {
        fixture_ = std::make_unique<FixtureServer>(opt_.fixture);
        fixture_->start();
        log("fixture server on " + fixture_->base_url());
    }
    for (const auto role : kEndpointRoles) {
        const auto it = cfg_.endpoints.find(std::string(role));
        auto e = it != cfg_.endpoints.end() ? it->second : fixture_endpoint(role);
        e.name = std::string(role);
        if (opt_.offline)
            e.base_url = fixture_->base_url();
        e.check();
        endpoints.push_back(std::move(e));
    }
    gateway_ = std::make_unique<Gateway>(std::move(endpoints), cfg_.seed);
    return *gateway_;
}

json Runner::service_identity() const {
    if (opt_.offline) {
        const auto& f = opt_.fixture;
        return json{{"fixture_seed", f.seed},
                    {"rates",
                     {f.empty_question_rate, f.two_line_question_rate, f.irrelevant_rate, f.unparseable_verdict_rate,
                      f.empty_answer_rate, f.unparseable_score_rate}}};
    }
    json models = json::object();
    for (const auto& [role, e] : cfg_.endpoints)
        models[role] = json{{"model", e.model_name},
                            {"temperature", e.temperature},
                            {"top_p", e.top_p},
                            {"max_tokens", e.max_tokens},
                            {"seed", e.seed ? json(*e.seed) : json(nullptr)}};
    return models;
}

std::map<std::string, std::string> Runner::inputs_of(const std::string& stage) const {
    const auto snap = to_json(cfg_);
    std::map<std::string, std::string> in;
    if (stage == "ingest") {
        json sources = json::array();
        for (const auto& s : cfg_.sources) {
            json sj{{"name", s.spec.name},
                    {"adapter", s.spec.adapter},
                    {"category", std::string(to_string(s.spec.default_category.category()))},
                    {"subtype", std::string(to_string(s.spec.default_category.subtype()))},
                    {"provenance", std::string(to_string(s.spec.provenance))}};
            sources.push_back(sj);
            in["source:" + s.spec.name] = file_digest(s.path);
        }
        in["config"] = json_digest(sources);
    } else if (stage == "dedup") {
        in["ingest/records.jsonl"] = digest_of("ingest/records.jsonl");
        in["ingest/hashes.jsonl"] = digest_of("ingest/hashes.jsonl");
        in["config"] = json_digest(json{{"near_dup_threshold", cfg_.near_dup_threshold}});
    } else if (stage == "seed_map") {
        in["seed_data"] = cfg_.seed_data ? file_digest(cfg_.seed_data->path) : "absent";
        in["taxonomy"] = file_digest(cfg_.taxonomy);
        in["prompts"] = dir_digest(cfg_.prompts);
        in["service"] = json_digest(service_identity());
    } else if (stage == "synthesize") {
        for (const auto* f : {"dedup/records.jsonl", "map/seed.jsonl", "map/mapping.jsonl"})
            in[f] = digest_of(f);
        in["taxonomy"] = file_digest(cfg_.taxonomy);
        in["prompts"] = dir_digest(cfg_.prompts);
        in["service"] = json_digest(service_identity());
        auto s = snap.at("synthesis");
        for (const auto* k : {"quality_threshold", "loss_drop_fraction", "budget", "priority", "max_turns", "source_name"})
            s.erase(k);
        in["config"] = json_digest(s);
    } else if (stage == "filter") {
        for (const auto* f : {"synth/scored.jsonl", "synth/stats.json", "dedup/records.jsonl"})
            in[f] = digest_of(f);
        in["service"] = json_digest(service_identity());
        const auto& s = snap.at("synthesis");
        in["config"] = json_digest(json{{"quality_threshold", s.at("quality_threshold")},
                                        {"loss_drop_fraction", s.at("loss_drop_fraction")},
                                        {"budget", s.at("budget")},
                                        {"priority", s.at("priority")},
                                        {"collected", snap.at("dedup")}});
    } else if (stage == "assemble") {
        for (const auto* f : {"filter/retained.jsonl", "filter/collected.jsonl", "filter/stats.json"})
            in[f] = digest_of(f);
        in["config"] = json_digest(
            json{{"max_turns", cfg_.synthesis.max_turns}, {"source_name", cfg_.synthesis.source_name}});
    } else if (stage == "manifests") {
        in["assemble/corpus.jsonl"] = digest_of("assemble/corpus.jsonl");
        in["config"] = json_digest(snap.at("manifests"));
    } else if (stage == "report") {
        for (const auto* f : {"assemble/corpus.jsonl", "assemble/stats.json", "manifests/index.json",
                              "ingest/stats.json", "dedup/stats.json", "filter/stats.json"})
            in[f] = digest_of(f);
    }
    return in;
}

bool Runner::outputs_intact(const StageState& st) const {
    if (st.outputs.empty())
        return false;
    for (const auto& [rel, digest] : st.outputs)
        if (digest_of(rel) != digest)
            return false;
    return true;
}

std::vector<std::string> Runner::execute(const std::string& stage) {
    if (stage == "ingest")
        return stage_ingest();
    if (stage == "dedup")
        return stage_dedup();
    if (stage == "seed_map")
        return stage_seed_map();
    if (stage == "synthesize")
        return stage_synthesize();
    if (stage == "filter")
        return stage_filter();
    if (stage == "assemble")
        return stage_assemble();
    if (stage == "manifests")
        return stage_manifests();
    if (stage == "report")
        return stage_report();
    throw Error(ErrorKind::config, "unknown stage '" + stage + "'");
}

RunSummary Runner::run() {
    preflight();
    const auto cp_path = at(kCheckpointFile);
    cp_.config = to_json(cfg_);
    cp_.seeds = {{"pipeline", cfg_.seed}, {"synthesis", cfg_.synthesis.seed}, {"fixture", opt_.fixture.seed}};
    cp_.offline = opt_.offline;
    for (const auto s : kPipelineStages)
        cp_.stage(s);
    cp_.save(cp_path);

    RunSummary summary;
    summary.run_id = cp_.run_id;
    summary.run_dir = run_dir_;
    bool stopped = false;
    for (const auto& name : cfg_.stages) {
        auto& st = cp_.stage(name);
        const auto inputs = inputs_of(name);
        if (st.status == StageStatus::done && st.inputs == inputs && outputs_intact(st)) {
            log("skip " + name + " (inputs unchanged)");
            summary.skipped.push_back(name);
        } else {
            log("run  " + name);
            st.status = StageStatus::running;
            st.inputs = inputs;
            st.outputs.clear();
            st.last_error.clear();
            cp_.save(cp_path);
            try {
                const auto outputs = execute(name);
                for (const auto& rel : outputs)
                    st.outputs[rel] = digest_of(rel);
                st.status = StageStatus::done;
                cp_.save(cp_path);
            } catch (const std::exception& e) {
                st.status = StageStatus::pending;
                st.last_error = e.what();
                cp_.save(cp_path);
                if (exit_code_for(e) == 2)
                    throw;
                throw Error(ErrorKind::stage_failure, "stage " + name + ": " + e.what());
            }
            summary.executed.push_back(name);
        }
        if (opt_.stop_after && *opt_.stop_after == name) {
            stopped = true;
            break;
        }
    }
    summary.complete = !stopped || cfg_.stages.back() == *opt_.stop_after;
    for (const auto& name : cfg_.stages) {
        const auto* st = cp_.find(name);
        if (!st || st->status != StageStatus::done) {
            summary.complete = false;
            continue;
        }
        for (const auto& [rel, d] : st->outputs)
            summary.output_digests[rel] = d;
    }
    summary.warnings = warnings_;
    return summary;
}

// ---------------------------------------------------------------- stages

std::vector<std::string> Runner::stage_ingest() {
    StoringImageResolver resolver(store_);
    std::vector<InstructionRecord> records;
    json per_source = json::array();
    IngestStats total;
    for (const auto& src : cfg_.sources) {
        std::ifstream in(src.path, std::ios::binary);
        if (!in)
            throw Error(ErrorKind::unreadable, "cannot open source " + src.path.string());
        std::vector<std::string> rejections;
        const auto stats = ingest(in, src.spec, resolver.bind(src.spec.image_root),
                                  [&](InstructionRecord&& r) { records.push_back(std::move(r)); }, &rejections);
        if (rejections.size() > 20)
            rejections.resize(20);
        per_source.push_back(json{{"source", src.spec.name},
                                  {"read", stats.read},
                                  {"emitted", stats.emitted},
                                  {"rejected", stats.rejected},
                                  {"rejections", rejections}});
        total += stats;
        log("  " + src.spec.name + ": " + std::to_string(stats.emitted) + "/" + std::to_string(stats.read) + " rows");
    }
    write_records(at("ingest/records.jsonl"), records);
    write_hash_cache(at("ingest/hashes.jsonl"), resolver.hashes());
    write_json(at("ingest/stats.json"),
               json{{"read", total.read}, {"emitted", total.emitted}, {"rejected", total.rejected}, {"sources", per_source}});
    return {"ingest/records.jsonl", "ingest/hashes.jsonl", "ingest/stats.json"};
}

json to_json(const DedupStats& s) { return json{{"input", s.input}, {"kept", s.kept}, {"dropped", s.dropped}}; }

std::vector<std::string> Runner::stage_dedup() {
    auto exact = dedup_exact(read_records(at("ingest/records.jsonl")));
    auto near = near_dup_filter(std::move(exact.kept), read_hash_cache(at("ingest/hashes.jsonl")), cfg_.near_dup_threshold);
    write_records(at("dedup/records.jsonl"), near.kept);
    write_json(at("dedup/stats.json"), json{{"exact", to_json(exact.stats)}, {"near_dup", to_json(near.stats)}});
    log("  exact dropped " + std::to_string(exact.stats.dropped) + ", near-dup dropped " +
        std::to_string(near.stats.dropped));
    return {"dedup/records.jsonl", "dedup/stats.json"};
}

std::vector<std::string> Runner::stage_seed_map() {
    const auto& tax = taxonomy();
    const auto rows = read_jsonl(cfg_.seed_data->path);
    StoringImageResolver resolver(store_);
    std::vector<std::optional<SeedExample>> seeds(rows.size());
    std::vector<std::string> errors(rows.size());
    std::atomic<std::uint64_t> tagged{0};
    const bool needs_service = std::any_of(rows.begin(), rows.end(), [](const json& r) {
        return !r.is_object() || !r.contains("image_tags");
    });
    Gateway* gw = needs_service ? &gateway() : nullptr;
    const auto* tag_prompt = needs_service ? &prompts().get("image_tagging") : nullptr;

    parallel_for(rows.size(), cfg_.workers, [&](std::size_t i) {
        try {
            const auto& row = rows[i];
            if (!row.is_object())
                throw Error(ErrorKind::malformed, "seed row is not an object");
            const auto image = resolver.resolve(cfg_.seed_data->image_root, row.at("image").get<std::string>());
            SeedExample s{row.contains("id") ? row.at("id").get<std::string>() : "seed-" + std::to_string(i),
                          image,
                          {},
                          trim(row.at("question").get<std::string>()),
                          trim(row.at("answer").get<std::string>()),
                          resolve_tag(tax, row.at("instruction_tag").get<std::string>())};
            std::vector<ImageTag> tags;
            if (row.contains("image_tags")) {
                std::string joined;
                for (const auto& t : row.at("image_tags"))
                    joined += t.get<std::string>() + "|";
                tags = parse_tag_list(joined);
            } else {
                tags = tag_image(*gw, "tagger", *tag_prompt, load_payload(store_, s.image));
                ++tagged;
            }
            for (const auto& t : tags)
                s.image_tags.insert(t.tag);
            seeds[i] = std::move(s);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::config)
                throw;
            errors[i] = e.what();
        } catch (const json::exception& e) {
            errors[i] = e.what();
        }
    });

    std::vector<SeedExample> kept;
    std::set<std::string> ids;
    json rejections = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (seeds[i] && !ids.insert(seeds[i]->id).second)
            errors[i] = "duplicate seed id '" + seeds[i]->id + "'";
        else if (seeds[i]) {
            kept.push_back(std::move(*seeds[i]));
            continue;
        }
        if (rejections.size() < 20)
            rejections.push_back("row " + std::to_string(i + 1) + ": " + errors[i]);
    }
    const auto mapping = compute_tfidf(count_cooccurrence(kept));
    write_seed(at("map/seed.jsonl"), kept);
    save_mapping(mapping, at("map/mapping.jsonl"));
    write_json(at("map/stats.json"), json{{"rows", rows.size()},
                                          {"seed_examples", kept.size()},
                                          {"rejected", rows.size() - kept.size()},
                                          {"tagged_via_service", tagged.load()},
                                          {"units", mapping.unit_count()},
                                          {"entries", mapping.entry_count()},
                                          {"rejections", rejections}});
    log("  " + std::to_string(kept.size()) + " seed examples over " + std::to_string(mapping.unit_count()) + " units");
    return {"map/seed.jsonl", "map/mapping.jsonl", "map/stats.json"};
}

std::vector<std::string> Runner::stage_synthesize() {
    const auto records = read_records(at("dedup/records.jsonl"));
    const auto seeds = read_seed(at("map/seed.jsonl"), taxonomy());
    const auto mapping = load_mapping(at("map/mapping.jsonl"));

    std::map<std::string, ImageRef> distinct;
    for (const auto& r : records)
        if (r.image)
            distinct.emplace(r.image->image_id, *r.image);
    std::vector<SynthImage> images;
    for (const auto& [_, ref] : distinct) {
        if (cfg_.max_synth_images && images.size() >= *cfg_.max_synth_images)
            break;
        images.push_back(SynthImage{ref, {}});
    }

    auto ctx = context();
    const auto& tag_prompt = prompts().get("image_tagging");
    std::vector<char> tag_failed(images.size(), 0);
    parallel_for(images.size(), cfg_.workers, [&](std::size_t i) {
        try {
            for (const auto& t : tag_image(ctx.gateway, "tagger", tag_prompt, load_payload(store_, images[i].image)))
                images[i].image_tags.insert(t.tag);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::config)
                throw;
            tag_failed[i] = 1;
        }
    });
    const auto tag_errors = static_cast<std::uint64_t>(std::count(tag_failed.begin(), tag_failed.end(), 1));
    write_jsonl(at("synth/image_tags.jsonl"), images, [](const SynthImage& s) {
        return json{{"image", to_json(s.image)}, {"image_tags", s.image_tags}};
    });

    Synthesizer synth(ctx, taxonomy(), mapping, seeds, cfg_.synthesis);
    SynthStats stats;
    auto candidates = synth.questions(images, stats);
    log("  " + std::to_string(candidates.size()) + " candidate questions");
    candidates = synth.judge(std::move(candidates), stats);
    auto qas = synth.answers(candidates, stats);
    log("  " + std::to_string(qas.size()) + " answers");
    qas = synth.score(std::move(qas), stats);

    write_jsonl(at("synth/candidates.jsonl"), candidates, [](const CandidateQuestion& c) { return to_json(c); });
    write_jsonl(at("synth/scored.jsonl"), qas, [](const SynthQA& q) { return to_json(q); });
    write_json(at("synth/stats.json"), json{{"synthesis", stats.to_json()},
                                            {"tagging", {{"images", images.size()}, {"errors", tag_errors}}}});
    return {"synth/image_tags.jsonl", "synth/candidates.jsonl", "synth/scored.jsonl", "synth/stats.json"};
}

std::vector<std::string> Runner::stage_filter() {
    auto stats = SynthStats::from_json(read_json(at("synth/stats.json")).at("synthesis"));
    const auto seeds = read_seed(at("map/seed.jsonl"), taxonomy());
    const auto mapping = load_mapping(at("map/mapping.jsonl"));
    Synthesizer synth(context(), taxonomy(), mapping, seeds, cfg_.synthesis);
    const auto retained = synth.filter(read_qas(at("synth/scored.jsonl")), stats);
    write_jsonl(at("filter/retained.jsonl"), retained, [](const SynthQA& q) { return to_json(q); });

    auto collected = read_records(at("dedup/records.jsonl"));
    json loss_stats{{"enabled", cfg_.collected_loss_filter}, {"input", collected.size()}};
    std::vector<std::string> outputs{"filter/retained.jsonl"};
    if (cfg_.collected_loss_filter) {
        auto& gw = gateway();
        std::vector<std::optional<double>> losses(collected.size());
        parallel_for(collected.size(), cfg_.workers, [&](std::size_t i) {
            const auto& r = collected[i];
            LossQuery q;
            if (r.image)
                q.image = load_payload(store_, *r.image);
            q.turns = r.turns;
            try {
                losses[i] = score_loss(gw, "scorer", q);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::config)
                    throw;
            }
        });
        std::vector<InstructionRecord> scored;
        std::vector<LossScore> table_rows;
        LossTable table;
        for (std::size_t i = 0; i < collected.size(); ++i) {
            if (!losses[i])
                continue;
            table[collected[i].record_id] = *losses[i];
            table_rows.push_back(LossScore{collected[i].record_id, *losses[i]});
            scored.push_back(std::move(collected[i]));
        }
        const auto unscored = collected.size() - scored.size();
        auto filtered = loss_percentile_filter(std::move(scored), table, cfg_.loss_drop_fraction);
        write_loss_table(at("filter/collected_losses.jsonl"), table_rows);
        outputs.push_back("filter/collected_losses.jsonl");
        loss_stats["unscored"] = unscored;
        loss_stats["scored"] = filtered.stats.input;
        loss_stats["kept"] = filtered.stats.kept;
        loss_stats["dropped"] = filtered.stats.dropped;
        collected = std::move(filtered.kept);
    } else {
        loss_stats["unscored"] = 0;
        loss_stats["scored"] = 0;
        loss_stats["kept"] = collected.size();
        loss_stats["dropped"] = 0;
    }
    write_records(at("filter/collected.jsonl"), collected);
    write_json(at("filter/stats.json"), json{{"synthesis", stats.to_json()}, {"collected_loss", loss_stats}});
    log("  retained " + std::to_string(retained.size()) + " synthetic QAs, " + std::to_string(collected.size()) +
        " collected records");
    outputs.push_back("filter/collected.jsonl");
    outputs.push_back("filter/stats.json");
    return outputs;
}

std::vector<std::string> Runner::stage_assemble() {
    auto stats = SynthStats::from_json(read_json(at("filter/stats.json")).at("synthesis"));
    const auto synthetic =
        assemble_multiturn(read_qas(at("filter/retained.jsonl")), cfg_.synthesis.max_turns, cfg_.synthesis.source_name);
    stats.records += synthetic.size();
    for (const auto& r : synthetic)
        stats.turns += r.turns.size();
    auto corpus = read_records(at("filter/collected.jsonl"));
    corpus.insert(corpus.end(), synthetic.begin(), synthetic.end());
    write_records(at("assemble/synthetic.jsonl"), synthetic);
    write_records(at("assemble/corpus.jsonl"), corpus);
    write_json(at("assemble/stats.json"), json{{"synthesis", stats.to_json()}, {"corpus", corpus_stats(corpus).to_json()}});
    log("  " + std::to_string(synthetic.size()) + " synthetic records, corpus " + std::to_string(corpus.size()));
    return {"assemble/synthetic.jsonl", "assemble/corpus.jsonl", "assemble/stats.json"};
}

std::vector<std::string> Runner::stage_manifests() {
    const auto dir = at("manifests");
    fs::remove_all(dir);
    const auto corpus = read_records(at("assemble/corpus.jsonl"));
    std::vector<std::string> warnings;
    const auto manifests = emit_manifests(corpus, cfg_.budgets, dir, cfg_.shard_size, &warnings);
    json index = json::array();
    std::vector<std::string> outputs;
    for (const auto& m : manifests) {
        index.push_back(m.to_json());
        outputs.push_back("manifests/" + std::string(to_string(m.stage)) + ".json");
        for (const auto& s : m.shards)
            outputs.push_back("manifests/" + s.path);
    }
    write_json(dir / "index.json", json{{"stages", index}, {"warnings", warnings}});
    outputs.push_back("manifests/index.json");
    for (const auto& w : warnings) {
        log("  warning: " + w);
        warnings_.push_back(w);
    }
    return outputs;
}

json collect_report(const fs::path& run_dir, const StageBudgets& budgets) {
    const auto at = [&](const char* rel) { return run_dir / rel; };
    ReportInputs in;
    in.corpus = read_records(at("assemble/corpus.jsonl"));
    in.manifests = plan_manifests(in.corpus, budgets);
    in.synthesis = SynthStats::from_json(read_json(at("assemble/stats.json")).at("synthesis"));
    const auto& s = in.synthesis;

    const auto ingest_stats = read_json(at("ingest/stats.json"));
    in.filters.push_back(FilterCount{"ingest_rejected", ingest_stats.at("read").get<std::uint64_t>(),
                                     ingest_stats.at("emitted").get<std::uint64_t>(),
                                     ingest_stats.at("rejected").get<std::uint64_t>()});
    const auto dedup_stats = read_json(at("dedup/stats.json"));
    for (const auto* k : {"exact", "near_dup"}) {
        const auto& d = dedup_stats.at(k);
        in.filters.push_back(FilterCount{std::string(k) + "_dedup", d.at("input").get<std::uint64_t>(),
                                         d.at("kept").get<std::uint64_t>(), d.at("dropped").get<std::uint64_t>()});
    }
    const auto loss = read_json(at("filter/stats.json")).at("collected_loss");
    const auto loss_in = loss.at("input").get<std::uint64_t>();
    const auto unscored = loss.at("unscored").get<std::uint64_t>();
    in.filters.push_back(FilterCount{"collected_loss_unscored", loss_in, loss_in - unscored, unscored});
    in.filters.push_back(FilterCount{"collected_loss_percentile", loss_in - unscored,
                                     loss.at("kept").get<std::uint64_t>(), loss.at("dropped").get<std::uint64_t>()});
    in.filters.push_back(FilterCount{"synthetic_relevance", s.candidates_generated, s.relevant,
                                     s.candidates_generated - s.relevant});
    in.filters.push_back(FilterCount{"synthetic_answer", s.relevant, s.answered, s.relevant - s.answered});
    in.filters.push_back(FilterCount{"synthetic_quality", s.answered, s.quality_passed, s.answered - s.quality_passed});
    const auto after_loss = s.quality_passed - s.loss_errors - s.loss_dropped;
    in.filters.push_back(FilterCount{"synthetic_loss", s.quality_passed, after_loss, s.loss_errors + s.loss_dropped});
    in.filters.push_back(FilterCount{"synthetic_budget", after_loss, s.retained, s.budget_dropped});
    return build_report(in);
}

std::vector<std::string> Runner::stage_report() {
    write_report(at("report"), collect_report(run_dir_, cfg_.budgets));
    return {"report/report.json", "report/report.txt"};
}

std::vector<std::string> Runner::synth_step(std::string_view step) {
    const auto stats_path = at("synth/steps_stats.json");
    SynthStats stats;
    if (step != "questions" && fs::exists(stats_path))
        stats = SynthStats::from_json(read_json(stats_path));
    const auto seeds = read_seed(at("map/seed.jsonl"), taxonomy());
    const auto mapping = load_mapping(at("map/mapping.jsonl"));
    auto ctx = context();
    Synthesizer synth(ctx, taxonomy(), mapping, seeds, cfg_.synthesis);
    std::vector<std::string> out;
    if (step == "questions") {
        std::vector<SynthImage> images;
        for (const auto& row : read_jsonl(at("synth/image_tags.jsonl")))
            images.push_back(SynthImage{image_ref_from_json(row.at("image")),
                                        row.at("image_tags").get<std::set<std::string>>()});
        const auto c = synth.questions(images, stats);
        write_jsonl(at("synth/questions.jsonl"), c, [](const CandidateQuestion& q) { return to_json(q); });
        out.push_back("synth/questions.jsonl");
    } else if (step == "judge") {
        std::vector<CandidateQuestion> c;
        for (const auto& row : read_jsonl(at("synth/questions.jsonl")))
            c.push_back(candidate_from_json(row));
        c = synth.judge(std::move(c), stats);
        write_jsonl(at("synth/judged.jsonl"), c, [](const CandidateQuestion& q) { return to_json(q); });
        out.push_back("synth/judged.jsonl");
    } else if (step == "answers") {
        std::vector<CandidateQuestion> c;
        for (const auto& row : read_jsonl(at("synth/judged.jsonl")))
            c.push_back(candidate_from_json(row));
        const auto qas = synth.answers(c, stats);
        write_jsonl(at("synth/answers.jsonl"), qas, [](const SynthQA& q) { return to_json(q); });
        out.push_back("synth/answers.jsonl");
    } else if (step == "score") {
        const auto qas = synth.score(read_qas(at("synth/answers.jsonl")), stats);
        write_jsonl(at("synth/scored.jsonl"), qas, [](const SynthQA& q) { return to_json(q); });
        out.push_back("synth/scored.jsonl");
    } else if (step == "filter") {
        const auto qas = synth.filter(read_qas(at("synth/scored.jsonl")), stats);
        write_jsonl(at("synth/retained.jsonl"), qas, [](const SynthQA& q) { return to_json(q); });
        out.push_back("synth/retained.jsonl");
    } else if (step == "assemble") {
        const auto records = synth.assemble(read_qas(at("synth/retained.jsonl")), stats);
        write_records(at("synth/records.jsonl"), records);
        out.push_back("synth/records.jsonl");
    } else {
        throw Error(ErrorKind::config, "unknown synthesis step '" + std::string(step) + "'");
    }
    write_json(stats_path, stats.to_json());
    out.push_back("synth/steps_stats.json");
    return out;
}

}  // namespace

RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options) {
    auto cfg = config;
    if (cfg.run_id.empty())
        cfg.run_id = default_run_id(cfg);
    const auto run_dir = cfg.runs_dir / cfg.run_id;
    fs::create_directories(run_dir);
    Checkpoint cp;
    if (fs::exists(run_dir / kCheckpointFile))
        cp = Checkpoint::load(run_dir / kCheckpointFile);
    cp.run_id = cfg.run_id;
    Runner runner(std::move(cfg), options, run_dir, std::move(cp));
    return runner.run();
}

std::vector<std::string> run_synth_step(const PipelineConfig& config, const RunOptions& options, std::string_view step) {
    if (std::find(kSynthSteps.begin(), kSynthSteps.end(), step) == kSynthSteps.end())
        throw Error(ErrorKind::config, "unknown synthesis step '" + std::string(step) + "'");
    auto cfg = config;
    if (cfg.run_id.empty())
        cfg.run_id = default_run_id(cfg);
    const auto run_dir = cfg.runs_dir / cfg.run_id;
    if (!fs::exists(run_dir / "map" / "mapping.jsonl"))
        throw Error(ErrorKind::config, "run '" + cfg.run_id + "' has no mapping; run the pipeline through seed_map first");
    Checkpoint cp;
    cp.run_id = cfg.run_id;
    Runner runner(std::move(cfg), options, run_dir, std::move(cp));
    return runner.synth_step(step);
}

json run_report(const fs::path& run_dir, const StageBudgets& budgets) { return collect_report(run_dir, budgets); }

RunSummary resume_pipeline(const fs::path& runs_dir, const std::string& run_id, RunOptions options) {
    const auto path = runs_dir / run_id / kCheckpointFile;
    if (!fs::exists(path))
        throw Error(ErrorKind::config, "no checkpoint for run '" + run_id + "' under " + runs_dir.string());
    const auto cp = Checkpoint::load(path);
    auto cfg = parse_config(cp.config, "/");
    cfg.run_id = run_id;
    cfg.runs_dir = runs_dir;
    apply_env_overrides(cfg, process_env());
    options.offline = options.offline || cp.offline;
    if (const auto it = cp.seeds.find("fixture"); it != cp.seeds.end())
        options.fixture.seed = it->second;
    return run_pipeline(cfg, options);
}

}  // namespace mmforge
