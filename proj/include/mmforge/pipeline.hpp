// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/corpus.hpp"
#include "mmforge/dedup.hpp"
#include "mmforge/fixture_server.hpp"
#include "mmforge/gateway.hpp"
#include "mmforge/manifest.hpp"
#include "mmforge/synthesis.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmforge {

/// Stage names in execution order. The graph is a chain.
inline constexpr std::array<std::string_view, 8> kPipelineStages{
    "ingest", "dedup", "seed_map", "synthesize", "filter", "assemble", "manifests", "report"};

bool is_pipeline_stage(std::string_view name) noexcept;

/// Endpoint roles the pipeline calls.
inline constexpr std::array<std::string_view, 4> kEndpointRoles{"generator", "judge", "scorer", "tagger"};

struct SourceConfig {
    SourceSpec spec;
    std::filesystem::path path;
};

struct SeedDataConfig {
    std::filesystem::path path;
    std::filesystem::path image_root;
};

struct PipelineConfig {
    std::string run_id;
    std::filesystem::path runs_dir = "runs";
    std::uint64_t seed = 42;
    std::size_t workers = 4;
    std::filesystem::path taxonomy;
    std::filesystem::path prompts;
    std::vector<std::string> stages{kPipelineStages.begin(), kPipelineStages.end()};

    std::vector<SourceConfig> sources;
    std::optional<SeedDataConfig> seed_data;
    std::map<std::string, EndpointConfig> endpoints;

    int near_dup_threshold = kDefaultNearDupThreshold;
    bool collected_loss_filter = true;
    double loss_drop_fraction = kDefaultLossDropFraction;

    SynthConfig synthesis;
    double generation_temperature = 0.7;
    std::optional<std::size_t> max_synth_images;

    StageBudgets budgets;
    std::size_t shard_size = 1000;
};

/// Directory holding the bundled taxonomy and prompts. MMFORGE_ASSET_DIR
/// overrides the build-time location.
std::filesystem::path asset_dir();

/// Validates everything that can be checked without doing work; throws
/// Error(config). Relative paths resolve against base_dir.
PipelineConfig parse_config(const json& j, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical snapshot: absolute paths, no API keys. Reparsing it with
/// parse_config yields a config with the same snapshot.
json to_json(const PipelineConfig& c);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// MMFORGE_VLM_URL (generator, judge), MMFORGE_TAGGER_URL, MMFORGE_SCORER_URL
/// and MMFORGE_VLM_KEY (all endpoints).
void apply_env_overrides(PipelineConfig& c, const EnvLookup& env);

/// "run-" plus a digest of the snapshot, used when run_id is empty.
std::string default_run_id(const PipelineConfig& c);

enum class StageStatus { pending, running, done };
std::string_view to_string(StageStatus s) noexcept;

struct StageState {
    std::string name;
    StageStatus status = StageStatus::pending;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    std::string last_error;
};

struct Checkpoint {
    std::string run_id;
    json config;
    std::map<std::string, std::uint64_t> seeds;
    bool offline = false;
    std::vector<StageState> stages;

    StageState& stage(std::string_view name);
    const StageState* find(std::string_view name) const;

    json to_json() const;
    static Checkpoint from_json(const json& j);
    /// Write-then-rename.
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

struct RunOptions {
    /// Serve every endpoint from an embedded fixture server.
    bool offline = false;
    FixtureOptions fixture;
    /// Stop cleanly after this stage completes, as if the process died there.
    std::optional<std::string> stop_after;
    std::function<void(const std::string&)> log;
};

struct RunSummary {
    std::string run_id;
    std::filesystem::path run_dir;
    std::vector<std::string> executed;
    std::vector<std::string> skipped;
    bool complete = false;
    /// Run-relative path -> sha256 for every output of every done stage.
    std::map<std::string, std::string> output_digests;
    std::vector<std::string> warnings;
};

/// Executes (or resumes, when runs/<run-id>/checkpoint.json exists) the
/// configured stages. A done stage whose input digests and output files are
/// unchanged is skipped. Stage errors leave a resumable checkpoint and
/// throw Error(stage_failure).
RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

/// Reloads the config snapshot from the checkpoint and continues the run.
RunSummary resume_pipeline(const std::filesystem::path& runs_dir, const std::string& run_id, RunOptions options = {});

/// Individually runnable synthesis steps, each reading the previous step's
/// file under runs/<run-id>/synth/ (questions reads dedup and map outputs).
inline constexpr std::array<std::string_view, 6> kSynthSteps{"questions", "judge", "answers",
                                                             "score",     "filter", "assemble"};

/// Runs one synthesis step; returns the run-relative files written.
std::vector<std::string> run_synth_step(const PipelineConfig& config, const RunOptions& options, std::string_view step);

/// Rebuilds the report of an existing run from its artifacts.
json run_report(const std::filesystem::path& run_dir, const StageBudgets& budgets);

/// Process exit code for an exception escaping a CLI command: 2 for
/// configuration problems, 3 otherwise.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace mmforge
