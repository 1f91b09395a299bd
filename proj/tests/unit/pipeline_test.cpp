// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/digest.hpp"
#include "mmforge/error.hpp"
#include "mmforge/manifest.hpp"
#include "mmforge/pipeline.hpp"
#include "mmforge/report.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace mmforge;

namespace {

std::vector<InstructionRecord> records_of(Category cat, int n, const std::string& prefix) {
    std::vector<InstructionRecord> out;
    for (int i = 0; i < n; ++i)
        out.push_back(test::text_record(prefix + std::to_string(i), "a", "src", cat));
    return out;
}

const StageManifest& find_stage(const std::vector<StageManifest>& ms, StageId id) {
    for (const auto& m : ms)
        if (m.stage == id)
            return m;
    throw std::runtime_error("missing stage");
}

PipelineConfig fixture_config(const std::filesystem::path& runs_dir) {
    auto cfg = load_config(test::fixture_corpus() / "config.json");
    cfg.runs_dir = runs_dir;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ErrorKind parse_error_kind(const json& j) {
    try {
        parse_config(j, test::fixture_corpus());
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("parse succeeded");
    return ErrorKind::malformed;
}

}  // namespace

TEST_CASE("stage ids and categories") {
    CHECK(to_string(StageId::stage2b) == "Stage2b");
    CHECK(parse_stage_id("Stage3") == StageId::stage3);
    CHECK_THROWS_AS(parse_stage_id("Stage5"), Error);
    CHECK(stage_category(StageId::stage1) == Category::image_caption);
    CHECK(stage_category(StageId::stage2c) == Category::comprehensive);
    CHECK(stage_category(StageId::stage3) == Category::selective);
    CHECK(stage_category(StageId::stage4) == Category::gpt4_synthetic);
}

TEST_CASE("thirty comprehensive records split ten ways three") {
    std::vector<std::string> warnings;
    const auto ms = plan_manifests(records_of(Category::comprehensive, 30, "c"), {}, &warnings);
    for (auto id : {StageId::stage2a, StageId::stage2b, StageId::stage2c})
        CHECK(find_stage(ms, id).record_ids.size() == 10);
    CHECK(find_stage(ms, StageId::stage3).record_ids.empty());
    bool warned_stage3 = false;
    for (const auto& w : warnings)
        warned_stage3 = warned_stage3 || w.find("Stage3") != std::string::npos;
    CHECK(warned_stage3);
}

TEST_CASE("manifest partition is exact and budgets truncate in hash order") {
    auto recs = records_of(Category::comprehensive, 31, "c");
    for (auto& r : records_of(Category::selective, 7, "s"))
        recs.push_back(r);
    for (auto& r : records_of(Category::image_caption, 5, "i"))
        recs.push_back(r);
    const auto all = plan_manifests(recs, {});
    std::map<std::string, int> seen;
    std::size_t sizes[3];
    int k = 0;
    for (const auto& m : all) {
        for (const auto& id : m.record_ids)
            ++seen[id];
        if (stage_category(m.stage) == Category::comprehensive)
            sizes[k++] = m.record_ids.size();
    }
    CHECK(seen.size() == recs.size());
    for (const auto& [_, n] : seen)
        CHECK(n == 1);
    CHECK(*std::max_element(sizes, sizes + 3) - *std::min_element(sizes, sizes + 3) <= 1);

    std::vector<std::string> warnings;
    const auto budgeted = plan_manifests(recs, {{StageId::stage3, 3}, {StageId::stage1, 50}}, &warnings);
    const auto& s3 = find_stage(budgeted, StageId::stage3);
    CHECK(s3.available == 7);
    CHECK(s3.record_ids.size() == 3);
    const auto& full3 = find_stage(all, StageId::stage3).record_ids;
    CHECK(std::equal(s3.record_ids.begin(), s3.record_ids.end(), full3.begin()));
    for (std::size_t i = 1; i < full3.size(); ++i)
        CHECK(record_hash(full3[i - 1]) <= record_hash(full3[i]));
    CHECK(find_stage(budgeted, StageId::stage1).record_ids.size() == 5);
    bool warned_budget = false;
    for (const auto& w : warnings)
        warned_budget = warned_budget || w.find("Stage1") != std::string::npos;
    CHECK(warned_budget);

    // Permuting the input does not change any manifest.
    auto shuffled = recs;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto again = plan_manifests(shuffled, {});
    for (std::size_t i = 0; i < all.size(); ++i)
        CHECK(again[i].record_ids == all[i].record_ids);
}

TEST_CASE("emitted shards carry digests") {
    test::TempDir dir;
    const auto recs = records_of(Category::selective, 25, "s");
    const auto ms = emit_manifests(recs, {}, dir.path(), 10);
    const auto& s3 = find_stage(ms, StageId::stage3);
    REQUIRE(s3.shards.size() == 3);
    std::size_t total = 0;
    for (const auto& sh : s3.shards) {
        CHECK(sha256_file(dir.path() / sh.path) == sh.sha256);
        total += sh.records;
    }
    CHECK(total == 25);
    CHECK(std::filesystem::exists(dir / "Stage3.json"));
    const auto j = json::parse(slurp(dir / "Stage3.json"));
    CHECK(j.at("stage") == "Stage3");
}

TEST_CASE("report partitions are normalized and the tag section may be empty") {
    ReportInputs in;
    in.corpus = records_of(Category::comprehensive, 6, "c");
    in.manifests = plan_manifests(in.corpus, {});
    in.filters = {FilterCount{"exact_dedup", 7, 6, 1}};
    const auto rep = build_report(in);
    for (const char* key : {"by_stage", "by_category", "by_subtype"}) {
        double sum = 0;
        for (const auto& [_, f] : rep.at(key).at("fractions").items())
            sum += f.get<double>();
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
    CHECK(rep.contains("by_first_level_tag"));
    CHECK(rep.at("by_first_level_tag").at("counts").empty());
    CHECK(build_report(in).dump() == rep.dump());
    CHECK(render_report_text(rep) == render_report_text(build_report(in)));
}

TEST_CASE("config validation fails fast") {
    const auto base = json::parse(slurp(test::fixture_corpus() / "config.json"));
    CHECK_NOTHROW(parse_config(base, test::fixture_corpus()));

    auto bad_stage = base;
    bad_stage["stages"] = {"ingest", "dedupe"};
    CHECK(parse_error_kind(bad_stage) == ErrorKind::config);

    auto bad_key = base;
    bad_key["bogus"] = 1;
    CHECK(parse_error_kind(bad_key) == ErrorKind::config);

    auto bad_order = base;
    bad_order["stages"] = {"dedup", "ingest"};
    CHECK(parse_error_kind(bad_order) == ErrorKind::config);

    auto bad_budget = base;
    bad_budget["manifests"]["budgets"] = {{"Stage9", 3}};
    CHECK(parse_error_kind(bad_budget) == ErrorKind::config);

    auto no_seed = base;
    no_seed.erase("seed_data");
    CHECK(parse_error_kind(no_seed) == ErrorKind::config);

    const auto cfg = parse_config(base, test::fixture_corpus());
    // The snapshot round-trips.
    CHECK(to_json(parse_config(to_json(cfg), "/")) == to_json(cfg));
}

TEST_CASE("environment overrides fill endpoints and keys") {
    auto cfg = load_config(test::fixture_corpus() / "config.json");
    const std::map<std::string, std::string> env{{"MMFORGE_VLM_URL", "http://127.0.0.1:9/v1"},
                                                 {"MMFORGE_VLM_KEY", "k"}};
    apply_env_overrides(cfg, [&](const std::string& k) -> std::optional<std::string> {
        if (const auto it = env.find(k); it != env.end())
            return it->second;
        return std::nullopt;
    });
    CHECK(cfg.endpoints.at("generator").base_url == "http://127.0.0.1:9/v1");
    CHECK(cfg.endpoints.at("judge").base_url == "http://127.0.0.1:9/v1");
    CHECK(cfg.endpoints.at("scorer").api_key == "k");
    CHECK(to_json(cfg).dump().find("\"k\"") == std::string::npos);
}

TEST_CASE("offline fixture run, rerun is a no-op, resume after dedup") {
    test::TempDir runs;
    auto cfg = fixture_config(runs.path());

    cfg.run_id = "full";
    const auto first = run_pipeline(cfg, RunOptions{true, {}, std::nullopt, {}});
    CHECK(first.complete);
    CHECK(first.executed.size() == kPipelineStages.size());
    const auto again = run_pipeline(cfg, RunOptions{true, {}, std::nullopt, {}});
    CHECK(again.executed.empty());
    CHECK(again.skipped.size() == kPipelineStages.size());
    CHECK(again.output_digests == first.output_digests);

    cfg.run_id = "partial";
    const auto part = run_pipeline(cfg, RunOptions{true, {}, std::string("dedup"), {}});
    CHECK(!part.complete);
    CHECK(part.executed == std::vector<std::string>{"ingest", "dedup"});
    const auto cp = Checkpoint::load(runs.path() / "partial" / "checkpoint.json");
    CHECK(cp.find("dedup")->status == StageStatus::done);
    CHECK(cp.find("seed_map")->status == StageStatus::pending);

    const auto resumed = resume_pipeline(runs.path(), "partial", RunOptions{});
    CHECK(resumed.complete);
    CHECK(resumed.skipped == std::vector<std::string>{"ingest", "dedup"});
    CHECK(resumed.executed.size() == kPipelineStages.size() - 2);

    // Same inputs, different run id: identical artifacts.
    CHECK(slurp(runs.path() / "full" / "report" / "report.json") ==
          slurp(runs.path() / "partial" / "report" / "report.json"));
    CHECK(slurp(runs.path() / "full" / "assemble" / "corpus.jsonl") ==
          slurp(runs.path() / "partial" / "assemble" / "corpus.jsonl"));

    // A tampered output forces that stage (and its dependents) to rerun.
    {
        std::ofstream out(runs.path() / "full" / "manifests" / "index.json", std::ios::app);
        out << " ";
    }
    cfg.run_id = "full";
    const auto repaired = run_pipeline(cfg, RunOptions{true, {}, std::nullopt, {}});
    // Manifests regenerate identical files, so the report stays valid.
    CHECK(repaired.executed == std::vector<std::string>{"manifests"});
    CHECK(repaired.output_digests == first.output_digests);
}
