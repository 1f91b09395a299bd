// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/dedup.hpp"
#include "mmforge/error.hpp"
#include "mmforge/fixture_server.hpp"
#include "mmforge/jsonl.hpp"
#include "mmforge/manifest.hpp"
#include "mmforge/mapping.hpp"
#include "mmforge/pipeline.hpp"
#include "mmforge/report.hpp"
#include "mmforge/taxonomy.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace mmforge;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

void print_summary(const RunSummary& s) {
    std::cout << "run " << s.run_id << (s.complete ? " complete" : " incomplete") << '\n';
    std::cout << "  executed:";
    for (const auto& e : s.executed)
        std::cout << ' ' << e;
    std::cout << "\n  skipped:";
    for (const auto& e : s.skipped)
        std::cout << ' ' << e;
    std::cout << "\n  artifacts: " << s.run_dir.string() << '\n';
    for (const auto& w : s.warnings)
        std::cout << "  warning: " << w << '\n';
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        if (!trim(item).empty())
            out.push_back(trim(item));
    return out;
}

StageBudgets parse_budgets(const std::vector<std::string>& items) {
    StageBudgets budgets;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::config, "budget must look like Stage2a=100: '" + item + "'");
        try {
            budgets[parse_stage_id(item.substr(0, eq))] = std::stoull(item.substr(eq + 1));
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::config, "bad budget value in '" + item + "'");
        }
    }
    return budgets;
}

PipelineConfig config_with_env(const std::string& path) {
    auto cfg = load_config(path);
    apply_env_overrides(cfg, process_env());
    return cfg;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mm-forge: multimodal instruction data synthesis and curation"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run the pipeline from a config file");
    std::string config_path;
    bool offline = false;
    std::string run_id_override, stop_after;
    std::uint64_t fixture_seed = 0;
    bool quiet = false;
    run->add_option("-c,--config", config_path, "Config file (JSON)")->required();
    run->add_flag("--offline", offline, "Serve all endpoints from the embedded fixture server");
    run->add_option("--run-id", run_id_override, "Override the run id");
    run->add_option("--stop-after", stop_after, "Stop after this stage");
    run->add_option("--fixture-seed", fixture_seed, "Seed of the embedded fixture server");
    run->add_flag("-q,--quiet", quiet, "No progress output");

    // resume
    auto* resume = app.add_subcommand("resume", "Resume a run from its checkpoint");
    std::string resume_id, runs_dir = "runs";
    resume->add_option("run-id", resume_id, "Run id")->required();
    resume->add_option("--runs-dir", runs_dir, "Directory holding runs");
    resume->add_flag("--offline", offline, "Serve all endpoints from the embedded fixture server");
    resume->add_flag("-q,--quiet", quiet, "No progress output");

    // taxonomy
    auto* taxonomy = app.add_subcommand("taxonomy", "Taxonomy tools");
    taxonomy->require_subcommand(1);
    auto* tax_validate = taxonomy->add_subcommand("validate", "Load and validate a taxonomy file");
    std::string taxonomy_path = (asset_dir() / "taxonomy" / "instruction_tags.txt").string();
    bool list_leaves = false;
    tax_validate->add_option("-f,--file", taxonomy_path, "Taxonomy file");
    tax_validate->add_flag("--list", list_leaves, "Print every leaf path");

    // map
    auto* map = app.add_subcommand("map", "Image-tag to instruction-tag mapping");
    map->require_subcommand(1);
    auto* map_build = map->add_subcommand("build", "Build the TF-IDF mapping from seed data");
    std::string seed_path, mapping_path = "mapping.jsonl";
    map_build->add_option("--seed", seed_path, "Seed JSONL with instruction_tag and image_tags")->required();
    map_build->add_option("-o,--out", mapping_path, "Output mapping file");
    map_build->add_option("--taxonomy", taxonomy_path, "Taxonomy file");
    auto* map_select = map->add_subcommand("select", "Select instruction types for image tags");
    std::string tags_csv, aggregator = "sum";
    std::size_t k = kDefaultTypesPerImage;
    map_select->add_option("-m,--mapping", mapping_path, "Mapping file")->required();
    map_select->add_option("--tags", tags_csv, "Comma-separated image tags")->required();
    map_select->add_option("-k", k, "Number of instruction types");
    map_select->add_option("--aggregator", aggregator, "sum, mean or max");

    // synth
    auto* synth = app.add_subcommand("synth", "Run one synthesis step inside runs/<run-id>/");
    std::string step;
    synth->add_option("step", step, "questions | judge | answers | score | filter | assemble")
        ->required()
        ->check(CLI::IsMember(std::vector<std::string>(kSynthSteps.begin(), kSynthSteps.end())));
    synth->add_option("-c,--config", config_path, "Config file (JSON)")->required();
    synth->add_option("--run-id", run_id_override, "Override the run id");
    synth->add_flag("--offline", offline, "Serve all endpoints from the embedded fixture server");

    // dedup
    auto* dedup = app.add_subcommand("dedup", "Exact, near-duplicate and loss filtering of a record file");
    std::string in_path, out_path, hashes_path, losses_path;
    int threshold = kDefaultNearDupThreshold;
    double fraction = kDefaultLossDropFraction;
    dedup->add_option("-i,--in", in_path, "Input records (JSONL)")->required();
    dedup->add_option("-o,--out", out_path, "Output records (JSONL)")->required();
    dedup->add_option("--hashes", hashes_path, "pHash cache (JSONL); enables near-duplicate filtering");
    dedup->add_option("--losses", losses_path, "Loss table (JSONL); enables loss filtering");
    dedup->add_option("--near-dup-threshold", threshold, "Hamming threshold")->check(CLI::Range(0, 64));
    dedup->add_option("--loss-drop-fraction", fraction, "Top fraction by loss to drop");

    // manifest
    auto* manifest = app.add_subcommand("manifest", "Emit stage manifests for a record file");
    std::vector<std::string> budgets;
    std::size_t shard_size = 1000;
    std::string manifest_dir;
    manifest->add_option("-i,--in", in_path, "Input records (JSONL)")->required();
    manifest->add_option("-o,--out", manifest_dir, "Output directory")->required();
    manifest->add_option("--budget", budgets, "Stage budget, e.g. Stage2a=1000 (repeatable)");
    manifest->add_option("--shard-size", shard_size, "Records per shard");

    // report
    auto* report = app.add_subcommand("report", "Rebuild and print the report of a run");
    report->add_option("run-id", resume_id, "Run id")->required();
    report->add_option("--runs-dir", runs_dir, "Directory holding runs");

    // mock-server
    auto* mock = app.add_subcommand("mock-server", "Serve the deterministic fixture endpoints");
    int port = 8000;
    mock->add_option("-p,--port", port, "Port (0 picks one)");
    mock->add_option("--seed", fixture_seed, "Fixture seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        RunOptions options;
        options.offline = offline;
        options.fixture.seed = fixture_seed;
        if (!quiet)
            options.log = log_line;

        if (*run) {
            auto cfg = config_with_env(config_path);
            if (!run_id_override.empty())
                cfg.run_id = run_id_override;
            if (!stop_after.empty()) {
                if (!is_pipeline_stage(stop_after))
                    throw Error(ErrorKind::config, "unknown stage '" + stop_after + "'");
                options.stop_after = stop_after;
            }
            const auto summary = run_pipeline(cfg, options);
            print_summary(summary);
            return 0;
        }
        if (*resume) {
            print_summary(resume_pipeline(runs_dir, resume_id, options));
            return 0;
        }
        if (*tax_validate) {
            const auto tax = load_taxonomy(taxonomy_path);
            std::cout << "ok: " << tax.categories().size() << " categories, " << tax.leaf_count() << " leaves\n";
            for (const auto& c : tax.categories()) {
                std::size_t leaves = 0;
                for (const auto& f : c.families)
                    leaves += f.leaves.size();
                std::cout << "  " << c.name << ": " << c.families.size() << " families, " << leaves << " leaves\n";
            }
            if (list_leaves)
                for (const auto& leaf : tax.leaves())
                    std::cout << leaf.path() << '\n';
            return 0;
        }
        if (*map_build) {
            const auto tax = load_taxonomy(taxonomy_path);
            CountTable counts;
            for (const auto& row : read_jsonl(seed_path)) {
                const auto& tag = resolve_tag(tax, row.at("instruction_tag").get<std::string>());
                std::set<std::string> tags;
                for (const auto& t : row.at("image_tags"))
                    tags.insert(t.get<std::string>());
                counts.add(tag, tags);
            }
            const auto mapping = compute_tfidf(counts);
            save_mapping(mapping, mapping_path);
            std::cout << "mapping: " << mapping.unit_count() << " units, " << mapping.entry_count() << " entries -> "
                      << mapping_path << '\n';
            return 0;
        }
        if (*map_select) {
            const auto mapping = load_mapping(mapping_path);
            const auto tags = split_csv(tags_csv);
            for (const auto& s : select_instruction_types(std::set<std::string>(tags.begin(), tags.end()), mapping, k,
                                                          parse_aggregator(aggregator)))
                std::cout << dump_line(json{{"instruction_tag", s.tag.path()}, {"score", s.score}}) << '\n';
            return 0;
        }
        if (*synth) {
            auto cfg = config_with_env(config_path);
            if (!run_id_override.empty())
                cfg.run_id = run_id_override;
            for (const auto& f : run_synth_step(cfg, options, step))
                std::cout << f << '\n';
            return 0;
        }
        if (*dedup) {
            auto records = read_records(in_path);
            json stats = json::object();
            auto exact = dedup_exact(std::move(records));
            stats["exact"] = {{"input", exact.stats.input}, {"dropped", exact.stats.dropped}};
            records = std::move(exact.kept);
            if (!hashes_path.empty()) {
                auto near = near_dup_filter(std::move(records), read_hash_cache(hashes_path), threshold);
                stats["near_dup"] = {{"input", near.stats.input}, {"dropped", near.stats.dropped}};
                records = std::move(near.kept);
            }
            if (!losses_path.empty()) {
                if (!(fraction >= 0.0 && fraction < 1.0))
                    throw Error(ErrorKind::config, "--loss-drop-fraction must be in [0, 1)");
                auto loss = loss_percentile_filter(std::move(records), read_loss_table(losses_path), fraction);
                stats["loss"] = {{"input", loss.stats.input}, {"dropped", loss.stats.dropped}};
                records = std::move(loss.kept);
            }
            write_records(out_path, records);
            stats["output"] = records.size();
            std::cout << stats.dump(2) << '\n';
            return 0;
        }
        if (*manifest) {
            std::vector<std::string> warnings;
            const auto ms = emit_manifests(read_records(in_path), parse_budgets(budgets), manifest_dir, shard_size,
                                           &warnings);
            for (const auto& m : ms)
                std::cout << to_string(m.stage) << ": " << m.record_ids.size() << " records in " << m.shards.size()
                          << " shards\n";
            for (const auto& w : warnings)
                std::cerr << "warning: " << w << '\n';
            return 0;
        }
        if (*report) {
            const auto run_dir = fs::path(runs_dir) / resume_id;
            const auto cp = Checkpoint::load(run_dir / "checkpoint.json");
            const auto cfg = parse_config(cp.config, "/");
            const auto r = run_report(run_dir, cfg.budgets);
            write_report(run_dir / "report", r);
            std::cout << render_report_text(r);
            return 0;
        }
        if (*mock) {
            FixtureOptions fo;
            fo.seed = fixture_seed;
            FixtureServer server(fo);
            server.start(port);
            std::cout << "fixture server listening on " << server.base_url() << std::endl;
            std::signal(SIGINT, [](int) { g_stop = 1; });
            std::signal(SIGTERM, [](int) { g_stop = 1; });
            while (!g_stop)
                std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 0;
}
