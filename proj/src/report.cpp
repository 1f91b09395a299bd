// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/report.hpp"

#include "mmforge/jsonl.hpp"

#include <cstdio>
#include <sstream>

namespace mmforge {

json build_report(const ReportInputs& in) {
    const auto all = corpus_stats(in.corpus);
    StatsReport synthetic;
    for (const auto& r : in.corpus)
        if (r.provenance == Provenance::synthetic)
            synthetic.add(r);

    Partition by_stage;
    for (const auto& m : in.manifests)
        by_stage.add(std::string(to_string(m.stage)), m.record_ids.size());

    json filters = json::array();
    for (const auto& f : in.filters)
        filters.push_back(json{{"filter", f.name}, {"input", f.input}, {"kept", f.kept}, {"dropped", f.dropped}});

    return json{{"records", all.records},
                {"synthetic_records", synthetic.records},
                {"by_stage", by_stage.to_json()},
                {"by_category", all.by_category.to_json()},
                {"by_subtype", all.by_subtype.to_json()},
                {"by_first_level_tag", synthetic.by_first_level_tag.to_json()},
                {"filters", filters},
                {"synthesis", in.synthesis.to_json()}};
}

namespace {

void table(std::ostringstream& out, const std::string& title, const json& partition) {
    out << title << " (total " << partition.at("total").get<std::uint64_t>() << ")\n";
    const auto& counts = partition.at("counts");
    if (counts.empty())
        out << "  (none)\n";
    for (const auto& [key, n] : counts.items()) {
        char line[160];
        std::snprintf(line, sizeof line, "  %-44s %8llu  %8.4f\n", key.c_str(),
                      static_cast<unsigned long long>(n.get<std::uint64_t>()),
                      partition.at("fractions").at(key).get<double>());
        out << line;
    }
    out << '\n';
}

}  // namespace

std::string render_report_text(const json& report) {
    std::ostringstream out;
    out << "records: " << report.at("records").get<std::uint64_t>()
        << "  synthetic: " << report.at("synthetic_records").get<std::uint64_t>() << "\n\n";
    table(out, "by stage", report.at("by_stage"));
    table(out, "by category", report.at("by_category"));
    table(out, "by subtype", report.at("by_subtype"));
    table(out, "by first-level tag (synthetic)", report.at("by_first_level_tag"));
    out << "filters\n";
    for (const auto& f : report.at("filters")) {
        char line[160];
        std::snprintf(line, sizeof line, "  %-44s in %8llu  kept %8llu  dropped %8llu\n",
                      f.at("filter").get<std::string>().c_str(),
                      static_cast<unsigned long long>(f.at("input").get<std::uint64_t>()),
                      static_cast<unsigned long long>(f.at("kept").get<std::uint64_t>()),
                      static_cast<unsigned long long>(f.at("dropped").get<std::uint64_t>()));
        out << line;
    }
    out << "\nsynthesis\n";
    for (const auto& [k, v] : report.at("synthesis").items())
        out << "  " << k << ": " << v.dump() << '\n';
    return out.str();
}

void write_report(const std::filesystem::path& dir, const json& report) {
    write_text_atomic(dir / "report.json", report.dump(2) + "\n");
    write_text_atomic(dir / "report.txt", render_report_text(report));
}

}  // namespace mmforge
