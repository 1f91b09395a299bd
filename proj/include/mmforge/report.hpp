// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/corpus.hpp"
#include "mmforge/manifest.hpp"
#include "mmforge/synthesis.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mmforge {

/// Drop accounting for one filter.
struct FilterCount {
    std::string name;
    std::uint64_t input = 0;
    std::uint64_t kept = 0;
    std::uint64_t dropped = 0;
};

struct ReportInputs {
    std::vector<InstructionRecord> corpus;
    std::vector<StageManifest> manifests;
    std::vector<FilterCount> filters;
    SynthStats synthesis;
};

/// Counts and fractions by stage, category, subtype and (synthetic records
/// only) first-level tag, plus per-filter drops. Contains no timestamps or
/// paths, so equal inputs give byte-identical output.
json build_report(const ReportInputs& in);

/// Fixed-width plain-text rendering of build_report's output.
std::string render_report_text(const json& report);

/// Writes report.json and report.txt into dir.
void write_report(const std::filesystem::path& dir, const json& report);

}  // namespace mmforge
