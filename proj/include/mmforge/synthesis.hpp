// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/corpus.hpp"
#include "mmforge/dedup.hpp"
#include "mmforge/gateway.hpp"
#include "mmforge/mapping.hpp"
#include "mmforge/rng.hpp"
#include "mmforge/taxonomy.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mmforge {

enum class AnswerStyle { short_answer, brief_explain, detailed_explain };

std::string_view to_string(AnswerStyle s) noexcept;
AnswerStyle parse_answer_style(std::string_view name);
/// Prompt template used for a style.
std::string_view template_name(AnswerStyle s) noexcept;

enum class Verdict { relevant, irrelevant };

struct CandidateQuestion {
    ImageRef image;
    InstructionTag instruction_tag;
    std::string question;
    std::vector<std::string> exemplar_ids;
    std::optional<Verdict> relevance;
};

struct SynthQA {
    std::string qa_id;
    ImageRef image;
    InstructionTag instruction_tag;
    std::string question;
    std::string answer;
    AnswerStyle style = AnswerStyle::short_answer;
    std::optional<int> quality;
    std::optional<double> loss;
};

/// Content hash over image, tag, question, style and answer.
std::string compute_qa_id(const SynthQA& qa);

json to_json(const CandidateQuestion& c);
CandidateQuestion candidate_from_json(const json& j);
json to_json(const SynthQA& qa);
SynthQA synth_qa_from_json(const json& j);

inline constexpr int kQualityThreshold = 8;
inline constexpr std::size_t kDefaultMaxTurns = 5;
inline constexpr std::size_t kDefaultFewShot = 2;
inline constexpr std::size_t kDefaultTypesPerImage = 3;

/// Everything a synthesis step needs to reach the model services.
struct SynthContext {
    Gateway& gateway;
    const PromptLibrary& prompts;
    const ImageStore& images;
    std::string generator = "generator";
    std::string judge = "judge";
    std::string scorer = "scorer";
    /// Sampling temperature for generation calls; judging and scoring use 0.
    double generation_temperature = 0.7;
};

ImagePayload load_payload(const ImageStore& store, const ImageRef& ref);

/// Uniformly samples up to n distinct seed examples whose tag equals `tag`.
/// Deterministic in rng_seed; returns all matches when fewer than n exist.
std::vector<SeedExample> pick_fewshot(const std::vector<SeedExample>& seed, const InstructionTag& tag, std::size_t n,
                                      std::uint64_t rng_seed);

/// First trimmed line ending in '?', otherwise the whole trimmed body.
std::string extract_question(std::string_view generation);

CandidateQuestion generate_question(const SynthContext& ctx, const ImageRef& image, const InstructionTag& tag,
                                    const std::vector<SeedExample>& exemplars);

/// Leading "yes"/"no" (case-insensitive, trailing punctuation ignored).
std::optional<Verdict> parse_verdict(std::string_view text);

/// Unparseable verdicts resolve to irrelevant; `parsed` reports which.
CandidateQuestion judge_relevance(const SynthContext& ctx, CandidateQuestion candidate, bool* parsed = nullptr);

SynthQA generate_answer(const SynthContext& ctx, const CandidateQuestion& candidate, AnswerStyle style);

/// Weighted choice among the three styles (weights need not sum to 1).
AnswerStyle choose_style(const std::array<double, 3>& weights, Rng& rng);

/// Sets qa.quality from the judge's 1..10 reply; leaves it empty when the
/// reply has no score.
SynthQA score_quality(const SynthContext& ctx, SynthQA qa);

inline bool passes_quality(const SynthQA& qa, int threshold = kQualityThreshold) {
    return qa.quality && *qa.quality >= threshold;
}

std::vector<std::string> default_priority();

/// Fills `budget` by taking every item of each priority category in turn,
/// then one item per remaining category round-robin (canonical category
/// order). Selected items are returned in their original pool order.
std::vector<SynthQA> prioritized_select(const std::vector<SynthQA>& pool, std::size_t budget,
                                        const std::vector<std::string>& priority = default_priority());

/// Groups QAs by image (first appearance order) and chunks each group into
/// records of at most max_turns turns, preserving generation order.
std::vector<InstructionRecord> assemble_multiturn(const std::vector<SynthQA>& qas, std::size_t max_turns = kDefaultMaxTurns,
                                                  const std::string& source = "mmforge-synthetic");

/// Default instruction types for images with no mapping overlap: a uniformly
/// chosen first-level category, then a uniformly chosen leaf within it.
std::vector<InstructionTag> fallback_types(const Taxonomy& taxonomy, std::size_t k, Rng& rng);

struct SynthConfig {
    std::uint64_t seed = 42;
    std::size_t types_per_image = kDefaultTypesPerImage;
    std::size_t fewshot = kDefaultFewShot;
    Aggregator aggregator = Aggregator::sum;
    std::array<double, 3> style_weights{1.0, 1.0, 1.0};
    int quality_threshold = kQualityThreshold;
    double loss_drop_fraction = kDefaultLossDropFraction;
    std::optional<std::size_t> budget;
    std::vector<std::string> priority = default_priority();
    std::size_t max_turns = kDefaultMaxTurns;
    std::size_t workers = 4;
    std::string source_name = "mmforge-synthetic";
};

struct SynthStats {
    std::uint64_t images = 0;
    std::uint64_t fallback_images = 0;
    std::uint64_t candidates_generated = 0;
    std::uint64_t generation_errors = 0;
    std::uint64_t relevant = 0;
    std::uint64_t irrelevant = 0;
    std::uint64_t verdict_unparseable = 0;
    std::uint64_t judge_errors = 0;
    std::uint64_t answered = 0;
    std::uint64_t answer_errors = 0;
    std::uint64_t quality_passed = 0;
    std::uint64_t quality_below_threshold = 0;
    std::uint64_t quality_unparseable = 0;
    std::uint64_t quality_errors = 0;
    std::uint64_t loss_errors = 0;
    std::uint64_t loss_dropped = 0;
    std::uint64_t budget_dropped = 0;
    std::uint64_t retained = 0;
    std::uint64_t records = 0;
    std::uint64_t turns = 0;

    SynthStats& operator+=(const SynthStats& o);
    json to_json() const;
    static SynthStats from_json(const json& j);
};

struct SynthImage {
    ImageRef image;
    std::set<std::string> image_tags;
};

/// The synthesis stages as separate, individually resumable steps.
class Synthesizer {
public:
    Synthesizer(SynthContext ctx, const Taxonomy& taxonomy, const MappingTable& mapping,
                const std::vector<SeedExample>& seed, SynthConfig config);

    /// Instruction types chosen for an image (mapping, or fallback when empty).
    std::vector<InstructionTag> plan_types(const SynthImage& image, bool* used_fallback = nullptr) const;

    std::vector<CandidateQuestion> questions(const std::vector<SynthImage>& images, SynthStats& stats) const;
    std::vector<CandidateQuestion> judge(std::vector<CandidateQuestion> candidates, SynthStats& stats) const;
    std::vector<SynthQA> answers(const std::vector<CandidateQuestion>& judged, SynthStats& stats) const;
    /// Quality scores and losses for every answered QA.
    std::vector<SynthQA> score(std::vector<SynthQA> answered, SynthStats& stats) const;
    /// Quality threshold, loss percentile filter and prioritized selection.
    std::vector<SynthQA> filter(std::vector<SynthQA> scored, SynthStats& stats) const;
    std::vector<InstructionRecord> assemble(const std::vector<SynthQA>& retained, SynthStats& stats) const;

    const SynthConfig& config() const noexcept { return config_; }

private:
    SynthContext ctx_;
    const Taxonomy& taxonomy_;
    const MappingTable& mapping_;
    const std::vector<SeedExample>& seed_;
    SynthConfig config_;
};

}  // namespace mmforge
