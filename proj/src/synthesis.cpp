// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/synthesis.hpp"

#include "mmforge/digest.hpp"
#include "mmforge/error.hpp"
#include "mmforge/parallel.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <map>
#include <sstream>

namespace mmforge {

namespace {

constexpr std::array<std::pair<AnswerStyle, std::string_view>, 3> kStyles{{
    {AnswerStyle::short_answer, "short"},
    {AnswerStyle::brief_explain, "brief_explain"},
    {AnswerStyle::detailed_explain, "detailed_explain"},
}};

std::vector<ContentPart> image_parts(const SynthContext& ctx, const ImageRef& ref) {
    return {ImagePart{load_payload(ctx.images, ref).data_uri()}};
}

std::optional<Verdict> verdict_from_json(const json& j) {
    if (j.is_null())
        return std::nullopt;
    const auto s = j.get<std::string>();
    if (s == "relevant")
        return Verdict::relevant;
    if (s == "irrelevant")
        return Verdict::irrelevant;
    throw Error(ErrorKind::malformed, "unknown relevance '" + s + "'");
}

}  // namespace

std::string_view to_string(AnswerStyle s) noexcept {
    for (const auto& [k, name] : kStyles)
        if (k == s)
            return name;
    return "short";
}

AnswerStyle parse_answer_style(std::string_view name) {
    for (const auto& [k, n] : kStyles)
        if (n == name)
            return k;
    throw Error(ErrorKind::malformed, "unknown answer style '" + std::string(name) + "'");
}

std::string_view template_name(AnswerStyle s) noexcept {
    switch (s) {
    case AnswerStyle::short_answer: return "answer_short";
    case AnswerStyle::brief_explain: return "answer_brief_explain";
    case AnswerStyle::detailed_explain: return "answer_detailed_explain";
    }
    return "answer_short";
}

std::string compute_qa_id(const SynthQA& qa) {
    Sha256 h;
    h.update_field("mmforge-qa-v1");
    h.update_field(qa.image.image_id);
    h.update_field(qa.instruction_tag.path());
    h.update_field(qa.question);
    h.update_field(to_string(qa.style));
    h.update_field(qa.answer);
    return h.hex();
}

json to_json(const CandidateQuestion& c) {
    return json{{"image", to_json(c.image)},
                {"instruction_tag", c.instruction_tag.path()},
                {"question", c.question},
                {"exemplar_ids", c.exemplar_ids},
                {"relevance", c.relevance ? json(*c.relevance == Verdict::relevant ? "relevant" : "irrelevant")
                                          : json(nullptr)}};
}

CandidateQuestion candidate_from_json(const json& j) {
    try {
        return CandidateQuestion{image_ref_from_json(j.at("image")),
                                 InstructionTag::from_path(j.at("instruction_tag").get<std::string>()),
                                 j.at("question").get<std::string>(),
                                 j.at("exemplar_ids").get<std::vector<std::string>>(),
                                 verdict_from_json(j.at("relevance"))};
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("candidate: ") + e.what());
    }
}

json to_json(const SynthQA& qa) {
    return json{{"qa_id", qa.qa_id},
                {"image", to_json(qa.image)},
                {"instruction_tag", qa.instruction_tag.path()},
                {"question", qa.question},
                {"answer", qa.answer},
                {"style", to_string(qa.style)},
                {"quality", qa.quality ? json(*qa.quality) : json(nullptr)},
                {"loss", qa.loss ? json(*qa.loss) : json(nullptr)}};
}

SynthQA synth_qa_from_json(const json& j) {
    try {
        SynthQA qa{j.at("qa_id").get<std::string>(),
                   image_ref_from_json(j.at("image")),
                   InstructionTag::from_path(j.at("instruction_tag").get<std::string>()),
                   j.at("question").get<std::string>(),
                   j.at("answer").get<std::string>(),
                   parse_answer_style(j.at("style").get<std::string>()),
                   std::nullopt,
                   std::nullopt};
        if (!j.at("quality").is_null())
            qa.quality = j.at("quality").get<int>();
        if (!j.at("loss").is_null())
            qa.loss = j.at("loss").get<double>();
        return qa;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("qa: ") + e.what());
    }
}

ImagePayload load_payload(const ImageStore& store, const ImageRef& ref) {
    return ImagePayload{ref.format, store.read(ref)};
}

std::vector<SeedExample> pick_fewshot(const std::vector<SeedExample>& seed, const InstructionTag& tag, std::size_t n,
                                      std::uint64_t rng_seed) {
    std::vector<const SeedExample*> matching;
    for (const auto& ex : seed)
        if (ex.instruction_tag == tag)
            matching.push_back(&ex);
    Rng rng(rng_seed);
    const auto take = std::min(n, matching.size());
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(matching.size() - i));
        std::swap(matching[i], matching[j]);
    }
    std::vector<SeedExample> out;
    for (std::size_t i = 0; i < take; ++i)
        out.push_back(*matching[i]);
    return out;
}

std::string extract_question(std::string_view generation) {
    const auto body = trim(generation);
    std::istringstream lines(body);
    std::string line;
    while (std::getline(lines, line)) {
        const auto t = trim(line);
        if (!t.empty() && t.back() == '?')
            return t;
    }
    return body;
}

CandidateQuestion generate_question(const SynthContext& ctx, const ImageRef& image, const InstructionTag& tag,
                                    const std::vector<SeedExample>& exemplars) {
    std::vector<ContentPart> shots;
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        if (exemplars[i].instruction_tag != tag)
            throw Error(ErrorKind::invalid_argument, "exemplar " + exemplars[i].id + " has a different instruction tag");
        shots.emplace_back(TextPart{"\nExample " + std::to_string(i + 1) + ":\n"});
        shots.emplace_back(ImagePart{load_payload(ctx.images, exemplars[i].image).data_uri()});
        shots.emplace_back(TextPart{"\nQuestion: " + exemplars[i].question + "\n"});
    }
    if (shots.empty())
        shots.emplace_back(TextPart{"(no examples available)"});

    auto req = ctx.prompts.get("question_generation")
                   .request({{"instruction_type", tag.level2() + " / " + tag.level3() + " (" + tag.level1() + ")"},
                             {"exemplars", std::move(shots)},
                             {"image_slot", image_parts(ctx, image)}});
    req.temperature = ctx.generation_temperature;
    const auto question = extract_question(ctx.gateway.call(ctx.generator, req).text);
    if (question.empty())
        throw Error(ErrorKind::empty_generation, "empty question for " + tag.path());
    CandidateQuestion c{image, tag, question, {}, std::nullopt};
    for (const auto& ex : exemplars)
        c.exemplar_ids.push_back(ex.id);
    return c;
}

std::optional<Verdict> parse_verdict(std::string_view text) {
    auto t = trim(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    std::size_t end = 0;
    while (end < t.size() && std::isalpha(static_cast<unsigned char>(t[end])))
        ++end;
    const auto word = t.substr(0, end);
    if (word == "yes")
        return Verdict::relevant;
    if (word == "no")
        return Verdict::irrelevant;
    return std::nullopt;
}

CandidateQuestion judge_relevance(const SynthContext& ctx, CandidateQuestion candidate, bool* parsed) {
    auto req = ctx.prompts.get("relevance_judge")
                   .request({{"image_slot", image_parts(ctx, candidate.image)}, {"question", candidate.question}});
    req.temperature = 0.0;
    const auto verdict = parse_verdict(ctx.gateway.call(ctx.judge, req).text);
    if (parsed)
        *parsed = verdict.has_value();
    candidate.relevance = verdict.value_or(Verdict::irrelevant);
    return candidate;
}

SynthQA generate_answer(const SynthContext& ctx, const CandidateQuestion& candidate, AnswerStyle style) {
    if (candidate.relevance != Verdict::relevant)
        throw Error(ErrorKind::invalid_argument, "answers are only generated for relevant questions");
    auto req = ctx.prompts.get(std::string(template_name(style)))
                   .request({{"image_slot", image_parts(ctx, candidate.image)}, {"question", candidate.question}});
    req.temperature = ctx.generation_temperature;
    auto answer = trim(ctx.gateway.call(ctx.generator, req).text);
    if (answer.empty())
        throw Error(ErrorKind::empty_generation, "empty answer");
    SynthQA qa{{}, candidate.image, candidate.instruction_tag, candidate.question, std::move(answer), style,
               std::nullopt, std::nullopt};
    qa.qa_id = compute_qa_id(qa);
    return qa;
}

AnswerStyle choose_style(const std::array<double, 3>& weights, Rng& rng) {
    double total = 0.0;
    for (const auto w : weights) {
        if (!(w >= 0.0))
            throw Error(ErrorKind::invalid_argument, "style weights must be non-negative");
        total += w;
    }
    if (!(total > 0.0))
        throw Error(ErrorKind::invalid_argument, "style weights sum to zero");
    double x = rng.unit() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (x < weights[i])
            return kStyles[i].first;
        x -= weights[i];
    }
    for (std::size_t i = weights.size(); i-- > 0;)
        if (weights[i] > 0.0)
            return kStyles[i].first;
    return AnswerStyle::short_answer;
}

SynthQA score_quality(const SynthContext& ctx, SynthQA qa) {
    auto req = ctx.prompts.get("quality_score")
                   .request({{"image_slot", image_parts(ctx, qa.image)}, {"question", qa.question}, {"answer", qa.answer}});
    req.temperature = 0.0;
    const auto text = ctx.gateway.call(ctx.judge, req).text;
    try {
        qa.quality = parse_score_1_10(text);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::no_score)
            throw;
        qa.quality.reset();
    }
    return qa;
}

std::vector<std::string> default_priority() {
    return {"Logic Reasoning", "Relation Reasoning", "Attribute Reasoning"};
}

std::vector<SynthQA> prioritized_select(const std::vector<SynthQA>& pool, std::size_t budget,
                                        const std::vector<std::string>& priority) {
    if (budget >= pool.size())
        return pool;
    std::vector<bool> chosen(pool.size(), false);
    std::size_t remaining = budget;
    for (const auto& cat : priority)
        for (std::size_t i = 0; i < pool.size() && remaining > 0; ++i)
            if (!chosen[i] && pool[i].instruction_tag.level1() == cat) {
                chosen[i] = true;
                --remaining;
            }

    std::vector<std::string> order;
    for (const auto c : kFirstLevelCategories)
        if (std::find(priority.begin(), priority.end(), c) == priority.end())
            order.emplace_back(c);
    std::map<std::string, std::deque<std::size_t>> queues;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (!chosen[i])
            queues[pool[i].instruction_tag.level1()].push_back(i);
    while (remaining > 0) {
        bool progressed = false;
        for (const auto& cat : order) {
            auto& q = queues[cat];
            if (q.empty() || remaining == 0)
                continue;
            chosen[q.front()] = true;
            q.pop_front();
            --remaining;
            progressed = true;
        }
        if (!progressed)
            break;
    }
    std::vector<SynthQA> out;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (chosen[i])
            out.push_back(pool[i]);
    return out;
}

std::vector<InstructionRecord> assemble_multiturn(const std::vector<SynthQA>& qas, std::size_t max_turns,
                                                  const std::string& source) {
    if (max_turns == 0)
        throw Error(ErrorKind::invalid_argument, "max_turns must be >= 1");
    std::vector<std::string> order;
    std::map<std::string, std::vector<const SynthQA*>> groups;
    for (const auto& qa : qas) {
        auto& g = groups[qa.image.image_id];
        if (g.empty())
            order.push_back(qa.image.image_id);
        g.push_back(&qa);
    }
    std::vector<InstructionRecord> out;
    for (const auto& image_id : order) {
        const auto& g = groups.at(image_id);
        for (std::size_t start = 0; start < g.size(); start += max_turns) {
            InstructionRecord r;
            r.image = g[start]->image;
            r.source = source;
            r.category = DataCategory::make(Category::gpt4_synthetic, SubType::synthetic);
            r.provenance = Provenance::synthetic;
            for (std::size_t i = start; i < std::min(g.size(), start + max_turns); ++i) {
                r.turns.push_back(Turn{g[i]->question, g[i]->answer});
                const auto& path = g[i]->instruction_tag.path();
                if (std::find(r.instruction_tags.begin(), r.instruction_tags.end(), path) == r.instruction_tags.end())
                    r.instruction_tags.push_back(path);
            }
            r.record_id = compute_record_id(r);
            validate(r);
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::vector<InstructionTag> fallback_types(const Taxonomy& taxonomy, std::size_t k, Rng& rng) {
    std::vector<InstructionTag> out;
    const auto& cats = taxonomy.categories();
    for (std::size_t i = 0; i < k && !cats.empty(); ++i) {
        const auto& cat = cats[rng.below(cats.size())];
        std::vector<const InstructionTag*> leaves;
        for (const auto& f : cat.families)
            for (const auto& l : f.leaves)
                leaves.push_back(&l);
        const auto& pick = *leaves[rng.below(leaves.size())];
        if (std::find(out.begin(), out.end(), pick) == out.end())
            out.push_back(pick);
    }
    return out;
}

SynthStats& SynthStats::operator+=(const SynthStats& o) {
    images += o.images;
    fallback_images += o.fallback_images;
    candidates_generated += o.candidates_generated;
    generation_errors += o.generation_errors;
    relevant += o.relevant;
    irrelevant += o.irrelevant;
    verdict_unparseable += o.verdict_unparseable;
    judge_errors += o.judge_errors;
    answered += o.answered;
    answer_errors += o.answer_errors;
    quality_passed += o.quality_passed;
    quality_below_threshold += o.quality_below_threshold;
    quality_unparseable += o.quality_unparseable;
    quality_errors += o.quality_errors;
    loss_errors += o.loss_errors;
    loss_dropped += o.loss_dropped;
    budget_dropped += o.budget_dropped;
    retained += o.retained;
    records += o.records;
    turns += o.turns;
    return *this;
}

json SynthStats::to_json() const {
    return json{{"images", images},
                {"fallback_images", fallback_images},
                {"candidates_generated", candidates_generated},
                {"generation_errors", generation_errors},
                {"relevant", relevant},
                {"irrelevant", irrelevant},
                {"verdict_unparseable", verdict_unparseable},
                {"judge_errors", judge_errors},
                {"answered", answered},
                {"answer_errors", answer_errors},
                {"quality_passed", quality_passed},
                {"quality_below_threshold", quality_below_threshold},
                {"quality_unparseable", quality_unparseable},
                {"quality_errors", quality_errors},
                {"loss_errors", loss_errors},
                {"loss_dropped", loss_dropped},
                {"budget_dropped", budget_dropped},
                {"retained", retained},
                {"records", records},
                {"turns", turns}};
}

SynthStats SynthStats::from_json(const json& j) {
    SynthStats s;
    const auto get = [&](const char* k) { return j.value(k, std::uint64_t{0}); };
    s.images = get("images");
    s.fallback_images = get("fallback_images");
    s.candidates_generated = get("candidates_generated");
    s.generation_errors = get("generation_errors");
    s.relevant = get("relevant");
    s.irrelevant = get("irrelevant");
    s.verdict_unparseable = get("verdict_unparseable");
    s.judge_errors = get("judge_errors");
    s.answered = get("answered");
    s.answer_errors = get("answer_errors");
    s.quality_passed = get("quality_passed");
    s.quality_below_threshold = get("quality_below_threshold");
    s.quality_unparseable = get("quality_unparseable");
    s.quality_errors = get("quality_errors");
    s.loss_errors = get("loss_errors");
    s.loss_dropped = get("loss_dropped");
    s.budget_dropped = get("budget_dropped");
    s.retained = get("retained");
    s.records = get("records");
    s.turns = get("turns");
    return s;
}

Synthesizer::Synthesizer(SynthContext ctx, const Taxonomy& taxonomy, const MappingTable& mapping,
                         const std::vector<SeedExample>& seed, SynthConfig config)
    : ctx_(std::move(ctx)), taxonomy_(taxonomy), mapping_(mapping), seed_(seed), config_(std::move(config)) {}

std::vector<InstructionTag> Synthesizer::plan_types(const SynthImage& image, bool* used_fallback) const {
    std::vector<InstructionTag> types;
    for (auto& s : select_instruction_types(image.image_tags, mapping_, config_.types_per_image, config_.aggregator))
        types.push_back(std::move(s.tag));
    if (used_fallback)
        *used_fallback = types.empty();
    if (types.empty()) {
        auto rng = Rng::derive(config_.seed, "fallback/" + image.image.image_id);
        types = fallback_types(taxonomy_, config_.types_per_image, rng);
    }
    return types;
}

std::vector<CandidateQuestion> Synthesizer::questions(const std::vector<SynthImage>& images, SynthStats& stats) const {
    std::vector<std::vector<CandidateQuestion>> per_image(images.size());
    std::vector<SynthStats> per_stats(images.size());
    parallel_for(images.size(), config_.workers, [&](std::size_t i) {
        auto& st = per_stats[i];
        ++st.images;
        bool fallback = false;
        const auto types = plan_types(images[i], &fallback);
        if (fallback)
            ++st.fallback_images;
        for (const auto& tag : types) {
            ++st.candidates_generated;
            const auto shot_seed = hash64(std::to_string(config_.seed) + "/fewshot/" + images[i].image.image_id + "/" + tag.path());
            const auto shots = pick_fewshot(seed_, tag, config_.fewshot, shot_seed);
            try {
                per_image[i].push_back(generate_question(ctx_, images[i].image, tag, shots));
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::config || e.kind() == ErrorKind::invalid_argument)
                    throw;
                ++st.generation_errors;
            }
        }
    });
    std::vector<CandidateQuestion> out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        stats += per_stats[i];
        for (auto& c : per_image[i])
            out.push_back(std::move(c));
    }
    return out;
}

std::vector<CandidateQuestion> Synthesizer::judge(std::vector<CandidateQuestion> candidates, SynthStats& stats) const {
    std::vector<SynthStats> per(candidates.size());
    parallel_for(candidates.size(), config_.workers, [&](std::size_t i) {
        bool parsed = false;
        try {
            candidates[i] = judge_relevance(ctx_, std::move(candidates[i]), &parsed);
            if (!parsed)
                ++per[i].verdict_unparseable;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::config || e.kind() == ErrorKind::invalid_argument)
                throw;
            candidates[i].relevance = Verdict::irrelevant;
            ++per[i].judge_errors;
        }
        if (candidates[i].relevance == Verdict::relevant)
            ++per[i].relevant;
        else
            ++per[i].irrelevant;
    });
    for (const auto& p : per)
        stats += p;
    return candidates;
}

std::vector<SynthQA> Synthesizer::answers(const std::vector<CandidateQuestion>& judged, SynthStats& stats) const {
    std::vector<const CandidateQuestion*> relevant;
    for (const auto& c : judged)
        if (c.relevance == Verdict::relevant)
            relevant.push_back(&c);
    std::vector<std::optional<SynthQA>> results(relevant.size());
    std::vector<SynthStats> per(relevant.size());
    parallel_for(relevant.size(), config_.workers, [&](std::size_t i) {
        const auto& c = *relevant[i];
        auto rng = Rng::derive(config_.seed, "style/" + c.image.image_id + "/" + c.instruction_tag.path() + "/" + c.question);
        const auto style = choose_style(config_.style_weights, rng);
        try {
            results[i] = generate_answer(ctx_, c, style);
            ++per[i].answered;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::config || e.kind() == ErrorKind::invalid_argument)
                throw;
            ++per[i].answer_errors;
        }
    });
    std::vector<SynthQA> out;
    for (std::size_t i = 0; i < results.size(); ++i) {
        stats += per[i];
        if (results[i])
            out.push_back(std::move(*results[i]));
    }
    return out;
}

std::vector<SynthQA> Synthesizer::score(std::vector<SynthQA> answered, SynthStats& stats) const {
    std::vector<SynthStats> per(answered.size());
    parallel_for(answered.size(), config_.workers, [&](std::size_t i) {
        auto& qa = answered[i];
        try {
            qa = score_quality(ctx_, std::move(qa));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::config || e.kind() == ErrorKind::invalid_argument)
                throw;
            qa.quality.reset();
            ++per[i].quality_errors;
            return;
        }
        if (!qa.quality) {
            ++per[i].quality_unparseable;
            return;
        }
        if (!passes_quality(qa, config_.quality_threshold)) {
            ++per[i].quality_below_threshold;
            return;
        }
        ++per[i].quality_passed;
        try {
            qa.loss = score_loss(ctx_.gateway, ctx_.scorer,
                                 LossQuery{load_payload(ctx_.images, qa.image), {Turn{qa.question, qa.answer}}});
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::config || e.kind() == ErrorKind::invalid_argument)
                throw;
            qa.loss.reset();
            ++per[i].loss_errors;
        }
    });
    for (const auto& p : per)
        stats += p;
    return answered;
}

std::vector<SynthQA> Synthesizer::filter(std::vector<SynthQA> scored, SynthStats& stats) const {
    std::vector<SynthQA> passing;
    LossTable losses;
    for (auto& qa : scored)
        if (passes_quality(qa, config_.quality_threshold) && qa.loss) {
            losses[qa.qa_id] = *qa.loss;
            passing.push_back(std::move(qa));
        }
    auto filtered = loss_percentile_filter(std::move(passing), losses, config_.loss_drop_fraction,
                                           [](const SynthQA& q) -> const std::string& { return q.qa_id; });
    stats.loss_dropped += filtered.stats.dropped;
    auto selected = config_.budget ? prioritized_select(filtered.kept, *config_.budget, config_.priority)
                                   : std::move(filtered.kept);
    stats.budget_dropped += filtered.stats.kept - selected.size();
    stats.retained += selected.size();
    return selected;
}

std::vector<InstructionRecord> Synthesizer::assemble(const std::vector<SynthQA>& retained, SynthStats& stats) const {
    auto records = assemble_multiturn(retained, config_.max_turns, config_.source_name);
    stats.records += records.size();
    for (const auto& r : records)
        stats.turns += r.turns.size();
    return records;
}

}  // namespace mmforge
