// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/fixture_server.hpp"

#include "mmforge/digest.hpp"
#include "mmforge/error.hpp"
#include "mmforge/jsonl.hpp"
#include "mmforge/rng.hpp"

#include <httplib.h>

#include <array>
#include <chrono>
#include <set>

namespace mmforge {

namespace {

constexpr std::array<std::string_view, 24> kTagVocabulary = {
    "person", "dog",   "cat",    "car",      "tree",     "building", "sky",      "table",
    "chart",  "text",  "food",   "street",   "water",    "grass",    "book",     "computer",
    "phone",  "bicycle", "flower", "mountain", "document", "screen",   "ball",     "bird",
};

constexpr std::array<std::string_view, 8> kQuestionStems = {
    "What is the main subject of this image",
    "How many distinct objects are visible in the picture",
    "What color is the most prominent object",
    "Where is the largest object located in the image",
    "What is likely to happen next in this scene",
    "How are the two most prominent objects related",
    "What text or symbols can be read in the image",
    "What does the overall setting suggest about the time of day",
};

constexpr std::array<std::string_view, 10> kShortAnswers = {
    "Sunny.", "Two.", "Red.", "On the left.", "A dog.", "Outdoors.", "A bar chart.", "Morning.", "Yes.", "A table.",
};

struct InFlight {
    std::atomic<int>& current;
    explicit InFlight(std::atomic<int>& c, std::atomic<int>& peak) : current(c) {
        const int now = ++current;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
    }
    ~InFlight() { --current; }
};

std::string flatten_content(const json& body) {
    std::string out;
    for (const auto& m : body.at("messages")) {
        out += m.value("role", "");
        out += '\x1e';
        const auto& c = m.at("content");
        if (c.is_string()) {
            out += c.get<std::string>();
        } else {
            for (const auto& p : c) {
                if (p.value("type", "") == "image_url")
                    out += p.at("image_url").at("url").get<std::string>();
                else
                    out += p.value("text", "");
                out += '\x1f';
            }
        }
        out += '\x1e';
    }
    return out;
}

std::string field_after(const std::string& content, std::string_view label) {
    const auto pos = content.find(label);
    if (pos == std::string::npos)
        return {};
    const auto start = pos + label.size();
    const auto end = content.find_first_of("\n\x1f\x1e", start);
    return content.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

std::string first_image(const std::string& content) {
    const auto pos = content.rfind("data:image/");
    if (pos == std::string::npos)
        return {};
    const auto end = content.find_first_of("\x1f\x1e", pos);
    return content.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

}  // namespace

FixtureServer::FixtureServer(FixtureOptions options) : options_(options) {}

FixtureServer::~FixtureServer() { stop(); }

std::string FixtureServer::reply_for(const FixtureOptions& o, const std::string& task, const std::string& content) {
    auto rng = Rng::derive(o.seed, task + '\x1f' + content);
    const double u = rng.unit();
    if (task == "image_tagging") {
        // Tags depend on the image only, so a re-tagged image is stable.
        auto img_rng = Rng::derive(o.seed, "tags\x1f" + first_image(content));
        const auto n = 3 + img_rng.below(4);
        std::set<std::string_view> picked;
        while (picked.size() < n)
            picked.insert(kTagVocabulary[img_rng.below(kTagVocabulary.size())]);
        std::string out;
        for (const auto t : picked) {
            if (!out.empty())
                out += " | ";
            out += t;
        }
        return out;
    }
    if (task == "question_generation") {
        if (u < o.empty_question_rate)
            return "";
        const auto type = field_after(content, "Instruction type: ");
        const auto leaf_end = type.find(" (");
        auto leaf = type.substr(0, leaf_end);
        if (const auto slash = leaf.find(" / "); slash != std::string::npos)
            leaf = leaf.substr(slash + 3);
        std::string q = std::string(kQuestionStems[rng.below(kQuestionStems.size())]);
        if (!leaf.empty())
            q += " (" + leaf + ")";
        q += "?";
        if (u < o.empty_question_rate + o.two_line_question_rate)
            q += "\nThis question focuses on visible content only.";
        return q;
    }
    if (task == "relevance_judge") {
        if (u < o.unparseable_verdict_rate)
            return "maybe";
        if (u < o.unparseable_verdict_rate + o.irrelevant_rate)
            return "No.";
        return "Yes";
    }
    if (task == "answer_short" || task == "answer_brief_explain" || task == "answer_detailed_explain") {
        if (u < o.empty_answer_rate)
            return "";
        const auto core = std::string(kShortAnswers[rng.below(kShortAnswers.size())]);
        if (task == "answer_short")
            return core;
        if (task == "answer_brief_explain")
            return "The most visible evidence in the image points this way, so the answer is " + core;
        return "Looking at the image as a whole, the scene contains several distinct regions.\n\n"
               "The question concerns the most prominent of them; its position, colour and context "
               "are consistent with one reading only.\n\nTherefore, the answer is " +
               core;
    }
    if (task == "quality_score") {
        if (u < o.unparseable_score_rate)
            return "excellent";
        static constexpr std::array<std::pair<double, int>, 6> dist{
            {{0.05, 5}, {0.15, 6}, {0.30, 7}, {0.60, 8}, {0.85, 9}, {1.00, 10}}};
        const double v = rng.unit();
        for (const auto& [edge, score] : dist)
            if (v < edge)
                return "Score: " + std::to_string(score) + "/10";
        return "Score: 10/10";
    }
    return "OK";
}

double FixtureServer::loss_for(const FixtureOptions& o, const std::string& content) {
    return 0.5 + 2.5 * Rng::derive(o.seed, "loss\x1f" + content).unit();
}

std::optional<Fault> FixtureServer::next_fault(const std::string& route) {
    std::lock_guard lock(mu_);
    auto& q = faults_[route];
    if (q.empty())
        return std::nullopt;
    auto f = q.front();
    q.pop_front();
    return f;
}

void FixtureServer::push_fault(const std::string& route, Fault fault) {
    std::lock_guard lock(mu_);
    faults_[route].push_back(fault);
}

void FixtureServer::set_loss_override(std::optional<std::string> raw) {
    std::lock_guard lock(mu_);
    loss_override_ = std::move(raw);
}

void FixtureServer::reset_counters() {
    requests_ = 0;
    peak_in_flight_ = in_flight_.load();
}

std::string FixtureServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

void FixtureServer::start(int port) {
    if (server_)
        return;
    server_ = std::make_unique<httplib::Server>();
    const int threads = options_.threads;
    server_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };

    const auto common = [this](const std::string& route, const httplib::Request& req, httplib::Response& res,
                               auto&& respond) {
        ++requests_;
        InFlight guard(in_flight_, peak_in_flight_);
        if (options_.latency_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(options_.latency_ms));
        if (const auto fault = next_fault(route)) {
            if (fault->delay_ms > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(fault->delay_ms));
            if (fault->status != 0) {
                res.status = fault->status;
                res.set_content(json{{"error", {{"message", "injected fault"}}}}.dump(), "application/json");
                return;
            }
        }
        json body;
        std::string content;
        try {
            body = json::parse(req.body);
            content = flatten_content(body);
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
            return;
        }
        respond(body, content, res);
    };

    server_->Post("/v1/chat/completions", [this, common](const httplib::Request& req, httplib::Response& res) {
        common("/chat/completions", req, res, [&](const json& body, const std::string& content, httplib::Response& r) {
            const auto task = req.get_header_value("X-MMForge-Task");
            const auto text = reply_for(options_, task, content);
            const auto prompt_tokens = static_cast<std::int64_t>(content.size() / 4);
            const auto completion_tokens = static_cast<std::int64_t>(text.size() / 4);
            json out{{"id", "fixture-" + sha256_hex(task + content).substr(0, 16)},
                     {"object", "chat.completion"},
                     {"model", body.value("model", "")},
                     {"choices", json::array({json{{"index", 0},
                                                   {"message", {{"role", "assistant"}, {"content", text}}},
                                                   {"finish_reason", "stop"}}})},
                     {"usage",
                      {{"prompt_tokens", prompt_tokens},
                       {"completion_tokens", completion_tokens},
                       {"total_tokens", prompt_tokens + completion_tokens}}}};
            r.set_content(out.dump(), "application/json");
        });
    });
    server_->Post("/v1/score", [this, common](const httplib::Request& req, httplib::Response& res) {
        common("/score", req, res, [&](const json&, const std::string& content, httplib::Response& r) {
            std::optional<std::string> raw;
            {
                std::lock_guard lock(mu_);
                raw = loss_override_;
            }
            if (raw)
                r.set_content("{\"loss\": " + *raw + "}", "application/json");
            else
                r.set_content(json{{"loss", loss_for(options_, content)}}.dump(), "application/json");
        });
    });

    port_ = port == 0 ? server_->bind_to_any_port("127.0.0.1") : (server_->bind_to_port("127.0.0.1", port) ? port : -1);
    if (port_ <= 0)
        throw Error(ErrorKind::config, "fixture server cannot bind port " + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void FixtureServer::stop() {
    if (!server_)
        return;
    server_->stop();
    if (thread_.joinable())
        thread_.join();
    server_.reset();
}

}  // namespace mmforge
