// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace mmforge {

/// One scripted deviation from the canned behaviour, consumed in order by
/// requests to a route.
struct Fault {
    /// HTTP status to return instead of the canned reply (0: reply normally).
    int status = 0;
    /// Delay before replying, e.g. longer than the client timeout.
    int delay_ms = 0;
};

struct FixtureOptions {
    std::uint64_t seed = 0;
    /// Probabilities of the canned failure modes, decided by request hash.
    double empty_question_rate = 0.03;
    double two_line_question_rate = 0.10;
    double irrelevant_rate = 0.12;
    double unparseable_verdict_rate = 0.04;
    double empty_answer_rate = 0.02;
    double unparseable_score_rate = 0.03;
    /// Fixed server-side latency per request.
    int latency_ms = 0;
    int threads = 32;
};

/// Deterministic OpenAI-compatible mock. Every reply is a pure function of
/// the seed, the X-MMForge-Task header and the request content.
///
/// Routes: POST /v1/chat/completions, POST /v1/score.
class FixtureServer {
public:
    explicit FixtureServer(FixtureOptions options = {});
    ~FixtureServer();
    FixtureServer(const FixtureServer&) = delete;
    FixtureServer& operator=(const FixtureServer&) = delete;

    /// Binds to 127.0.0.1 (port 0 picks a free port) and serves on a thread.
    void start(int port = 0);
    void stop();
    int port() const noexcept { return port_; }
    std::string base_url() const;

    /// route is "/chat/completions" or "/score".
    void push_fault(const std::string& route, Fault fault);
    /// Forces /score to answer {"loss": <text>} verbatim, e.g. "NaN".
    void set_loss_override(std::optional<std::string> raw);

    std::uint64_t requests() const noexcept { return requests_.load(); }
    int peak_in_flight() const noexcept { return peak_in_flight_.load(); }
    int in_flight() const noexcept { return in_flight_.load(); }
    void reset_counters();

    /// Canned reply text for a task, exposed for tests.
    static std::string reply_for(const FixtureOptions& options, const std::string& task, const std::string& content);
    static double loss_for(const FixtureOptions& options, const std::string& content);

private:
    std::optional<Fault> next_fault(const std::string& route);

    FixtureOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mu_;
    std::map<std::string, std::deque<Fault>> faults_;
    std::optional<std::string> loss_override_;
    std::atomic<std::uint64_t> requests_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_in_flight_{0};
};

}  // namespace mmforge
