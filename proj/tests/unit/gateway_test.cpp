// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/error.hpp"
#include "mmforge/fixture_server.hpp"
#include "mmforge/gateway.hpp"
#include "mmforge/pipeline.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <mutex>
#include <thread>

using namespace mmforge;

namespace {

EndpointConfig endpoint_for(const FixtureServer& server, int max_concurrent = 4, double timeout_s = 5.0) {
    EndpointConfig e;
    e.name = "vlm";
    e.base_url = server.base_url();
    e.model_name = "fixture";
    e.max_concurrent = max_concurrent;
    e.timeout_s = timeout_s;
    e.retry.max_attempts = 4;
    e.retry.base_backoff_s = 0.01;
    e.retry.max_backoff_s = 0.1;
    e.retry.jitter = 0.2;
    return e;
}

ChatRequest simple_request(const std::string& text = "hello") {
    ChatRequest r;
    r.task = "answer_short";
    r.messages = {Message{Role::user, {TextPart{text}}}};
    return r;
}

struct RecordingSleeper {
    std::mutex mu;
    std::vector<double> delays;
    Gateway::Sleeper fn() {
        return [this](std::chrono::duration<double> d) {
            std::lock_guard lock(mu);
            delays.push_back(d.count());
        };
    }
};

}  // namespace

TEST_CASE("429 then 200 succeeds after one retry with backoff") {
    FixtureServer server;
    server.start();
    Gateway gw({endpoint_for(server)}, 1);
    RecordingSleeper sleeper;
    gw.set_sleeper(sleeper.fn());
    server.push_fault("/chat/completions", Fault{429, 0});
    const auto res = gw.call("vlm", simple_request());
    CHECK(res.attempts == 2);
    CHECK(!res.text.empty());
    REQUIRE(sleeper.delays.size() == 1);
    CHECK(sleeper.delays[0] >= 0.01);
    CHECK(sleeper.delays[0] < 0.01 * 1.2 + 1e-12);
    const auto st = gw.stats("vlm");
    CHECK(st.calls == 1);
    CHECK(st.attempts == 2);
    CHECK(st.retries == 1);
    CHECK(st.failures == 0);
}

TEST_CASE("timeout then 200 succeeds") {
    FixtureServer server;
    server.start();
    Gateway gw({endpoint_for(server, 4, 0.3)}, 1);
    gw.set_sleeper([](auto) {});
    server.push_fault("/chat/completions", Fault{0, 1200});
    const auto res = gw.call("vlm", simple_request());
    CHECK(res.attempts == 2);
    CHECK(gw.stats("vlm").retries == 1);
}

TEST_CASE("hard 400 is not retried") {
    FixtureServer server;
    server.start();
    Gateway gw({endpoint_for(server)}, 1);
    RecordingSleeper sleeper;
    gw.set_sleeper(sleeper.fn());
    server.push_fault("/chat/completions", Fault{400, 0});
    try {
        gw.call("vlm", simple_request());
        FAIL("expected throw");
    } catch (const HttpStatusError& e) {
        CHECK(e.status() == 400);
        CHECK(e.kind() == ErrorKind::non_retryable_status);
    }
    CHECK(sleeper.delays.empty());
    CHECK(gw.stats("vlm").attempts == 1);
    CHECK(gw.stats("vlm").failures == 1);
}

TEST_CASE("persistent 5xx exhausts retries with growing delays") {
    FixtureServer server;
    server.start();
    Gateway gw({endpoint_for(server)}, 1);
    RecordingSleeper sleeper;
    gw.set_sleeper(sleeper.fn());
    for (int i = 0; i < 4; ++i)
        server.push_fault("/chat/completions", Fault{503, 0});
    try {
        gw.call("vlm", simple_request());
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::retries_exhausted);
    }
    REQUIRE(sleeper.delays.size() == 3);
    for (int i = 0; i < 3; ++i) {
        const double base = 0.01 * std::ldexp(1.0, i);
        CHECK(sleeper.delays[static_cast<std::size_t>(i)] >= base);
        CHECK(sleeper.delays[static_cast<std::size_t>(i)] < base * 1.2 + 1e-12);
    }
    CHECK(server.requests() == 4);
}

TEST_CASE("backoff schedule is capped") {
    RetryPolicy p;
    p.base_backoff_s = 1.0;
    p.max_backoff_s = 5.0;
    CHECK(backoff_delay_s(p, 1) == 1.0);
    CHECK(backoff_delay_s(p, 2) == 2.0);
    CHECK(backoff_delay_s(p, 3) == 4.0);
    CHECK(backoff_delay_s(p, 4) == 5.0);
    CHECK(backoff_delay_s(p, 40) == 5.0);
}

TEST_CASE("in-flight requests never exceed max_concurrent") {
    FixtureOptions opts;
    opts.latency_ms = 40;
    FixtureServer server(opts);
    server.start();
    Gateway gw({endpoint_for(server, 3)}, 1);
    std::vector<std::thread> threads;
    std::atomic<int> ok{0};
    for (int i = 0; i < 16; ++i)
        threads.emplace_back([&, i] {
            gw.call("vlm", simple_request("q" + std::to_string(i)));
            ++ok;
        });
    for (auto& t : threads)
        t.join();
    CHECK(ok == 16);
    CHECK(server.peak_in_flight() <= 3);
    CHECK(server.peak_in_flight() >= 2);
    CHECK(gw.stats("vlm").peak_in_flight <= 3);
}

TEST_CASE("concurrency limiter counts") {
    ConcurrencyLimiter lim(2);
    lim.acquire();
    lim.acquire();
    CHECK(lim.in_flight() == 2);
    std::atomic<bool> got{false};
    std::thread t([&] {
        lim.acquire();
        got = true;
        lim.release();
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    CHECK(!got);
    lim.release();
    t.join();
    CHECK(got);
    lim.release();
    CHECK(lim.in_flight() == 0);
    CHECK(lim.peak() == 2);
    CHECK_THROWS_AS(ConcurrencyLimiter(0), Error);
}

TEST_CASE("request shape validation") {
    ChatRequest empty;
    CHECK_THROWS_AS(empty.check(), Error);
    ChatRequest late_system;
    late_system.messages = {Message{Role::user, {TextPart{"a"}}}, Message{Role::system, {TextPart{"s"}}}};
    CHECK_THROWS_AS(late_system.check(), Error);
    ChatRequest image_in_assistant;
    image_in_assistant.messages = {Message{Role::user, {TextPart{"a"}}},
                                   Message{Role::assistant, {ImagePart{"data:image/png;base64,AA=="}}}};
    CHECK_THROWS_AS(image_in_assistant.check(), Error);
}

TEST_CASE("prompt templates bind strictly") {
    const auto t = PromptTemplate::parse("name: t\nversion: 1.0.0\nsystem: sys\n---\nQ: {question}\n{image_slot}\n");
    CHECK(t.name() == "t");
    CHECK(t.system() == "sys");
    const std::vector<ContentPart> img{ImagePart{"data:image/png;base64,AA=="}};
    const auto parts = t.render({{"question", std::string("why?")}, {"image_slot", img}});
    REQUIRE(!parts.empty());
    CHECK_THROWS_AS(t.render({{"question", std::string("why?")}}), Error);
    CHECK_THROWS_AS(t.render({{"question", std::string("x")}, {"image_slot", img}, {"extra", std::string("y")}}),
                    Error);
    const auto req = t.request({{"question", std::string("why?")}, {"image_slot", img}});
    REQUIRE(req.messages.size() == 2);
    CHECK(req.messages[0].role == Role::system);

    const auto lib = PromptLibrary::load(asset_dir() / "prompts");
    CHECK(lib.names().size() == 7);
    CHECK_THROWS_AS(lib.get("nope"), Error);
}

TEST_CASE("score and tag parsing") {
    CHECK(parse_score_1_10("Score: 8/10") == 8);
    CHECK(parse_score_1_10("10") == 10);
    CHECK(parse_score_1_10("I'd give it a 7.") == 7);
    CHECK_THROWS_AS(parse_score_1_10("excellent"), Error);
    CHECK_THROWS_AS(parse_score_1_10("42"), Error);

    const auto tags = parse_tag_list("Cat | dog:0.5 | cat (0.9)\nTree; ");
    REQUIRE(tags.size() == 3);
    CHECK(tags[0] == ImageTag{"cat", 1.0});
    CHECK(tags[1] == ImageTag{"dog", 0.5});
    CHECK(tags[2].tag == "tree");
    CHECK(parse_tag_list("cat | dog").size() == 2);
}

TEST_CASE("loss scoring through the fixture") {
    FixtureServer server;
    server.start();
    Gateway gw({endpoint_for(server)}, 1);
    gw.set_sleeper([](auto) {});
    LossQuery q;
    q.turns = {Turn{"q", "a"}};
    const double loss = score_loss(gw, "vlm", q);
    CHECK(loss >= 0.5);
    CHECK(loss < 3.0);
    CHECK(score_loss(gw, "vlm", q) == loss);

    server.set_loss_override("\"NaN\"");
    try {
        score_loss(gw, "vlm", q);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::non_finite);
    }
    server.set_loss_override("null");
    CHECK_THROWS_AS(score_loss(gw, "vlm", q), Error);
    server.set_loss_override(std::nullopt);
    CHECK_THROWS_AS(score_loss(gw, "vlm", LossQuery{}), Error);
}

TEST_CASE("fixture replies are deterministic") {
    FixtureOptions a, b;
    b.seed = 99;
    const auto r1 = FixtureServer::reply_for(a, "quality_score", "x");
    CHECK(r1 == FixtureServer::reply_for(a, "quality_score", "x"));
    int differ = 0;
    for (int i = 0; i < 20; ++i)
        differ += FixtureServer::reply_for(a, "image_tagging", "data:" + std::to_string(i)) !=
                  FixtureServer::reply_for(b, "image_tagging", "data:" + std::to_string(i));
    CHECK(differ > 0);
}

TEST_CASE("endpoint config validation") {
    EndpointConfig e;
    e.name = "x";
    e.base_url = "http://127.0.0.1:1/v1";
    e.max_concurrent = 0;
    CHECK_THROWS_AS(e.check(), Error);
    e.max_concurrent = 1;
    e.timeout_s = 0;
    CHECK_THROWS_AS(e.check(), Error);
    e.timeout_s = 1;
    e.api_key = "secret";
    CHECK_NOTHROW(e.check());
    CHECK(to_json(e).dump().find("secret") == std::string::npos);
}
