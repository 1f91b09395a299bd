// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/corpus.hpp"
#include "mmforge/error.hpp"
#include "mmforge/image.hpp"
#include "mmforge/jsonl.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mmforge {

/// Non-retryable HTTP failure; carries the status code.
class HttpStatusError : public Error {
public:
    HttpStatusError(int status, const std::string& what)
        : Error(ErrorKind::non_retryable_status, "HTTP " + std::to_string(status) + ": " + what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

struct RetryPolicy {
    int max_attempts = 4;
    double base_backoff_s = 0.5;
    double max_backoff_s = 30.0;
    /// Each delay is stretched by a factor drawn from [1, 1 + jitter).
    double jitter = 0.2;
};

struct EndpointConfig {
    std::string name;
    std::string base_url;
    std::string api_key;
    std::string model_name;
    int max_concurrent = 4;
    double timeout_s = 60.0;
    RetryPolicy retry;
    double temperature = 0.7;
    double top_p = 1.0;
    int max_tokens = 512;
    std::optional<std::int64_t> seed;

    /// Throws Error(config) if an invariant is violated.
    void check() const;
};

EndpointConfig endpoint_from_json(const std::string& name, const json& j);
json to_json(const EndpointConfig& e, bool include_secret = false);

/// Delay before attempt `failed_attempt + 1`, before jitter:
/// base * 2^(failed_attempt - 1), capped at max_backoff_s.
double backoff_delay_s(const RetryPolicy& policy, int failed_attempt) noexcept;

struct ImagePayload {
    ImageFormat format = ImageFormat::png;
    std::vector<std::uint8_t> bytes;

    std::string data_uri() const;
};

struct TextPart {
    std::string text;
};

struct ImagePart {
    std::string data_uri;
};

using ContentPart = std::variant<TextPart, ImagePart>;

enum class Role { system, user, assistant };

struct Message {
    Role role = Role::user;
    std::vector<ContentPart> content;
};

struct ChatRequest {
    std::vector<Message> messages;
    /// Sent as the X-MMForge-Task header; lets fixture servers route canned
    /// behaviour. Real servers ignore it.
    std::string task;
    std::optional<double> temperature;

    /// Throws Error(invalid_argument): at most one system message and only
    /// first; image parts only in user messages; at least one message.
    void check() const;
    json to_wire(const EndpointConfig& endpoint) const;
};

struct ChatResponse {
    std::string text;
    std::string finish_reason;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double latency_s = 0.0;
    int attempts = 0;
};

/// Counting semaphore sized at runtime.
class ConcurrencyLimiter {
public:
    explicit ConcurrencyLimiter(int limit);

    void acquire();
    void release();
    int in_flight() const;
    int peak() const;

private:
    int limit_;
    int in_flight_ = 0;
    int peak_ = 0;
    mutable std::mutex mu_;
    std::condition_variable cv_;
};

struct EndpointStats {
    std::uint64_t calls = 0;
    std::uint64_t attempts = 0;
    std::uint64_t retries = 0;
    std::uint64_t failures = 0;
    int peak_in_flight = 0;
};

/// Client for every external model service. Safe for concurrent use;
/// in-flight requests per endpoint never exceed its max_concurrent.
class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::duration<double>)>;

    explicit Gateway(std::vector<EndpointConfig> endpoints, std::uint64_t jitter_seed = 0);
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    bool has_endpoint(const std::string& name) const;
    const EndpointConfig& endpoint(const std::string& name) const;

    ChatResponse call(const std::string& endpoint, const ChatRequest& request);

    /// POST `body` to `<base_url><route>` with the retry contract of call().
    json post_json(const std::string& endpoint, const std::string& route, const json& body, const std::string& task,
                   int* attempts = nullptr);

    /// Replaces the real sleep between attempts (tests).
    void set_sleeper(Sleeper sleeper);

    EndpointStats stats(const std::string& endpoint) const;

private:
    struct Slot;

    Slot& slot(const std::string& name) const;
    double jittered(const RetryPolicy& p, int failed_attempt);

    std::map<std::string, std::unique_ptr<Slot>> slots_;
    Sleeper sleeper_;
    std::mutex rng_mu_;
    std::mt19937_64 rng_;
};

/// Versioned prompt with named `{placeholder}` slots.
///
/// File format: `key: value` header lines (name, version, optional system),
/// a line containing only `---`, then the body.
class PromptTemplate {
public:
    using Binding = std::variant<std::string, std::vector<ContentPart>>;

    static PromptTemplate parse(std::string_view text, std::string_view origin = "<memory>");
    static PromptTemplate load(const std::filesystem::path& path);

    const std::string& name() const noexcept { return name_; }
    const std::string& version() const noexcept { return version_; }
    const std::string& system() const noexcept { return system_; }
    const std::vector<std::string>& placeholders() const noexcept { return placeholders_; }

    /// Every body placeholder must be bound and every binding must name a
    /// body placeholder; otherwise Error(invalid_argument).
    std::vector<ContentPart> render(const std::map<std::string, Binding>& bindings) const;

    /// System message (if any) plus one user message with the rendered body.
    ChatRequest request(const std::map<std::string, Binding>& bindings) const;

private:
    std::string name_;
    std::string version_;
    std::string system_;
    std::string body_;
    std::vector<std::string> placeholders_;
};

class PromptLibrary {
public:
    static PromptLibrary load(const std::filesystem::path& dir);
    const PromptTemplate& get(const std::string& name) const;
    std::vector<std::string> names() const;

private:
    std::map<std::string, PromptTemplate> templates_;
};

struct ImageTag {
    std::string tag;
    double confidence = 1.0;

    bool operator==(const ImageTag&) const = default;
};

/// Splits on '|', ',', ';' and newlines; lowercases and trims each tag; an
/// optional ":0.87" or "(0.87)" suffix is read as confidence. Duplicates
/// collapse to one entry (highest confidence). Sorted by tag.
std::vector<ImageTag> parse_tag_list(std::string_view body);

std::vector<ImageTag> tag_image(Gateway& gateway, const std::string& endpoint, const PromptTemplate& prompt,
                                const ImagePayload& image);

/// First standalone integer in 1..10; Error(no_score) if none.
int parse_score_1_10(std::string_view text);

struct LossQuery {
    std::optional<ImagePayload> image;
    std::vector<Turn> turns;
};

/// Mean per-token NLL of the answers via `POST <base_url>/score`.
double score_loss(Gateway& gateway, const std::string& endpoint, const LossQuery& query);

}  // namespace mmforge
