// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/gateway.hpp"

#include "mmforge/digest.hpp"
#include "mmforge/error.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <regex>
#include <sstream>
#include <thread>

namespace mmforge {

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing '/'
};

ParsedUrl parse_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorKind::config, "base_url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    out.origin = url.substr(0, path_start);
    if (path_start != std::string::npos)
        out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/')
        out.prefix.pop_back();
    return out;
}

const char* role_name(Role r) {
    switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

json content_to_wire(const std::vector<ContentPart>& parts) {
    json out = json::array();
    for (const auto& p : parts) {
        if (const auto* t = std::get_if<TextPart>(&p))
            out.push_back(json{{"type", "text"}, {"text", t->text}});
        else
            out.push_back(json{{"type", "image_url"}, {"image_url", {{"url", std::get<ImagePart>(p).data_uri}}}});
    }
    return out;
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

void EndpointConfig::check() const {
    if (base_url.empty())
        throw Error(ErrorKind::config, "endpoint '" + name + "': base_url is empty");
    parse_base_url(base_url);
    if (max_concurrent < 1)
        throw Error(ErrorKind::config, "endpoint '" + name + "': max_concurrent must be >= 1");
    if (!(timeout_s > 0.0))
        throw Error(ErrorKind::config, "endpoint '" + name + "': timeout must be > 0");
    if (retry.max_attempts < 1)
        throw Error(ErrorKind::config, "endpoint '" + name + "': retry.max_attempts must be >= 1");
    if (retry.base_backoff_s < 0.0 || retry.jitter < 0.0)
        throw Error(ErrorKind::config, "endpoint '" + name + "': negative backoff or jitter");
}

EndpointConfig endpoint_from_json(const std::string& name, const json& j) {
    EndpointConfig e;
    e.name = name;
    try {
        e.base_url = j.value("base_url", std::string());
        e.api_key = j.value("api_key", std::string());
        e.model_name = j.value("model", std::string());
        e.max_concurrent = j.value("max_concurrent", e.max_concurrent);
        e.timeout_s = j.value("timeout_s", e.timeout_s);
        e.temperature = j.value("temperature", e.temperature);
        e.top_p = j.value("top_p", e.top_p);
        e.max_tokens = j.value("max_tokens", e.max_tokens);
        if (j.contains("seed") && !j.at("seed").is_null())
            e.seed = j.at("seed").get<std::int64_t>();
        if (j.contains("retry")) {
            const auto& r = j.at("retry");
            e.retry.max_attempts = r.value("max_attempts", e.retry.max_attempts);
            e.retry.base_backoff_s = r.value("base_backoff_s", e.retry.base_backoff_s);
            e.retry.max_backoff_s = r.value("max_backoff_s", e.retry.max_backoff_s);
            e.retry.jitter = r.value("jitter", e.retry.jitter);
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::config, "endpoint '" + name + "': " + ex.what());
    }
    return e;
}

json to_json(const EndpointConfig& e, bool include_secret) {
    json j{{"base_url", e.base_url},
           {"model", e.model_name},
           {"max_concurrent", e.max_concurrent},
           {"timeout_s", e.timeout_s},
           {"temperature", e.temperature},
           {"top_p", e.top_p},
           {"max_tokens", e.max_tokens},
           {"seed", e.seed ? json(*e.seed) : json(nullptr)},
           {"retry",
            {{"max_attempts", e.retry.max_attempts},
             {"base_backoff_s", e.retry.base_backoff_s},
             {"max_backoff_s", e.retry.max_backoff_s},
             {"jitter", e.retry.jitter}}}};
    if (include_secret)
        j["api_key"] = e.api_key;
    return j;
}

double backoff_delay_s(const RetryPolicy& policy, int failed_attempt) noexcept {
    const double d = policy.base_backoff_s * std::ldexp(1.0, std::max(0, failed_attempt - 1));
    return std::min(d, policy.max_backoff_s);
}

std::string ImagePayload::data_uri() const {
    return "data:" + mime_type(format) + ";base64," + base64_encode(bytes);
}

void ChatRequest::check() const {
    if (messages.empty())
        throw Error(ErrorKind::invalid_argument, "chat request without messages");
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const auto& m = messages[i];
        if (m.role == Role::system && i != 0)
            throw Error(ErrorKind::invalid_argument, "system message must come first");
        if (m.role != Role::user)
            for (const auto& p : m.content)
                if (std::holds_alternative<ImagePart>(p))
                    throw Error(ErrorKind::invalid_argument, "image parts are only allowed in user messages");
    }
}

json ChatRequest::to_wire(const EndpointConfig& endpoint) const {
    json msgs = json::array();
    for (const auto& m : messages)
        msgs.push_back(json{{"role", role_name(m.role)}, {"content", content_to_wire(m.content)}});
    json body{{"model", endpoint.model_name},
              {"messages", std::move(msgs)},
              {"temperature", temperature.value_or(endpoint.temperature)},
              {"top_p", endpoint.top_p},
              {"max_tokens", endpoint.max_tokens}};
    if (endpoint.seed)
        body["seed"] = *endpoint.seed;
    return body;
}

ConcurrencyLimiter::ConcurrencyLimiter(int limit) : limit_(limit) {
    if (limit < 1)
        throw Error(ErrorKind::invalid_argument, "concurrency limit must be >= 1");
}

void ConcurrencyLimiter::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
}

void ConcurrencyLimiter::release() {
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
}

int ConcurrencyLimiter::in_flight() const {
    std::lock_guard lock(mu_);
    return in_flight_;
}

int ConcurrencyLimiter::peak() const {
    std::lock_guard lock(mu_);
    return peak_;
}

struct Gateway::Slot {
    explicit Slot(EndpointConfig c) : config(std::move(c)), url(parse_base_url(config.base_url)), limiter(config.max_concurrent) {}

    EndpointConfig config;
    ParsedUrl url;
    ConcurrencyLimiter limiter;
    std::atomic<std::uint64_t> calls{0};
    std::atomic<std::uint64_t> attempts{0};
    std::atomic<std::uint64_t> retries{0};
    std::atomic<std::uint64_t> failures{0};
};

Gateway::Gateway(std::vector<EndpointConfig> endpoints, std::uint64_t jitter_seed)
    : sleeper_([](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); }), rng_(jitter_seed) {
    for (auto& e : endpoints) {
        e.check();
        auto name = e.name;
        if (!slots_.emplace(name, std::make_unique<Slot>(std::move(e))).second)
            throw Error(ErrorKind::config, "duplicate endpoint '" + name + "'");
    }
}

Gateway::~Gateway() = default;

bool Gateway::has_endpoint(const std::string& name) const { return slots_.count(name) > 0; }

Gateway::Slot& Gateway::slot(const std::string& name) const {
    const auto it = slots_.find(name);
    if (it == slots_.end())
        throw Error(ErrorKind::config, "unknown endpoint '" + name + "'");
    return *it->second;
}

const EndpointConfig& Gateway::endpoint(const std::string& name) const { return slot(name).config; }

void Gateway::set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

EndpointStats Gateway::stats(const std::string& name) const {
    const auto& s = slot(name);
    return EndpointStats{s.calls.load(), s.attempts.load(), s.retries.load(), s.failures.load(), s.limiter.peak()};
}

double Gateway::jittered(const RetryPolicy& p, int failed_attempt) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double factor = 1.0;
    {
        std::lock_guard lock(rng_mu_);
        factor += p.jitter * u(rng_);
    }
    return backoff_delay_s(p, failed_attempt) * factor;
}

json Gateway::post_json(const std::string& name, const std::string& route, const json& body, const std::string& task,
                        int* attempts_out) {
    auto& s = slot(name);
    const auto& cfg = s.config;
    ++s.calls;
    const auto payload = body.dump();
    const auto path = s.url.prefix + route;
    httplib::Headers headers;
    if (!cfg.api_key.empty())
        headers.emplace("Authorization", "Bearer " + cfg.api_key);
    if (!task.empty())
        headers.emplace("X-MMForge-Task", task);

    std::string last_error;
    for (int attempt = 1; attempt <= cfg.retry.max_attempts; ++attempt) {
        ++s.attempts;
        if (attempts_out)
            *attempts_out = attempt;
        int status = 0;
        std::string response_body;
        {
            s.limiter.acquire();
            struct Release {
                ConcurrencyLimiter& l;
                ~Release() { l.release(); }
            } release{s.limiter};
            httplib::Client cli(s.url.origin);
            const auto secs = std::chrono::duration<double>(cfg.timeout_s);
            cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
            cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
            cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
            cli.set_keep_alive(false);
            auto res = cli.Post(path, headers, payload, "application/json");
            if (res) {
                status = res->status;
                response_body = std::move(res->body);
            } else {
                last_error = httplib::to_string(res.error());
            }
        }
        if (status >= 200 && status < 300) {
            try {
                return json::parse(response_body);
            } catch (const json::exception& e) {
                ++s.failures;
                throw Error(ErrorKind::malformed_response, name + ": " + e.what());
            }
        }
        if (status != 0 && !retryable_status(status)) {
            ++s.failures;
            throw HttpStatusError(status, name + route + ": " + response_body.substr(0, 200));
        }
        if (status != 0)
            last_error = "HTTP " + std::to_string(status);
        if (attempt < cfg.retry.max_attempts) {
            ++s.retries;
            sleeper_(std::chrono::duration<double>(jittered(cfg.retry, attempt)));
        }
    }
    ++s.failures;
    throw Error(ErrorKind::retries_exhausted,
                name + route + " after " + std::to_string(cfg.retry.max_attempts) + " attempts: " + last_error);
}

ChatResponse Gateway::call(const std::string& name, const ChatRequest& request) {
    request.check();
    const auto& cfg = endpoint(name);
    const auto started = std::chrono::steady_clock::now();
    ChatResponse out;
    const auto body = post_json(name, "/chat/completions", request.to_wire(cfg), request.task, &out.attempts);
    out.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    try {
        const auto& choice = body.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        if (content.is_string()) {
            out.text = content.get<std::string>();
        } else if (content.is_array()) {
            for (const auto& part : content)
                if (part.value("type", "") == "text")
                    out.text += part.at("text").get<std::string>();
        } else if (!content.is_null()) {
            throw Error(ErrorKind::malformed_response, name + ": content is neither string nor array");
        }
        if (const auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string())
            out.finish_reason = fr->get<std::string>();
        if (const auto usage = body.find("usage"); usage != body.end() && usage->is_object()) {
            out.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
            out.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed_response, name + ": " + e.what());
    }
    return out;
}

PromptTemplate PromptTemplate::parse(std::string_view text, std::string_view origin) {
    PromptTemplate t;
    const auto sep = text.find("\n---\n");
    if (sep == std::string_view::npos)
        throw Error(ErrorKind::malformed, std::string(origin) + ": missing '---' separator");
    std::istringstream header{std::string(text.substr(0, sep))};
    std::string line;
    while (std::getline(header, line)) {
        if (line.empty() || line.front() == '#')
            continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw Error(ErrorKind::malformed, std::string(origin) + ": bad header line '" + line + "'");
        const auto key = trim(line.substr(0, colon));
        const auto value = trim(line.substr(colon + 1));
        if (key == "name")
            t.name_ = value;
        else if (key == "version")
            t.version_ = value;
        else if (key == "system")
            t.system_ = value;
        else
            throw Error(ErrorKind::malformed, std::string(origin) + ": unknown header '" + key + "'");
    }
    if (t.name_.empty() || t.version_.empty())
        throw Error(ErrorKind::malformed, std::string(origin) + ": name and version are required");
    static const std::regex semver(R"(\d+\.\d+\.\d+)");
    if (!std::regex_match(t.version_, semver))
        throw Error(ErrorKind::malformed, std::string(origin) + ": version must be MAJOR.MINOR.PATCH");
    t.body_ = std::string(text.substr(sep + 5));
    while (!t.body_.empty() && t.body_.back() == '\n')
        t.body_.pop_back();
    static const std::regex slot(R"(\{([a-z_]+)\})");
    for (std::sregex_iterator it(t.body_.begin(), t.body_.end(), slot), end; it != end; ++it) {
        const auto name = (*it)[1].str();
        if (std::find(t.placeholders_.begin(), t.placeholders_.end(), name) == t.placeholders_.end())
            t.placeholders_.push_back(name);
    }
    return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    return parse(read_text(path), path.string());
}

std::vector<ContentPart> PromptTemplate::render(const std::map<std::string, Binding>& bindings) const {
    for (const auto& [key, value] : bindings)
        if (std::find(placeholders_.begin(), placeholders_.end(), key) == placeholders_.end())
            throw Error(ErrorKind::invalid_argument, "template '" + name_ + "' has no placeholder {" + key + "}");
    for (const auto& p : placeholders_)
        if (!bindings.count(p))
            throw Error(ErrorKind::invalid_argument, "template '" + name_ + "': placeholder {" + p + "} is unbound");

    std::vector<ContentPart> parts;
    std::string text;
    const auto flush = [&] {
        if (!text.empty())
            parts.emplace_back(TextPart{std::move(text)});
        text.clear();
    };
    std::size_t pos = 0;
    while (pos < body_.size()) {
        const auto open = body_.find('{', pos);
        const auto close = open == std::string::npos ? open : body_.find('}', open);
        const auto key = close == std::string::npos ? std::string() : body_.substr(open + 1, close - open - 1);
        const auto it = key.empty() ? bindings.end() : bindings.find(key);
        if (it == bindings.end()) {
            const auto end = open == std::string::npos ? body_.size() : open + 1;
            text.append(body_, pos, end - pos);
            pos = end;
            continue;
        }
        text.append(body_, pos, open - pos);
        if (const auto* s = std::get_if<std::string>(&it->second)) {
            text += *s;
        } else {
            for (const auto& part : std::get<std::vector<ContentPart>>(it->second)) {
                if (const auto* tp = std::get_if<TextPart>(&part)) {
                    text += tp->text;
                } else {
                    flush();
                    parts.push_back(part);
                }
            }
        }
        pos = close + 1;
    }
    flush();
    return parts;
}

ChatRequest PromptTemplate::request(const std::map<std::string, Binding>& bindings) const {
    ChatRequest req;
    req.task = name_;
    if (!system_.empty())
        req.messages.push_back(Message{Role::system, {TextPart{system_}}});
    req.messages.push_back(Message{Role::user, render(bindings)});
    return req;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
    PromptLibrary lib;
    if (!std::filesystem::is_directory(dir))
        throw Error(ErrorKind::config, "prompt directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".prompt")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto t = PromptTemplate::load(f);
        auto name = t.name();
        if (!lib.templates_.emplace(name, std::move(t)).second)
            throw Error(ErrorKind::duplicate, "prompt '" + name + "' defined twice");
    }
    return lib;
}

const PromptTemplate& PromptLibrary::get(const std::string& name) const {
    const auto it = templates_.find(name);
    if (it == templates_.end())
        throw Error(ErrorKind::config, "missing prompt template '" + name + "'");
    return it->second;
}

std::vector<std::string> PromptLibrary::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : templates_)
        out.push_back(k);
    return out;
}

std::vector<ImageTag> parse_tag_list(std::string_view body) {
    std::map<std::string, double> tags;
    std::size_t pos = 0;
    while (pos <= body.size()) {
        auto end = body.find_first_of("|,;\n", pos);
        if (end == std::string_view::npos)
            end = body.size();
        auto token = trim(body.substr(pos, end - pos));
        pos = end + 1;
        if (token.empty())
            continue;
        double confidence = 1.0;
        std::optional<std::string> conf_text;
        if (token.back() == ')') {
            const auto open = token.rfind('(');
            if (open == std::string::npos)
                throw Error(ErrorKind::malformed_response, "unbalanced ')' in tag '" + token + "'");
            conf_text = trim(std::string_view(token).substr(open + 1, token.size() - open - 2));
            token = token.substr(0, open);
        } else if (const auto colon = token.rfind(':'); colon != std::string::npos) {
            conf_text = trim(std::string_view(token).substr(colon + 1));
            token = token.substr(0, colon);
        }
        if (conf_text) {
            const auto& c = *conf_text;
            const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), confidence);
            if (c.empty() || ec != std::errc() || ptr != c.data() + c.size() ||
                !(confidence >= 0.0 && confidence <= 1.0))
                throw Error(ErrorKind::malformed_response, "bad confidence '" + c + "'");
        }
        token = lowercase(trim(token));
        if (token.empty())
            throw Error(ErrorKind::malformed_response, "confidence without tag");
        auto [it, inserted] = tags.emplace(token, confidence);
        if (!inserted)
            it->second = std::max(it->second, confidence);
        if (end == body.size())
            break;
    }
    std::vector<ImageTag> out;
    for (const auto& [t, c] : tags)
        out.push_back(ImageTag{t, c});
    return out;
}

std::vector<ImageTag> tag_image(Gateway& gateway, const std::string& endpoint, const PromptTemplate& prompt,
                                const ImagePayload& image) {
    auto req = prompt.request({{"image_slot", std::vector<ContentPart>{ImagePart{image.data_uri()}}}});
    req.temperature = 0.0;
    return parse_tag_list(gateway.call(endpoint, req).text);
}

int parse_score_1_10(std::string_view text) {
    const auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    const auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
    std::size_t i = 0;
    while (i < text.size()) {
        if (!is_digit(text[i])) {
            ++i;
            continue;
        }
        const auto start = i;
        while (i < text.size() && is_digit(text[i]))
            ++i;
        const auto end = i;
        const bool word_before = start > 0 && is_word(text[start - 1]);
        const bool negative = start > 0 && text[start - 1] == '-';
        const bool decimal_before = start > 1 && text[start - 1] == '.' && is_digit(text[start - 2]);
        const bool word_after = end < text.size() && is_word(text[end]);
        const bool decimal_after = end + 1 < text.size() && text[end] == '.' && is_digit(text[end + 1]);
        if (word_before || negative || decimal_before || word_after || decimal_after)
            continue;
        int value = 0;
        const auto digits = text.substr(start, end - start);
        if (digits.size() > 3)
            continue;
        std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (value >= 1 && value <= 10)
            return value;
    }
    throw Error(ErrorKind::no_score, "no integer in 1..10 in '" + std::string(text.substr(0, 80)) + "'");
}

double score_loss(Gateway& gateway, const std::string& endpoint, const LossQuery& query) {
    if (query.turns.empty())
        throw Error(ErrorKind::invalid_argument, "loss query without turns");
    ChatRequest req;
    req.task = "loss_score";
    for (std::size_t i = 0; i < query.turns.size(); ++i) {
        Message user{Role::user, {}};
        if (i == 0 && query.image)
            user.content.emplace_back(ImagePart{query.image->data_uri()});
        user.content.emplace_back(TextPart{query.turns[i].question});
        req.messages.push_back(std::move(user));
        req.messages.push_back(Message{Role::assistant, {TextPart{query.turns[i].answer}}});
    }
    req.check();
    auto body = req.to_wire(gateway.endpoint(endpoint));
    body["temperature"] = 0.0;
    json res;
    try {
        res = gateway.post_json(endpoint, "/score", body, req.task);
    } catch (const HttpStatusError& e) {
        if (e.status() == 404 || e.status() == 405 || e.status() == 501)
            throw Error(ErrorKind::unsupported, "endpoint '" + endpoint + "' has no /score route");
        throw;
    }
    const auto it = res.find("loss");
    if (it == res.end())
        throw Error(ErrorKind::malformed_response, "score response without 'loss'");
    double loss = 0.0;
    if (it->is_number()) {
        loss = it->get<double>();
    } else if (it->is_string()) {
        const auto s = it->get<std::string>();
        char* endp = nullptr;
        loss = std::strtod(s.c_str(), &endp);
        if (endp == s.c_str())
            throw Error(ErrorKind::malformed_response, "loss is not numeric: " + s);
    } else if (it->is_null()) {
        throw Error(ErrorKind::non_finite, "loss is null");
    } else {
        throw Error(ErrorKind::malformed_response, "loss is not numeric");
    }
    if (!std::isfinite(loss))
        throw Error(ErrorKind::non_finite, "loss " + std::to_string(loss));
    if (loss < 0.0)
        throw Error(ErrorKind::malformed_response, "negative loss");
    return loss;
}

}  // namespace mmforge
