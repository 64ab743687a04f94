#include "badge/llm_client.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "badge/util.hpp"

namespace badge {

using nlohmann::json;

namespace {

std::optional<ErrorCode> error_code_from_name(std::string_view name) {
    for (auto code : {ErrorCode::AuthError, ErrorCode::RateLimited, ErrorCode::Timeout,
                      ErrorCode::MalformedResponse, ErrorCode::TransportError, ErrorCode::InvalidRequest}) {
        if (to_string(code) == name) return code;
    }
    return std::nullopt;
}

MockOutcome outcome_from_json(const json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.contains("response")) return j.at("response").get<std::string>();
    if (j.contains("error")) {
        const auto name = j.at("error").get<std::string>();
        if (auto code = error_code_from_name(name)) return *code;
        throw Error(ErrorCode::ConfigError, "mock script: unknown error '" + name + "'");
    }
    throw Error(ErrorCode::ConfigError, "mock script: outcome needs 'response' or 'error'");
}

std::string replay_key(const std::string& model, const std::string& fp) { return model + "\n" + fp; }

json response_to_json(const ChatResponse& r) {
    return {{"content", r.content},
            {"model_id", r.model_id},
            {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}},
            {"latency_ms", r.latency_ms}};
}

ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    r.content = j.at("content").get<std::string>();
    r.model_id = j.value("model_id", "");
    if (j.contains("usage")) {
        r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    r.latency_ms = j.value("latency_ms", std::int64_t{0});
    return r;
}

}  // namespace

ChatRequest ChatRequest::user(std::string model_id, std::string prompt, double temperature, std::string tag) {
    ChatRequest req;
    req.model_id = std::move(model_id);
    req.messages.push_back({"user", std::move(prompt)});
    req.temperature = temperature;
    req.request_tag = std::move(tag);
    return req;
}

void validate_request(const ChatRequest& req) {
    if (req.model_id.empty()) throw Error(ErrorCode::InvalidRequest, "model_id is empty");
    if (req.messages.empty()) throw Error(ErrorCode::InvalidRequest, "messages is empty");
    const auto& first = req.messages.front().role;
    if (first != "system" && first != "user") {
        throw Error(ErrorCode::InvalidRequest, "first message must be system or user, got '" + first + "'");
    }
    for (const auto& m : req.messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant") {
            throw Error(ErrorCode::InvalidRequest, "unknown role '" + m.role + "'");
        }
    }
    if (!(req.temperature >= 0.0 && req.temperature <= 2.0)) {
        throw Error(ErrorCode::InvalidRequest, "temperature must lie in [0, 2]");
    }
    if (req.max_tokens <= 0) throw Error(ErrorCode::InvalidRequest, "max_tokens must be positive");
}

void BackendConfig::validate() const {
    if (max_retries < 0 || max_retries > 8) throw Error(ErrorCode::ConfigError, "max_retries must be in [0, 8]");
    if (!(timeout_s > 0)) throw Error(ErrorCode::ConfigError, "timeout_s must be positive");
    if (backoff_base_ms <= 0) throw Error(ErrorCode::ConfigError, "backoff_base_ms must be positive");
    if (api_key_env.empty()) throw Error(ErrorCode::ConfigError, "api_key_env is empty");
}

bool is_retryable(ErrorCode code) noexcept {
    return code == ErrorCode::RateLimited || code == ErrorCode::Timeout || code == ErrorCode::TransportError;
}

std::string fingerprint(const ChatRequest& req) {
    if (req.messages.size() == 1 && req.messages.front().role == "user") {
        return fingerprint(req.messages.front().content);
    }
    std::string canon;
    for (const auto& m : req.messages) {
        canon += m.role;
        canon += '\x1f';
        canon += m.content;
        canon += '\x1e';
    }
    return sha256_hex(canon);
}

std::string fingerprint(std::string_view prompt) { return sha256_hex(prompt); }

// ---------------------------------------------------------------------------
// HTTP

HttpBackend::HttpBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.endpoint_url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::ConfigError, "endpoint_url needs a scheme: " + cfg_.endpoint_url);
    }
    const auto path_start = cfg_.endpoint_url.find('/', scheme_end + 3);
    base_url_ = cfg_.endpoint_url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.endpoint_url.substr(path_start);
}

json HttpBackend::request_body(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", req.model_id},
            {"messages", std::move(messages)},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens}};
}

ChatResponse HttpBackend::parse_response_body(std::string_view body, const std::string& fallback_model) {
    try {
        const auto doc = json::parse(body);
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw Error(ErrorCode::MalformedResponse, "choices[0].message.content is not text");
        ChatResponse r;
        r.content = content.get<std::string>();
        r.model_id = doc.value("model", fallback_model);
        if (doc.contains("usage") && doc["usage"].is_object()) {
            r.usage.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
            r.usage.completion_tokens = doc["usage"].value("completion_tokens", 0);
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedResponse, std::string("unexpected response body: ") + e.what());
    }
}

ChatResponse HttpBackend::send(const ChatRequest& req) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw Error(ErrorCode::AuthError, "environment variable " + cfg_.api_key_env + " is not set");
    }
    httplib::Client client(base_url_);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    client.set_bearer_token_auth(key);

    const auto started = std::chrono::steady_clock::now();
    auto result = client.Post(path_, request_body(req).dump(), "application/json");
    const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();
    if (!result) {
        const auto err = result.error();
        const auto msg = "request to " + cfg_.endpoint_url + " failed: " + httplib::to_string(err);
        if (err == httplib::Error::ConnectionTimeout) throw Error(ErrorCode::Timeout, msg);
        throw Error(ErrorCode::TransportError, msg);
    }
    const int status = result->status;
    const auto detail = "HTTP " + std::to_string(status) + ": " + result->body.substr(0, 300);
    if (status == 401 || status == 403) throw Error(ErrorCode::AuthError, detail);
    if (status == 429) throw Error(ErrorCode::RateLimited, detail);
    if (status == 408 || status == 504) throw Error(ErrorCode::Timeout, detail);
    if (status >= 500) throw Error(ErrorCode::TransportError, detail);
    if (status != 200) throw Error(ErrorCode::InvalidRequest, detail);

    auto response = parse_response_body(result->body, req.model_id);
    response.latency_ms = latency;
    return response;
}

// ---------------------------------------------------------------------------
// Mock

MockScript& MockScript::on_prompt(std::string_view prompt, std::vector<MockOutcome> outcomes) {
    by_fingerprint[fingerprint(prompt)] = std::move(outcomes);
    return *this;
}

MockScript& MockScript::on_contains(std::string needle, std::vector<MockOutcome> outcomes) {
    rules.push_back({std::move(needle), std::move(outcomes)});
    return *this;
}

MockScript MockScript::from_json(const json& doc) {
    MockScript script;
    try {
        for (const auto& entry : doc.at("responses")) {
            std::vector<MockOutcome> outcomes;
            if (entry.contains("outcomes")) {
                for (const auto& o : entry.at("outcomes")) outcomes.push_back(outcome_from_json(o));
            } else {
                outcomes.push_back(outcome_from_json(entry));
            }
            if (outcomes.empty()) throw Error(ErrorCode::ConfigError, "mock script: empty outcome list");
            if (entry.contains("fingerprint")) {
                script.by_fingerprint[entry.at("fingerprint").get<std::string>()] = std::move(outcomes);
            } else if (entry.contains("prompt")) {
                script.on_prompt(entry.at("prompt").get<std::string>(), std::move(outcomes));
            } else if (entry.contains("contains")) {
                script.on_contains(entry.at("contains").get<std::string>(), std::move(outcomes));
            } else {
                throw Error(ErrorCode::ConfigError, "mock script: entry needs fingerprint, prompt or contains");
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("mock script: ") + e.what());
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
}

MockBackend::MockBackend(MockScript script) : script_(std::move(script)) {}

std::string MockBackend::fallback_response(const ChatRequest& req) {
    const std::string& text = req.messages.empty() ? std::string() : req.messages.back().content;
    return text.size() <= 40 ? text : text.substr(text.size() - 40);
}

ChatResponse MockBackend::send(const ChatRequest& req) {
    const auto fp = fingerprint(req);
    MockOutcome outcome;
    {
        std::lock_guard lock(mu_);
        const std::vector<MockOutcome>* outcomes = nullptr;
        std::string key;
        if (auto it = script_.by_fingerprint.find(fp); it != script_.by_fingerprint.end()) {
            outcomes = &it->second;
            key = "fp:" + fp;
        } else {
            const auto& text = req.messages.empty() ? std::string() : req.messages.back().content;
            for (std::size_t i = 0; i < script_.rules.size(); ++i) {
                if (text.find(script_.rules[i].contains) != std::string::npos) {
                    outcomes = &script_.rules[i].outcomes;
                    key = "rule:" + std::to_string(i) + ":" + fp;
                    break;
                }
            }
        }
        if (outcomes) {
            const auto n = seen_[key]++;
            outcome = (*outcomes)[std::min(n, outcomes->size() - 1)];
        } else {
            outcome = fallback_response(req);
        }
        calls_.push_back({fp, req.request_tag, outcome});
    }
    if (const auto* code = std::get_if<ErrorCode>(&outcome)) {
        throw Error(*code, "mock: scripted " + std::string(to_string(*code)));
    }
    return {std::get<std::string>(outcome), req.model_id, {}, 0};
}

std::vector<MockBackend::Call> MockBackend::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::size_t MockBackend::call_count() const {
    std::lock_guard lock(mu_);
    return calls_.size();
}

// ---------------------------------------------------------------------------
// Journal

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {}

void Journal::record(const ChatRequest& req, int attempt, const ChatResponse* response, const Error* error) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    json line{{"tag", req.request_tag},
              {"fingerprint", fingerprint(req)},
              {"attempt", attempt},
              {"request",
               {{"model", req.model_id},
                {"messages", std::move(messages)},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens}}}};
    if (response) line["response"] = response_to_json(*response);
    if (error) line["error"] = {{"code", std::string(to_string(error->code()))}, {"message", error->what()}};
    const auto text = line.dump();
    std::lock_guard lock(mu_);
    append_line(path_, text);
}

ReplayBackend::ReplayBackend(const std::filesystem::path& journal_path) {
    std::ifstream in(journal_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open journal " + journal_path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            const auto doc = json::parse(line);
            const auto key = replay_key(doc.at("request").at("model").get<std::string>(),
                                        doc.at("fingerprint").get<std::string>());
            Entry e;
            if (doc.contains("response")) {
                e.response = response_from_json(doc.at("response"));
            } else {
                const auto& err = doc.at("error");
                e.error = error_code_from_name(err.at("code").get<std::string>()).value_or(ErrorCode::TransportError);
                e.message = err.value("message", "");
            }
            entries_[key].push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::IoError, journal_path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
}

ChatResponse ReplayBackend::send(const ChatRequest& req) {
    const auto key = replay_key(req.model_id, fingerprint(req));
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        throw Error(ErrorCode::InvalidRequest, "replay: request '" + req.request_tag + "' is not in the journal");
    }
    auto& pos = cursor_[key];
    const auto& entry = it->second[std::min(pos, it->second.size() - 1)];
    ++pos;
    if (entry.response) return *entry.response;
    throw Error(entry.error, "replay: " + entry.message);
}

// ---------------------------------------------------------------------------
// Rate limiting and retries

RateLimiter::RateLimiter(double requests_per_minute) {
    if (requests_per_minute > 0) {
        interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(60.0 / requests_per_minute));
    }
}

void RateLimiter::acquire() {
    if (interval_ == std::chrono::steady_clock::duration::zero()) return;
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mu_);
        slot = std::max(std::chrono::steady_clock::now(), next_);
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

std::chrono::milliseconds backoff_ceiling(int attempt, int base_ms) noexcept {
    const int shift = std::clamp(attempt, 0, 20);
    return std::chrono::milliseconds(static_cast<std::int64_t>(base_ms) << shift);
}

ChatClient::ChatClient(std::shared_ptr<ChatBackend> backend, BackendConfig cfg)
    : ChatClient(std::move(backend), std::move(cfg), Options{}) {}

ChatClient::ChatClient(std::shared_ptr<ChatBackend> backend, BackendConfig cfg, Options options)
    : backend_(std::move(backend)), cfg_(std::move(cfg)), sleeper_(std::move(options.sleeper)),
      rng_(options.jitter_seed) {
    cfg_.validate();
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (options.journal_path) journal_ = std::make_unique<Journal>(*options.journal_path);
    limiter_ = std::make_unique<RateLimiter>(cfg_.requests_per_minute);
}

std::optional<std::filesystem::path> ChatClient::journal_path() const {
    if (!journal_) return std::nullopt;
    return journal_->path();
}

std::chrono::milliseconds ChatClient::jittered_delay(int attempt) const {
    const auto ceiling = backoff_ceiling(attempt, cfg_.backoff_base_ms).count();
    std::lock_guard lock(rng_mu_);
    std::uniform_int_distribution<std::int64_t> dist(0, ceiling);
    return std::chrono::milliseconds(dist(rng_));
}

ChatResponse ChatClient::complete(const ChatRequest& req) const {
    validate_request(req);
    for (int attempt = 0;; ++attempt) {
        limiter_->acquire();
        try {
            auto response = backend_->send(req);
            if (journal_) journal_->record(req, attempt, &response, nullptr);
            return response;
        } catch (const Error& e) {
            if (journal_) journal_->record(req, attempt, nullptr, &e);
            if (!is_retryable(e.code()) || attempt >= cfg_.max_retries) throw;
        }
        sleeper_(jittered_delay(attempt));
    }
}

}  // namespace badge
