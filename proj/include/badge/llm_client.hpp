#pragma once

// Backend-agnostic chat-completion client: OpenAI-compatible HTTP backend,
// scripted mock, journal replay, retry with backoff, and a dispatch rate
// limiter.

#include <chrono>
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

#include <json.hpp>

#include "badge/error.hpp"

namespace badge {

inline constexpr double kGenerationTemperature = 0.7;
inline constexpr double kEvaluationTemperature = 0.0;

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;
    double temperature = kGenerationTemperature;
    int max_tokens = 1024;
    std::string request_tag;

    /// Single user-message request.
    static ChatRequest user(std::string model_id, std::string prompt, double temperature,
                            std::string tag = {});
};

/// Throws InvalidRequest unless the request satisfies the wire contract.
void validate_request(const ChatRequest& req);

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;

    bool operator==(const Usage&) const = default;
};

struct ChatResponse {
    std::string content;
    std::string model_id;
    Usage usage;
    std::int64_t latency_ms = 0;

    bool operator==(const ChatResponse&) const = default;
};

struct BackendConfig {
    std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
    std::string api_key_env = "BADGE_API_KEY";
    double timeout_s = 120.0;
    int max_retries = 3;  // at most 8
    int backoff_base_ms = 500;
    double requests_per_minute = 0.0;  // <= 0 disables the limiter

    /// Throws ConfigError.
    void validate() const;
};

bool is_retryable(ErrorCode code) noexcept;

/// Fingerprint of the conversation content (roles and texts, not the model).
std::string fingerprint(const ChatRequest& req);
/// Fingerprint of a single user-message prompt.
std::string fingerprint(std::string_view prompt);

/// One attempt against a provider. Implementations throw badge::Error with
/// one of AuthError, RateLimited, Timeout, MalformedResponse, TransportError
/// or InvalidRequest, and must be callable concurrently.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse send(const ChatRequest& req) = 0;
    virtual std::string name() const = 0;
};

/// OpenAI-compatible chat-completions endpoint.
class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(BackendConfig cfg);
    ChatResponse send(const ChatRequest& req) override;
    std::string name() const override { return "http"; }

    static nlohmann::json request_body(const ChatRequest& req);
    /// Maps a 200 body to a response; throws MalformedResponse.
    static ChatResponse parse_response_body(std::string_view body, const std::string& fallback_model);

private:
    BackendConfig cfg_;
    std::string base_url_;
    std::string path_;
};

using MockOutcome = std::variant<std::string, ErrorCode>;

/// Scripted responses. Exact fingerprints win over substring rules. An entry
/// with several outcomes yields them in call order and then repeats its last.
struct MockScript {
    struct Rule {
        std::string contains;
        std::vector<MockOutcome> outcomes;
    };
    std::map<std::string, std::vector<MockOutcome>> by_fingerprint;
    std::vector<Rule> rules;

    MockScript& on_prompt(std::string_view prompt, std::vector<MockOutcome> outcomes);
    MockScript& on_contains(std::string needle, std::vector<MockOutcome> outcomes);

    /// {"responses":[{"fingerprint"|"prompt"|"contains": ..., "response": "..."
    ///  | "error": "RateLimited" | "outcomes": [...]}]}
    static MockScript from_json(const nlohmann::json& doc);
    static MockScript load(const std::filesystem::path& path);
};

class MockBackend final : public ChatBackend {
public:
    struct Call {
        std::string fingerprint;
        std::string request_tag;
        MockOutcome outcome;
    };

    explicit MockBackend(MockScript script = {});
    ChatResponse send(const ChatRequest& req) override;
    std::string name() const override { return "mock"; }

    std::vector<Call> calls() const;
    std::size_t call_count() const;

    /// Unscripted prompts echo the last 40 characters of the final message.
    static std::string fallback_response(const ChatRequest& req);

private:
    MockScript script_;
    mutable std::mutex mu_;
    std::map<std::string, std::size_t> seen_;
    std::vector<Call> calls_;
};

/// Append-only JSON-lines log of every attempt.
class Journal {
public:
    explicit Journal(std::filesystem::path path);
    void record(const ChatRequest& req, int attempt, const ChatResponse* response, const Error* error);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mu_;
};

/// Serves a recorded journal: outcomes per (model, fingerprint) in recorded order.
class ReplayBackend final : public ChatBackend {
public:
    explicit ReplayBackend(const std::filesystem::path& journal_path);
    ChatResponse send(const ChatRequest& req) override;
    std::string name() const override { return "replay"; }

private:
    struct Entry {
        std::optional<ChatResponse> response;
        ErrorCode error = ErrorCode::TransportError;
        std::string message;
    };
    std::map<std::string, std::vector<Entry>> entries_;
    std::map<std::string, std::size_t> cursor_;
    std::mutex mu_;
};

/// Token bucket with a one-request burst: dispatches are spaced 60/rpm seconds apart.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_minute);
    void acquire();

private:
    std::chrono::steady_clock::duration interval_{};
    std::chrono::steady_clock::time_point next_{};
    std::mutex mu_;
};

/// Upper bound of the backoff before `attempt` (0-based): base * 2^attempt.
std::chrono::milliseconds backoff_ceiling(int attempt, int base_ms) noexcept;

class ChatClient {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    struct Options {
        std::optional<std::filesystem::path> journal_path;
        std::uint64_t jitter_seed = 0x5eed;
        Sleeper sleeper;  // defaults to std::this_thread::sleep_for
    };

    ChatClient(std::shared_ptr<ChatBackend> backend, BackendConfig cfg);
    ChatClient(std::shared_ptr<ChatBackend> backend, BackendConfig cfg, Options options);

    /// Sends with retries on RateLimited, Timeout and TransportError. Safe to
    /// call from several threads.
    ChatResponse complete(const ChatRequest& req) const;

    const BackendConfig& config() const noexcept { return cfg_; }
    const ChatBackend& backend() const noexcept { return *backend_; }
    std::optional<std::filesystem::path> journal_path() const;

private:
    std::chrono::milliseconds jittered_delay(int attempt) const;

    std::shared_ptr<ChatBackend> backend_;
    BackendConfig cfg_;
    Sleeper sleeper_;
    std::unique_ptr<Journal> journal_;
    std::unique_ptr<RateLimiter> limiter_;
    mutable std::mutex rng_mu_;
    mutable std::mt19937_64 rng_;
};

}  // namespace badge
