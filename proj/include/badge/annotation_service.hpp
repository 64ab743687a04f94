#pragma once

// HTTP front for blind human evaluation: serves blinded sessions, accepts
// responses into a HumanEvalStore, and hosts the static UI bundle.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "badge/human_eval.hpp"

namespace badge {

/// Error codes that may appear in a 4xx/5xx body.
enum class ServiceError { NotFound, UnsupportedMediaType, MalformedJson, IncompleteResponse, ScoreOutOfRange, Internal };

std::string_view to_string(ServiceError e) noexcept;

/// What a rater receives: labels, texts and criteria. Never authorship.
nlohmann::json wire_session(const EvalSession& session);

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::optional<std::filesystem::path> static_dir;
    bool allow_any_origin = false;
};

class AnnotationService {
public:
    AnnotationService(HumanEvalStore& store, ServiceOptions options);
    ~AnnotationService();
    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    /// Binds the socket; returns the bound port. Throws IoError.
    int bind();
    /// Serves until stop(); call bind() first.
    void listen();
    /// Blocks until listen() is accepting connections.
    void wait_until_ready() const;
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace badge
