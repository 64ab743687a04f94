#include "badge/annotation_service.hpp"

#include <httplib.h>

#include <atomic>

#include "badge/util.hpp"

namespace badge {

using nlohmann::json;

namespace {

ServiceError service_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::ScoreOutOfRange: return ServiceError::ScoreOutOfRange;
        case ErrorCode::IncompleteResponse: return ServiceError::IncompleteResponse;
        case ErrorCode::UnknownSession: return ServiceError::NotFound;
        default: return ServiceError::Internal;
    }
}

void send_error(httplib::Response& res, int status, ServiceError code, const std::string& message,
                const std::vector<FieldError>& fields = {}) {
    json body{{"code", std::string(to_string(code))}, {"message", message}};
    if (!fields.empty()) {
        json list = json::array();
        for (const auto& f : fields) {
            list.push_back({{"pointer", f.pointer},
                            {"code", std::string(to_string(service_code(f.code)))},
                            {"message", f.message}});
        }
        body["fields"] = std::move(list);
    }
    res.status = status;
    res.set_content(json{{"error", body}}.dump(), "application/json");
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

bool is_json_content_type(const httplib::Request& req) {
    auto type = req.get_header_value("Content-Type");
    type = type.substr(0, type.find(';'));
    return trim(type) == "application/json";
}

}  // namespace

std::string_view to_string(ServiceError e) noexcept {
    switch (e) {
        case ServiceError::NotFound: return "NotFound";
        case ServiceError::UnsupportedMediaType: return "UnsupportedMediaType";
        case ServiceError::MalformedJson: return "MalformedJson";
        case ServiceError::IncompleteResponse: return "IncompleteResponse";
        case ServiceError::ScoreOutOfRange: return "ScoreOutOfRange";
        case ServiceError::Internal: return "Internal";
    }
    return "Internal";
}

json wire_session(const EvalSession& session) {
    json items = json::array();
    for (const auto& item : session.items) {
        items.push_back({{"blind_label", item.blind_label}, {"report_text", item.report_text}});
    }
    json crit = json::array();
    for (const auto& c : criteria()) {
        crit.push_back({{"name", c.name}, {"definition", c.definition}, {"min", c.scale_min}, {"max", c.scale_max}});
    }
    return {{"session_id", session.session_id}, {"items", items}, {"criteria", crit}};
}

struct AnnotationService::Impl {
    HumanEvalStore& store;
    ServiceOptions options;
    httplib::Server server;
    std::atomic<bool> bound{false};

    Impl(HumanEvalStore& s, ServiceOptions o) : store(s), options(std::move(o)) { routes(); }

    void routes() {
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
        });
        if (options.allow_any_origin) {
            server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
                res.set_header("Access-Control-Allow-Origin", "*");
                res.set_header("Access-Control-Allow-Headers", "Content-Type");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            });
            server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        }

        server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}, {"version", version()}});
        });

        server.Get(R"(/api/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const auto session = store.find_session(req.matches[1]);
            if (!session) {
                send_error(res, 404, ServiceError::NotFound, "unknown session '" + std::string(req.matches[1]) + "'");
                return;
            }
            send_json(res, 200, wire_session(*session));
        });

        server.Post(R"(/api/sessions/([^/]+)/responses)", [this](const httplib::Request& req,
                                                                   httplib::Response& res) {
            const std::string id = req.matches[1];
            if (!is_json_content_type(req)) {
                send_error(res, 415, ServiceError::UnsupportedMediaType, "Content-Type must be application/json");
                return;
            }
            if (!store.find_session(id)) {
                send_error(res, 404, ServiceError::NotFound, "unknown session '" + id + "'");
                return;
            }
            const auto body = json::parse(req.body, nullptr, false);
            if (body.is_discarded()) {
                send_error(res, 400, ServiceError::MalformedJson, "request body is not valid JSON");
                return;
            }
            try {
                auto response = HumanResponse::from_json(body);
                if (response.session_id.empty()) response.session_id = id;
                if (response.session_id != id) {
                    send_error(res, 400, ServiceError::IncompleteResponse, "session_id does not match the URL",
                               {{"/session_id", ErrorCode::IncompleteResponse, "does not match the URL"}});
                    return;
                }
                response.submitted_at.clear();
                const auto stored = store.record_response(response);
                send_json(res, 201, {{"response_id", stored.response_id}, {"superseded", stored.superseded}});
            } catch (const ResponseError& e) {
                send_error(res, 400, service_code(e.code()), e.what(), e.fields());
            } catch (const Error& e) {
                if (e.code() == ErrorCode::UnknownSession) {
                    send_error(res, 404, ServiceError::NotFound, e.what());
                } else {
                    send_error(res, 500, ServiceError::Internal, e.what());
                }
            }
        });

        if (options.static_dir) server.set_mount_point("/", options.static_dir->string());

        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string message = "internal error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                message = e.what();
            } catch (...) {
            }
            send_error(res, 500, ServiceError::Internal, message);
        });

        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
            if (res.status == 404) {
                send_error(res, 404, ServiceError::NotFound, "no route for " + req.method + " " + req.path);
            } else {
                send_error(res, res.status, ServiceError::Internal, httplib::status_message(res.status));
            }
            return httplib::Server::HandlerResponse::Handled;
        });
    }
};

AnnotationService::AnnotationService(HumanEvalStore& store, ServiceOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
    if (impl_->options.static_dir && !std::filesystem::is_directory(*impl_->options.static_dir)) {
        throw Error(ErrorCode::IoError, "static directory not found: " + impl_->options.static_dir->string());
    }
}

AnnotationService::~AnnotationService() { stop(); }

int AnnotationService::bind() {
    int port = impl_->options.port;
    if (port == 0) {
        port = impl_->server.bind_to_any_port(impl_->options.host);
    } else if (!impl_->server.bind_to_port(impl_->options.host, port)) {
        port = -1;
    }
    if (port < 0) {
        throw Error(ErrorCode::IoError, "cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
    }
    impl_->bound = true;
    return port;
}

void AnnotationService::listen() {
    if (!impl_->bound) throw Error(ErrorCode::IoError, "listen() before bind()");
    impl_->server.listen_after_bind();
}

void AnnotationService::wait_until_ready() const { impl_->server.wait_until_ready(); }

void AnnotationService::stop() {
    if (impl_->bound) impl_->server.stop();
}

bool AnnotationService::running() const { return impl_->server.is_running(); }

}  // namespace badge
