#include "badge/run_store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "badge/prompt_builder.hpp"
#include "badge/util.hpp"

namespace badge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string file_safe(std::string_view s) {
    std::string out;
    for (char c : s) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_';
        out.push_back(ok ? c : '_');
    }
    return out;
}

std::vector<fs::path> json_files(const fs::path& dir) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) return files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

json parse_json_file(const fs::path& path) {
    auto doc = json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::IoError, "not valid JSON: " + path.string());
    return doc;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    if (path.is_relative() && !base.empty()) return base / path;
    return path;
}

/// "${NAME}" -> NAME.
std::optional<std::string> env_reference(std::string_view value) {
    if (value.size() < 4 || !value.starts_with("${") || !value.ends_with("}")) return std::nullopt;
    return std::string(value.substr(2, value.size() - 3));
}

}  // namespace

std::string dataset_hash(std::span<const Match> matches) {
    std::vector<std::string> parts;
    for (const auto& m : matches) {
        std::string part = m.match_id + "\n" + m.tournament + "\n" + m.date + "\n" + m.player_a + "\n" + m.player_b;
        for (const auto& s : m.sets) part += "\n#" + std::to_string(s.set_number) + "\n" + serialize_csv(s);
        parts.push_back(sha256_hex(part));
    }
    std::sort(parts.begin(), parts.end());
    std::string all;
    for (const auto& p : parts) all += p + "\n";
    return sha256_hex(all);
}

json backend_summary(const BackendConfig& cfg, std::string_view backend_kind) {
    return {{"kind", backend_kind},
            {"endpoint_url", cfg.endpoint_url},
            {"api_key_env", cfg.api_key_env},
            {"timeout_s", cfg.timeout_s},
            {"max_retries", cfg.max_retries},
            {"backoff_base_ms", cfg.backoff_base_ms},
            {"requests_per_minute", cfg.requests_per_minute}};
}

json RunManifest::to_json() const {
    return {{"run_id", run_id},
            {"dataset_hash", dataset_hash},
            {"match_ids", match_ids},
            {"generation", generation.to_json()},
            {"backend", backend},
            {"tool_version", tool_version},
            {"template_version", template_version},
            {"created_at", created_at}};
}

RunManifest RunManifest::from_json(const json& j) {
    RunManifest m;
    try {
        m.run_id = j.at("run_id").get<std::string>();
        m.dataset_hash = j.at("dataset_hash").get<std::string>();
        m.match_ids = j.value("match_ids", std::vector<std::string>{});
        m.generation = GenerationConfig::from_json(j.at("generation"));
        m.backend = j.value("backend", json::object());
        m.tool_version = j.value("tool_version", "");
        m.template_version = j.value("template_version", "");
        m.created_at = j.value("created_at", "");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("manifest: ") + e.what());
    }
    return m;
}

RunStore::RunStore(const fs::path& runs_root, const std::string& run_id) : dir_(runs_root / run_id), run_id_(run_id) {
    if (run_id.empty() || file_safe(run_id) != run_id) {
        throw Error(ErrorCode::ConfigError, "run id may only contain letters, digits, '.', '-' and '_'");
    }
}

RunStore RunStore::open(const fs::path& runs_root, const std::string& run_id) {
    RunStore store(runs_root, run_id);
    if (!store.exists()) throw Error(ErrorCode::IoError, "no such run: " + store.dir().string());
    return store;
}

bool RunStore::exists() const { return fs::exists(dir_ / "manifest.json"); }

void RunStore::write_manifest(const RunManifest& manifest) {
    const auto path = dir_ / "manifest.json";
    if (fs::exists(path)) throw Error(ErrorCode::IoError, "run " + run_id_ + " already has a manifest");
    fs::create_directories(dir_);
    write_file_atomic(path, manifest.to_json().dump(2) + "\n");
}

RunManifest RunStore::manifest() const { return RunManifest::from_json(parse_json_file(dir_ / "manifest.json")); }

void RunStore::write_report(const ReportRecord& record) {
    fs::create_directories(dir_ / "reports");
    write_file_atomic(dir_ / "reports" / (file_safe(record.record_id) + ".json"), record.to_json().dump(2) + "\n");
}

std::vector<ReportRecord> RunStore::reports() const {
    std::vector<ReportRecord> out;
    for (const auto& f : json_files(dir_ / "reports")) out.push_back(ReportRecord::from_json(parse_json_file(f)));
    return out;
}

std::optional<ReportRecord> RunStore::find_report(const std::string& record_id) const {
    const auto path = dir_ / "reports" / (file_safe(record_id) + ".json");
    if (!fs::exists(path)) return std::nullopt;
    return ReportRecord::from_json(parse_json_file(path));
}

void RunStore::write_failures(const json& failures, const std::string& name) {
    fs::create_directories(dir_);
    write_file_atomic(dir_ / name, failures.dump(2) + "\n");
}

void RunStore::write_eval(const EvaluationRecord& record) {
    fs::create_directories(dir_ / "evals");
    const auto name = file_safe(record.report_record_id) + "__" + file_safe(record.rater.id) + ".json";
    write_file_atomic(dir_ / "evals" / name, record.to_json().dump(2) + "\n");
}

std::vector<EvaluationRecord> RunStore::evals() const {
    std::vector<EvaluationRecord> out;
    for (const auto& f : json_files(dir_ / "evals")) out.push_back(EvaluationRecord::from_json(parse_json_file(f)));
    return out;
}

std::string new_run_id(std::string_view salt) {
    auto stamp = utc_timestamp();
    std::erase_if(stamp, [](char c) { return c == '-' || c == ':'; });
    return stamp + "-" + sha256_hex(std::string(salt) + stamp).substr(0, 8);
}

std::string_view to_string(BackendKind k) noexcept {
    switch (k) {
        case BackendKind::Http: return "http";
        case BackendKind::Mock: return "mock";
        case BackendKind::Replay: return "replay";
    }
    return "http";
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    PipelineConfig cfg;
    try {
        cfg.data_dir = resolve(base_dir, j.value("data_dir", std::string("data/fixtures")));
        cfg.runs_dir = resolve(base_dir, j.value("runs_dir", std::string("runs")));
        if (j.contains("run_id")) cfg.run_id = j.at("run_id").get<std::string>();
        if (j.contains("generation")) cfg.generation = GenerationConfig::from_json(j.at("generation"));
        if (!cfg.generation.exemplar_dir.empty()) {
            cfg.generation.exemplar_dir = resolve(base_dir, cfg.generation.exemplar_dir.string());
        }
        if (j.contains("evaluation")) {
            const auto& e = j.at("evaluation");
            cfg.evaluation.judge_model = e.value("judge_model", std::string(kDefaultJudgeModel));
            cfg.evaluation.n_samples = e.value("n_samples", 1);
            cfg.evaluation.jobs = e.value("jobs", std::size_t{1});
            if (cfg.evaluation.n_samples < 1) throw Error(ErrorCode::ConfigError, "evaluation.n_samples must be >= 1");
        }
        if (j.contains("backend")) {
            const auto& b = j.at("backend");
            const auto kind = b.value("kind", std::string("http"));
            if (kind == "http") {
                cfg.backend_kind = BackendKind::Http;
            } else if (kind == "mock") {
                cfg.backend_kind = BackendKind::Mock;
            } else if (kind == "replay") {
                cfg.backend_kind = BackendKind::Replay;
            } else {
                throw Error(ErrorCode::ConfigError, "backend.kind must be http, mock or replay");
            }
            cfg.backend.endpoint_url = b.value("endpoint_url", cfg.backend.endpoint_url);
            if (b.contains("api_key")) {
                const auto value = b.at("api_key").get<std::string>();
                const auto var = env_reference(value);
                if (!var) {
                    throw Error(ErrorCode::ConfigError,
                                "backend.api_key must be an environment reference such as ${BADGE_API_KEY}");
                }
                cfg.backend.api_key_env = *var;
            }
            cfg.backend.timeout_s = b.value("timeout_s", cfg.backend.timeout_s);
            cfg.backend.max_retries = b.value("max_retries", cfg.backend.max_retries);
            cfg.backend.backoff_base_ms = b.value("backoff_base_ms", cfg.backend.backoff_base_ms);
            cfg.backend.requests_per_minute = b.value("requests_per_minute", cfg.backend.requests_per_minute);
            if (b.contains("mock_script")) cfg.mock_script = resolve(base_dir, b.at("mock_script").get<std::string>());
            if (b.contains("replay_journal")) {
                cfg.replay_journal = resolve(base_dir, b.at("replay_journal").get<std::string>());
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
    }
    if (cfg.backend_kind == BackendKind::Replay && !cfg.replay_journal) {
        throw Error(ErrorCode::ConfigError, "backend.kind replay needs backend.replay_journal");
    }
    cfg.generation.validate();
    cfg.backend.validate();
    return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    auto doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::ConfigError, "config is not valid JSON: " + path.string());
    return from_json(doc, path.parent_path());
}

std::shared_ptr<ChatBackend> make_backend(const PipelineConfig& cfg) {
    switch (cfg.backend_kind) {
        case BackendKind::Mock:
            return std::make_shared<MockBackend>(cfg.mock_script ? MockScript::load(*cfg.mock_script) : MockScript{});
        case BackendKind::Replay: return std::make_shared<ReplayBackend>(*cfg.replay_journal);
        case BackendKind::Http: break;
    }
    return std::make_shared<HttpBackend>(cfg.backend);
}

}  // namespace badge
