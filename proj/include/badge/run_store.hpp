#pragma once

// Run directories and pipeline configuration.
//
//   runs/<run_id>/manifest.json       written once
//   runs/<run_id>/reports/<record_id>.json
//   runs/<run_id>/failures.json
//   runs/<run_id>/journal.jsonl
//   runs/<run_id>/evals/<record_id>__<rater>.json
//   runs/<run_id>/human/...           see HumanEvalStore

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "badge/evaluator.hpp"
#include "badge/generation.hpp"
#include "badge/llm_client.hpp"
#include "badge/match_data.hpp"

namespace badge {

/// Content hash of the matches, independent of their order.
std::string dataset_hash(std::span<const Match> matches);

/// Backend settings that are safe to persist: the key's env var name, never its value.
nlohmann::json backend_summary(const BackendConfig& cfg, std::string_view backend_kind);

struct RunManifest {
    std::string run_id;
    std::string dataset_hash;
    std::vector<std::string> match_ids;
    GenerationConfig generation;
    nlohmann::json backend = nlohmann::json::object();
    std::string tool_version;
    std::string template_version;
    std::string created_at;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

class RunStore {
public:
    RunStore(const std::filesystem::path& runs_root, const std::string& run_id);

    /// Throws IoError when the run does not exist.
    static RunStore open(const std::filesystem::path& runs_root, const std::string& run_id);

    const std::filesystem::path& dir() const noexcept { return dir_; }
    const std::string& run_id() const noexcept { return run_id_; }
    bool exists() const;

    /// Throws IoError if a manifest is already present.
    void write_manifest(const RunManifest& manifest);
    RunManifest manifest() const;

    void write_report(const ReportRecord& record);
    /// Sorted by record id.
    std::vector<ReportRecord> reports() const;
    std::optional<ReportRecord> find_report(const std::string& record_id) const;

    void write_failures(const nlohmann::json& failures, const std::string& name = "failures.json");

    void write_eval(const EvaluationRecord& record);
    std::vector<EvaluationRecord> evals() const;

    std::filesystem::path journal_path() const { return dir_ / "journal.jsonl"; }
    std::filesystem::path human_dir() const { return dir_ / "human"; }

private:
    std::filesystem::path dir_;
    std::string run_id_;
};

/// Fresh run id: UTC time plus a short hash of `salt`.
std::string new_run_id(std::string_view salt);

enum class BackendKind { Http, Mock, Replay };

std::string_view to_string(BackendKind k) noexcept;

/// The single config file read by `generate` and `evaluate`.
///
/// {
///   "data_dir": "data/fixtures", "runs_dir": "runs", "run_id": "optional",
///   "generation": { GenerationConfig },
///   "evaluation": {"judge_model": "...", "n_samples": 1},
///   "backend": {"kind": "http|mock|replay", "endpoint_url": "...",
///               "api_key": "${BADGE_API_KEY}", "timeout_s": 120, "max_retries": 3,
///               "backoff_base_ms": 500, "requests_per_minute": 0,
///               "mock_script": "file.json", "replay_journal": "journal.jsonl"}
/// }
///
/// The api_key value must be a ${VAR} reference; a literal key is rejected.
struct PipelineConfig {
    std::filesystem::path data_dir;
    std::filesystem::path runs_dir = "runs";
    std::optional<std::string> run_id;
    GenerationConfig generation;
    EvaluationConfig evaluation;
    BackendConfig backend;
    BackendKind backend_kind = BackendKind::Http;
    std::optional<std::filesystem::path> mock_script;
    std::optional<std::filesystem::path> replay_journal;

    /// Relative paths resolve against `base_dir`. Throws ConfigError.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);
};

/// Backend for the configured kind. The HTTP backend checks its key per request.
std::shared_ptr<ChatBackend> make_backend(const PipelineConfig& cfg);

}  // namespace badge
