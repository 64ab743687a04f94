#pragma once

// Stage 1: run the (data type x ICL method x model) matrix over matches and
// wrap each completion in a ReportRecord with full provenance.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "badge/llm_client.hpp"
#include "badge/match_data.hpp"
#include "badge/prompt_builder.hpp"

namespace badge {

enum class Granularity { PerMatch, PerSet };

struct GenerationCell {
    DataType data_type = DataType::CSV;
    IclMethod icl = IclMethod::ZeroShot;
    std::string model_id;

    std::string label() const;
};

struct GenerationConfig {
    std::vector<DataType> data_types{std::begin(kAllDataTypes), std::end(kAllDataTypes)};
    std::vector<IclMethod> icl_methods{std::begin(kAllIclMethods), std::end(kAllIclMethods)};
    std::vector<std::string> model_ids{"gpt-3.5-turbo-0125"};
    std::filesystem::path exemplar_dir;
    Granularity granularity = Granularity::PerMatch;
    double temperature = kGenerationTemperature;
    int max_tokens = 1024;
    std::size_t few_shot_k = 2;
    std::size_t jobs = 1;

    /// Throws ConfigError when a subset is empty.
    void validate() const;
    /// Cells in DataType, IclMethod, model order.
    std::vector<GenerationCell> cells() const;

    nlohmann::json to_json() const;
    static GenerationConfig from_json(const nlohmann::json& j);
};

struct ReportRecord {
    std::string record_id;
    std::string match_id;
    std::optional<int> set_number;  // empty: the report covers all sets
    std::optional<DataType> data_type;  // empty for imported human reports
    std::optional<IclMethod> icl;
    std::string model_id;  // "human" for imported reports
    std::string prompt;
    std::string report;
    std::string created_at;
    std::string backend_journal_ref;

    /// Content hash over every field except record_id and created_at.
    std::string compute_id() const;

    nlohmann::json to_json() const;
    static ReportRecord from_json(const nlohmann::json& j);
};

inline constexpr std::string_view kHumanWriter = "human";

/// Record for a report written by a person, scored through the same Stage-2 path.
ReportRecord import_human_report(const std::string& match_id, std::string report_text);

struct GenerationContext {
    const ChatClient& client;
    std::span<const Exemplar> exemplars;
    const PromptTemplates& templates = PromptTemplates::builtin();
};

/// One report for the whole match (or for `set_number` only). Throws
/// ValidationFailed for an invalid match, MissingExemplars, or the client's errors.
ReportRecord generate_report(const Match& match, const GenerationCell& cell, const GenerationContext& ctx,
                             const GenerationConfig& cfg, std::optional<int> set_number = std::nullopt);

struct CellFailure {
    std::string match_id;
    std::optional<int> set_number;
    GenerationCell cell;
    ErrorCode code = ErrorCode::TransportError;
    std::string message;

    nlohmann::json to_json() const;
};

struct MatrixResult {
    std::vector<ReportRecord> records;
    std::vector<CellFailure> failures;
};

/// Every (match x cell), up to cfg.jobs at a time. A failing cell is logged
/// in `failures` and never aborts the others. Output order is match order,
/// then (set), data type, ICL method, model.
MatrixResult run_matrix(std::span<const Match> matches, const GenerationConfig& cfg,
                        const GenerationContext& ctx);

}  // namespace badge
