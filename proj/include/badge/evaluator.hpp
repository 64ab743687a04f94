#pragma once

// Stage 2 machine judge: per-criterion scoring of report text on a 1-10
// scale with model-generated evaluation steps, plus table aggregation.

#include <array>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "badge/generation.hpp"
#include "badge/llm_client.hpp"

namespace badge {

struct Criterion {
    std::string name;
    std::string definition;
    int scale_min = 1;
    int scale_max = 10;
};

inline constexpr std::size_t kCriterionCount = 4;

/// coherence, consistency, excitement, fluency, in that order.
const std::array<Criterion, kCriterionCount>& criteria();
/// Throws ConfigError for an unknown name.
const Criterion& criterion(std::string_view name);
std::size_t criterion_index(std::string_view name);

inline constexpr std::string_view kTaskIntroduction =
    "You are a reviewer of the badminton reports.\n"
    "I will give a badminton report, please follow the Evaluation Steps to score this badminton "
    "report based on the Evaluation Criteria.";

inline constexpr std::string_view kDefaultJudgeModel = "gpt-4-turbo-2024-04-09";

struct EvaluationSteps {
    std::string criterion;
    std::vector<std::string> steps;
    std::string model_id;     // "manual" for hand-written steps
    std::string prompt_hash;  // empty for manual steps
};

/// Steps shared by all evaluations in a run, keyed by (criterion, model).
class StepsCache {
public:
    std::optional<EvaluationSteps> find(const std::string& criterion, const std::string& model_id) const;
    /// Inserts unless present; returns the stored value either way.
    EvaluationSteps insert_if_absent(EvaluationSteps steps);
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, EvaluationSteps> steps_;
};

std::string steps_prompt(const Criterion& c);

/// Items of the first numbered list ("1. ...", "2) ..."). Throws
/// UnparseableSteps when fewer than two items are found.
std::vector<std::string> parse_numbered_steps(std::string_view text);

EvaluationSteps auto_steps(const Criterion& c, const ChatClient& client, const std::string& model_id,
                           StepsCache& cache);

/// Task introduction, this criterion only, its steps, the report, and the form.
std::string evaluation_prompt(const Criterion& c, const EvaluationSteps& steps, std::string_view report);

/// First integer after "Score:", else the first standalone integer. Throws
/// ScoreParseError or ScoreOutOfRange.
int parse_score(std::string_view text, int scale_min = 1, int scale_max = 10);

struct CriterionScore {
    std::string criterion;
    double score = 0;
    std::vector<std::string> raw_responses;
};

/// n_samples completions; the integer score for one sample, otherwise the
/// mean rounded to one decimal.
CriterionScore evaluate_report(const ReportRecord& report, const Criterion& c, const EvaluationSteps& steps,
                               int n_samples, const ChatClient& client, const std::string& model_id);

struct Rater {
    enum class Kind { Machine, Human };
    Kind kind = Kind::Machine;
    std::string id;  // model id, or an anonymous handle

    bool operator==(const Rater&) const = default;
};

struct EvaluationRecord {
    std::string report_record_id;
    Rater rater;
    std::map<std::string, double> scores;  // criterion name -> score
    int n_samples = 1;
    std::vector<std::string> raw_responses;
    /// Group labels copied from the report: data_type, icl, writer, match_id.
    std::map<std::string, std::string> labels;

    /// Throws ScoreOutOfRange / IncompleteResponse.
    void validate() const;
    nlohmann::json to_json() const;
    static EvaluationRecord from_json(const nlohmann::json& j);
};

std::map<std::string, std::string> report_labels(const ReportRecord& r);

struct EvaluationConfig {
    std::string judge_model{kDefaultJudgeModel};
    int n_samples = 1;
    std::size_t jobs = 1;
};

struct EvaluationFailure {
    std::string report_record_id;
    std::string criterion;
    ErrorCode code = ErrorCode::ScoreParseError;
    std::string message;
};

struct EvaluationRunResult {
    std::vector<EvaluationRecord> records;  // one per fully scored report, input order
    std::vector<EvaluationFailure> failures;
};

/// Scores every report on all four criteria, report x criterion tasks in parallel.
EvaluationRunResult evaluate_reports(std::span<const ReportRecord> reports, const EvaluationConfig& cfg,
                                     const ChatClient& client, StepsCache& cache);

enum class Grouping { IclDataType, Writer };

/// "icl+datatype" / "writer". Throws ConfigError.
Grouping parse_grouping(std::string_view s);

struct AggregateRow {
    std::string key;
    std::array<double, kCriterionCount> means{};
    double overall = 0;
    std::size_t n = 0;
};

/// Row whose overall is the mean of the four criterion means.
AggregateRow make_row(std::string key, const std::array<double, kCriterionCount>& means, std::size_t n = 1);

/// "csv+cot" for report groups, the writer (model id or "human") otherwise;
/// empty when the record lacks the labels.
std::string group_key(const EvaluationRecord& r, Grouping g);

/// Per-group criterion means sorted by group key (data type then ICL order for
/// IclDataType). Throws EmptyGroup when there are no records or a key in
/// `required_keys` has none.
std::vector<AggregateRow> aggregate(std::span<const EvaluationRecord> records, Grouping g,
                                    const std::vector<std::string>& required_keys = {});

std::string render_table_text(std::span<const AggregateRow> rows, Grouping g);
std::string render_table_csv(std::span<const AggregateRow> rows, Grouping g);

}  // namespace badge
