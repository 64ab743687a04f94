#pragma once

// Blind human evaluation: three-report sessions with hidden authorship,
// durable response storage, and agreement statistics against the machine judge.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "badge/error.hpp"
#include "badge/evaluator.hpp"

namespace badge {

enum class Author { Human, Gpt35, Gpt4 };

inline constexpr Author kAllAuthors[] = {Author::Human, Author::Gpt35, Author::Gpt4};

std::string_view to_string(Author a) noexcept;
/// "human" / "gpt35" / "gpt4" and spelled-out variants. Throws ConfigError.
Author parse_author(std::string_view s);
/// Author behind a report writer: "human", or a model id naming gpt-3.5 / gpt-4.
std::optional<Author> author_from_writer(std::string_view writer);

struct AuthoredReport {
    Author author = Author::Human;
    std::string text;
    std::string record_id;
};

struct SessionItem {
    std::string blind_label;  // "Report 1" .. "Report 3"
    std::string report_text;
    Author author = Author::Human;
    std::string record_id;
};

struct EvalSession {
    std::string session_id;
    std::string match_id;
    std::array<SessionItem, 3> items;
    std::uint64_t shuffle_seed = 0;

    const SessionItem* find_item(std::string_view blind_label) const;

    /// Full record including hidden authorship, for the store only.
    nlohmann::json to_json() const;
    static EvalSession from_json(const nlohmann::json& j);
};

/// Item order for `seed`: position i shows input report perm[i].
std::array<std::size_t, 3> session_permutation(std::uint64_t seed);

/// Throws DuplicateAuthor unless the three authors are distinct.
EvalSession create_session(std::string match_id, const std::array<AuthoredReport, 3>& reports, std::uint64_t seed);

struct FieldError {
    std::string pointer;  // JSON pointer into the submitted body
    ErrorCode code = ErrorCode::IncompleteResponse;
    std::string message;
};

/// Rejected response with the offending fields.
class ResponseError : public Error {
public:
    ResponseError(ErrorCode code, const std::string& message, std::vector<FieldError> fields)
        : Error(code, message), fields_(std::move(fields)) {}
    const std::vector<FieldError>& fields() const noexcept { return fields_; }

private:
    std::vector<FieldError> fields_;
};

struct ItemResponse {
    std::string blind_label;
    std::map<std::string, int> scores;  // criterion name -> 1..10
    std::optional<Author> author_guess;
};

struct HumanResponse {
    std::string session_id;
    std::string rater_id;
    std::vector<ItemResponse> items;  // submission order
    std::string submitted_at;

    const ItemResponse* find_item(std::string_view blind_label) const;

    nlohmann::json to_json() const;
    /// Structural parse; throws ResponseError for wrongly typed fields.
    /// Range and completeness are checked by check_response.
    static HumanResponse from_json(const nlohmann::json& j);
};

/// Every rule the response breaks; empty when it is acceptable.
std::vector<FieldError> check_response(const EvalSession& session, const HumanResponse& response);

struct StoredResponse {
    std::string response_id;
    bool superseded = false;  // an earlier response from the same rater was replaced
};

/// Sessions and responses under one directory (runs/<run_id>/human):
///   sessions/<session_id>.json, responses/<session_id>/<response_id>.json,
///   supersessions.jsonl. Writes are atomic and serialized.
class HumanEvalStore {
public:
    explicit HumanEvalStore(std::filesystem::path dir);

    void save_session(const EvalSession& session);
    std::optional<EvalSession> find_session(const std::string& session_id) const;
    std::vector<EvalSession> sessions() const;

    /// Validates then stores; the latest response per (session, rater) wins.
    /// Throws UnknownSession, or ResponseError (IncompleteResponse / ScoreOutOfRange).
    StoredResponse record_response(const HumanResponse& response);
    std::vector<HumanResponse> responses() const;
    std::vector<HumanResponse> responses(const std::string& session_id) const;

    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::filesystem::path supersession_log() const { return dir_ / "supersessions.jsonl"; }

    static std::string response_id(const std::string& session_id, const std::string& rater_id);

private:
    std::filesystem::path dir_;
    mutable std::mutex mu_;
};

using CriterionMeans = std::array<double, kCriterionCount>;

struct AuthorMeans {
    CriterionMeans means{};
    double overall = 0;
    std::size_t n_responses = 0;
};

/// De-blinds responses through their sessions and averages per author and
/// criterion. Throws NoResponses.
std::map<Author, AuthorMeans> human_means(std::span<const EvalSession> sessions,
                                          std::span<const HumanResponse> responses);

/// Machine means per author, from records whose "writer" label maps to an author.
std::map<Author, CriterionMeans> machine_means_by_author(std::span<const EvaluationRecord> records);

/// Pearson product-moment correlation. Throws LengthMismatch, TooFewPoints, ConstantVector.
double pearson(std::span<const double> x, std::span<const double> y);

enum class Pairing {
    CellMeans,    // 12 (author x criterion) machine means vs human means
    PerResponse,  // every human item score vs the machine mean of its cell
};

struct AgreementStats {
    double pearson_r = 0;
    std::vector<double> machine;
    std::vector<double> human;
    std::vector<std::string> cells;  // "author/criterion" per pair
    std::map<Author, double> guess_accuracy;
    std::map<Author, std::pair<int, int>> guess_counts;  // (correct, total)
};

/// (correct, total) author guesses per true author.
std::map<Author, std::pair<int, int>> guess_counts(std::span<const EvalSession> sessions,
                                                   std::span<const HumanResponse> responses);

/// Throws NoOverlap when no (author, criterion) cell exists on both sides,
/// and propagates pearson's errors.
AgreementStats machine_human_agreement(const std::map<Author, CriterionMeans>& machine,
                                       std::span<const EvalSession> sessions,
                                       std::span<const HumanResponse> responses,
                                       Pairing pairing = Pairing::CellMeans);

/// One row per (response, item): session, rater, label, true author, four scores, guess.
std::string export_responses_csv(std::span<const EvalSession> sessions, std::span<const HumanResponse> responses);

}  // namespace badge
