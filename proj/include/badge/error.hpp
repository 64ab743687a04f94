#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace badge {

/// Closed set of failure kinds raised across the pipeline.
enum class ErrorCode {
    // match_data
    EmptyInput,
    MalformedHeader,
    FieldCountMismatch,
    NonIntegerScore,
    InconsistentMapping,
    AmbiguousMapping,
    InvalidMatch,
    // stats_engine
    TiedFinalScore,
    InvalidSet,
    // prompt_builder
    MissingExemplars,
    EmptyExemplarFile,
    MissingTemplate,
    // llm_client
    AuthError,
    RateLimited,
    Timeout,
    MalformedResponse,
    TransportError,
    InvalidRequest,
    // generation
    ValidationFailed,
    // evaluator
    UnparseableSteps,
    ScoreParseError,
    ScoreOutOfRange,
    EmptyGroup,
    // human_eval
    DuplicateAuthor,
    IncompleteResponse,
    UnknownSession,
    NoResponses,
    NoOverlap,
    LengthMismatch,
    ConstantVector,
    TooFewPoints,
    // shared
    IoError,
    ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace badge
