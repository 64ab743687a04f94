#pragma once

// Input serializations (CSV, Q&A) and assembly of the four in-context
// learning prompt variants from template files.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "badge/match_data.hpp"

namespace badge {

enum class DataType { CSV, QA };
enum class IclMethod { ZeroShot, OneShot, FewShot, CoT };

inline constexpr DataType kAllDataTypes[] = {DataType::CSV, DataType::QA};
inline constexpr IclMethod kAllIclMethods[] = {IclMethod::ZeroShot, IclMethod::OneShot,
                                               IclMethod::FewShot, IclMethod::CoT};

std::string_view to_string(DataType t) noexcept;
std::string_view to_string(IclMethod m) noexcept;
/// Accepts "csv"/"qa" and "zero_shot"/"one_shot"/"few_shot"/"cot" (case-insensitive,
/// '-' and '_' interchangeable). Throws Error(ConfigError).
DataType parse_data_type(std::string_view s);
IclMethod parse_icl_method(std::string_view s);

/// Exemplars a method needs: 0, 1, or `few_shot_k`.
std::size_t required_exemplars(IclMethod m, std::size_t few_shot_k = 2) noexcept;

struct Exemplar {
    std::string title;
    std::string report_text;
};

/// One exemplar per regular file in `dir`, sorted by filename; title is the
/// filename stem. Throws IoError or EmptyExemplarFile.
std::vector<Exemplar> load_exemplars(const std::filesystem::path& dir);

/// Placeholder-bearing prompt templates: {persona}, {examples}, {steps}, {payload}.
class PromptTemplates {
public:
    /// Templates compiled into the library from the repository's templates/ tree.
    static const PromptTemplates& builtin();
    /// Reads the same layout from disk. Throws MissingTemplate.
    static PromptTemplates load(const std::filesystem::path& dir);

    const std::string& version() const noexcept { return version_; }
    const std::string& persona() const noexcept { return persona_; }
    const std::string& body(DataType t, IclMethod m) const;
    const std::string& steps(DataType t) const;

private:
    using Files = std::map<std::string, std::string>;
    static PromptTemplates from_files(const Files& files, std::string_view origin);

    std::string version_;
    std::string persona_;
    std::map<std::pair<DataType, IclMethod>, std::string> bodies_;
    std::map<DataType, std::string> steps_;
};

/// Replaces each `{name}` whose name is a key of `values`; other braces are kept.
std::string fill_placeholders(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct PromptBundle {
    std::string system_preamble;  // persona line
    std::string body;             // filled template with the payload cut out
    std::size_t payload_offset = 0;  // where data_payload goes in body
    std::string data_payload;
    IclMethod icl = IclMethod::ZeroShot;
    DataType data_type = DataType::CSV;

    /// The full prompt text sent to the model.
    std::string render() const;
};

/// Canonical header plus one ", "-joined line per rally.
std::string serialize_csv(const GameSet& set);

/// Payload for `sets`: a match header, then one "Set k" section per set in
/// the chosen representation.
std::string build_payload(DataType data_type, const Match& match, std::span<const GameSet> sets);

/// Section bodies of a payload keyed by set number.
std::map<int, std::string> split_payload_sections(std::string_view payload);

struct PromptOptions {
    std::size_t few_shot_k = 2;
};

/// Throws MissingExemplars when `exemplars` is short for the method.
PromptBundle build_prompt(DataType data_type, IclMethod icl, const Match& match,
                          std::span<const GameSet> sets, std::span<const Exemplar> exemplars,
                          const PromptTemplates& templates = PromptTemplates::builtin(),
                          const PromptOptions& options = {});

/// All sets of the match.
PromptBundle build_prompt(DataType data_type, IclMethod icl, const Match& match,
                          std::span<const Exemplar> exemplars,
                          const PromptTemplates& templates = PromptTemplates::builtin(),
                          const PromptOptions& options = {});

}  // namespace badge
