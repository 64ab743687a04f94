#pragma once

// Rally-level data model for singles badminton sets, the six-column CSV
// reader, and score-progression validation.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace badge {

enum class Side { A, B };

/// One scored exchange. Scores are the running totals *after* the rally.
struct Rally {
    std::string win_point_player;
    std::string win_reason;
    std::string ball_type;
    std::string lose_reason;
    int score_a = 0;
    int score_b = 0;

    bool operator==(const Rally&) const = default;
};

struct GameSet {
    int set_number = 1;
    std::vector<Rally> rallies;
    std::string player_a;
    std::string player_b;

    const std::string& player(Side side) const { return side == Side::A ? player_a : player_b; }
    /// Side of `name`, if it is one of the two registered players.
    std::optional<Side> side_of(std::string_view name) const;
    std::string opponent_of(std::string_view name) const;

    bool operator==(const GameSet&) const = default;
};

struct Match {
    std::string match_id;
    std::string tournament;
    std::string date;  // YYYY-MM-DD
    std::string player_a;
    std::string player_b;
    std::vector<GameSet> sets;
};

struct SideMapping {
    std::string player_a;
    std::string player_b;

    bool operator==(const SideMapping&) const = default;
};

struct ValidationIssue {
    std::optional<std::size_t> rally_index;  // 0-based; empty for set-level issues
    std::optional<int> set_number;           // filled by validate_match
    std::string rule;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> errors;
    std::vector<ValidationIssue> warnings;

    bool ok() const noexcept { return errors.empty(); }
};

/// Canonical column names, in order.
inline constexpr std::string_view kCsvColumns[] = {
    "win_point_player", "win_reason", "ball_types", "lose_reason", "roundscore_A", "roundscore_B"};

struct CsvParseOptions {
    int set_number = 1;
    /// Known side assignment; skips inference when set.
    std::optional<SideMapping> players;
    /// Player names known from match metadata; fills a side whose player
    /// never scores in this set.
    std::vector<std::string> known_players;
};

/// Splits one CSV line on commas, honouring double-quoted fields; each
/// field is trimmed. Throws FieldCountMismatch on an unterminated quote.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quotes a field when it contains a comma, a quote, or edge whitespace.
std::string csv_quote(std::string_view field);

/// Parses one set. Throws Error with EmptyInput, MalformedHeader,
/// FieldCountMismatch or NonIntegerScore. Score progression is not checked
/// here; run validate_set on the result.
GameSet parse_set_csv(std::string_view text, const CsvParseOptions& options = {});

/// Which player's points land in which column. Requires a valid progression.
/// Throws InconsistentMapping, or AmbiguousMapping when only one player
/// scores and no `other_player` is known.
SideMapping infer_side_mapping(const std::vector<Rally>& rallies,
                               const std::optional<std::string>& other_player = std::nullopt);

ValidationReport validate_set(const GameSet& set);

/// Per-set validation plus match-level checks (set count, player names, date).
ValidationReport validate_match(const Match& match);

/// Column incremented by rally `index` relative to the previous row, or
/// nullopt when the step is not exactly one +1 on one side.
std::optional<Side> incremented_side(const std::vector<Rally>& rallies, std::size_t index);

/// Loads a match from a directory holding `match.json` (or from the JSON
/// file itself): {match_id, tournament, date, player_A, player_B, set_files[]}.
Match load_match(const std::filesystem::path& path);

/// Every match directory under `root` (those containing match.json), sorted by path.
std::vector<Match> load_matches(const std::filesystem::path& root);

}  // namespace badge
