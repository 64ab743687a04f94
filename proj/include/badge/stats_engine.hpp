#pragma once

// Rule-based set analytics: final score, per-player tallies, lead changes,
// closing rally, and the eight-question Q&A view of a set.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "badge/match_data.hpp"

namespace badge {

struct ScoreSummary {
    std::string winner;
    int winner_points = 0;
    std::string loser;
    int loser_points = 0;

    bool operator==(const ScoreSummary&) const = default;
};

/// Category counts kept in order of first occurrence, so "most frequent"
/// ties break towards the category seen earliest in the set.
class CategoryCounts {
public:
    struct Entry {
        std::string category;
        int count = 0;
        std::size_t first_rally = 0;

        bool operator==(const Entry&) const = default;
    };

    void add(const std::string& category, std::size_t rally_index);
    int count(const std::string& category) const;
    int total() const;
    bool empty() const noexcept { return entries_.empty(); }
    /// Highest count; ties go to the earliest first occurrence.
    std::optional<Entry> most_frequent() const;
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::map<std::string, int> as_map() const;

    bool operator==(const CategoryCounts&) const = default;

private:
    std::vector<Entry> entries_;
};

struct PlayerTally {
    CategoryCounts win_reasons;   // rallies this player won
    CategoryCounts ball_types;    // decisive stroke on rallies this player won
    CategoryCounts lose_reasons;  // rallies this player lost

    bool operator==(const PlayerTally&) const = default;
};

struct TallyTable {
    std::map<std::string, PlayerTally> players;

    /// Tally for `player`; an empty tally for names with no rallies.
    const PlayerTally& of(const std::string& player) const;

    bool operator==(const TallyTable&) const = default;
};

struct LeadChangeEvent {
    std::size_t rally_index = 0;
    std::string scorer;
    std::pair<int, int> score_after;  // (scorer's points, opponent's points)
    std::string ball_type;

    bool operator==(const LeadChangeEvent&) const = default;
};

struct ClosingRally {
    std::string scorer;
    std::string ball_type;
    std::string win_reason;
    std::string lose_reason;
    std::pair<int, int> final_score;  // (scorer's points, opponent's points)

    bool operator==(const ClosingRally&) const = default;
};

struct QAPair {
    std::string question;
    std::string answer;

    bool operator==(const QAPair&) const = default;
};

using QASet = std::array<QAPair, 8>;

/// Throws TiedFinalScore when the last rally has equal columns, InvalidSet
/// for an empty set.
ScoreSummary final_score(const GameSet& set);

TallyTable tally(const GameSet& set);

/// Rallies where the scorer goes from tied-or-behind to strictly ahead.
/// The opening rally always qualifies.
std::vector<LeadChangeEvent> lead_changes(const GameSet& set);

ClosingRally closing_rally(const GameSet& set);

/// Fills the eight fixed question templates. Throws InvalidSet when the set
/// does not validate.
QASet answer_questions(const GameSet& set);

/// "Q1: ...\nA1: ...\n" through "Q8: ...\nA8: ...\n".
std::string render_qa(const QASet& qa);

}  // namespace badge
