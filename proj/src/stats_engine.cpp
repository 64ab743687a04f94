#include "badge/stats_engine.hpp"

#include <algorithm>

#include "badge/error.hpp"

namespace badge {

namespace {

const std::array<std::string, 8> kQuestions = {
    "Which player won the game? How many points did the winner get?",
    "Which player lost the game? How many points did the loser get?",
    "How did the winner win most of the points? How many points were won this way?",
    "How did the loser lose most of the points? How many points were lost this way?",
    "Which ball type did the winner score with most often? How many points?",
    "Which ball type did the loser score with most often? How many points?",
    "When did the last lead change happen, and with which ball type?",
    "How did the game end?",
};

std::string points(int n) { return std::to_string(n) + (n == 1 ? " point" : " points"); }

std::string score_text(std::pair<int, int> s) {
    return std::to_string(s.first) + "-" + std::to_string(s.second);
}

void require_valid(const GameSet& set) {
    const auto report = validate_set(set);
    if (!report.ok()) {
        const auto& e = report.errors.front();
        std::string where = e.rally_index ? "rally " + std::to_string(*e.rally_index) + ": " : "";
        throw Error(ErrorCode::InvalidSet, "set " + std::to_string(set.set_number) + " invalid (" +
                                               e.rule + "): " + where + e.message);
    }
}

}  // namespace

void CategoryCounts::add(const std::string& category, std::size_t rally_index) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Entry& e) { return e.category == category; });
    if (it == entries_.end()) {
        entries_.push_back({category, 1, rally_index});
    } else {
        ++it->count;
    }
}

int CategoryCounts::count(const std::string& category) const {
    for (const auto& e : entries_) {
        if (e.category == category) return e.count;
    }
    return 0;
}

int CategoryCounts::total() const {
    int sum = 0;
    for (const auto& e : entries_) sum += e.count;
    return sum;
}

std::optional<CategoryCounts::Entry> CategoryCounts::most_frequent() const {
    // entries_ is in first-occurrence order, so a strict '>' keeps the earliest on ties.
    const Entry* best = nullptr;
    for (const auto& e : entries_) {
        if (!best || e.count > best->count) best = &e;
    }
    if (!best) return std::nullopt;
    return *best;
}

std::map<std::string, int> CategoryCounts::as_map() const {
    std::map<std::string, int> out;
    for (const auto& e : entries_) out.emplace(e.category, e.count);
    return out;
}

const PlayerTally& TallyTable::of(const std::string& player) const {
    static const PlayerTally kEmpty;
    auto it = players.find(player);
    return it == players.end() ? kEmpty : it->second;
}

ScoreSummary final_score(const GameSet& set) {
    if (set.rallies.empty()) throw Error(ErrorCode::InvalidSet, "set has no rallies");
    const auto& last = set.rallies.back();
    if (last.score_a == last.score_b) {
        throw Error(ErrorCode::TiedFinalScore,
                    "set " + std::to_string(set.set_number) + " ends tied at " +
                        std::to_string(last.score_a) + "-" + std::to_string(last.score_b));
    }
    if (last.score_a > last.score_b) {
        return {set.player_a, last.score_a, set.player_b, last.score_b};
    }
    return {set.player_b, last.score_b, set.player_a, last.score_a};
}

TallyTable tally(const GameSet& set) {
    TallyTable table;
    table.players[set.player_a];
    table.players[set.player_b];
    for (std::size_t i = 0; i < set.rallies.size(); ++i) {
        const auto& r = set.rallies[i];
        auto& winner = table.players[r.win_point_player];
        winner.win_reasons.add(r.win_reason, i);
        winner.ball_types.add(r.ball_type, i);
        table.players[set.opponent_of(r.win_point_player)].lose_reasons.add(r.lose_reason, i);
    }
    return table;
}

std::vector<LeadChangeEvent> lead_changes(const GameSet& set) {
    std::vector<LeadChangeEvent> events;
    int a = 0;
    int b = 0;
    for (std::size_t i = 0; i < set.rallies.size(); ++i) {
        const auto& r = set.rallies[i];
        const bool scorer_is_a = set.side_of(r.win_point_player) == Side::A;
        const int before_self = scorer_is_a ? a : b;
        const int before_other = scorer_is_a ? b : a;
        a = r.score_a;
        b = r.score_b;
        const int after_self = scorer_is_a ? a : b;
        const int after_other = scorer_is_a ? b : a;
        if (before_self <= before_other && after_self > after_other) {
            events.push_back({i, r.win_point_player, {after_self, after_other}, r.ball_type});
        }
    }
    return events;
}

ClosingRally closing_rally(const GameSet& set) {
    if (set.rallies.empty()) throw Error(ErrorCode::InvalidSet, "set has no rallies");
    const auto& r = set.rallies.back();
    const bool scorer_is_a = set.side_of(r.win_point_player) == Side::A;
    const std::pair<int, int> score = scorer_is_a ? std::pair{r.score_a, r.score_b}
                                                  : std::pair{r.score_b, r.score_a};
    return {r.win_point_player, r.ball_type, r.win_reason, r.lose_reason, score};
}

QASet answer_questions(const GameSet& set) {
    require_valid(set);
    const auto score = final_score(set);
    const auto counts = tally(set);
    const auto events = lead_changes(set);
    const auto closing = closing_rally(set);
    const auto& winner = counts.of(score.winner);
    const auto& loser = counts.of(score.loser);

    QASet qa;
    for (std::size_t i = 0; i < qa.size(); ++i) qa[i].question = kQuestions[i];

    qa[0].answer = score.winner + " won the game with " + points(score.winner_points) + ".";
    qa[1].answer = score.loser + " lost the game with " + points(score.loser_points) + ".";

    const auto win_reason = *winner.win_reasons.most_frequent();
    qa[2].answer = score.winner + " won " + points(win_reason.count) + " by " + win_reason.category + ".";

    const auto lose_reason = *loser.lose_reasons.most_frequent();
    qa[3].answer = score.loser + " lost " + points(lose_reason.count) + " by " + lose_reason.category + ".";

    const auto winner_ball = *winner.ball_types.most_frequent();
    qa[4].answer = score.winner + " scored " + points(winner_ball.count) + " with " + winner_ball.category + ".";

    if (const auto loser_ball = loser.ball_types.most_frequent()) {
        qa[5].answer =
            score.loser + " scored " + points(loser_ball->count) + " with " + loser_ball->category + ".";
    } else {
        qa[5].answer = score.loser + " did not win any points.";
    }

    if (events.size() == 1 && events.front().rally_index == 0) {
        qa[6].answer = "The leader never changed.";
    } else {
        const auto& last = events.back();
        qa[6].answer = last.scorer + " took the lead at " + score_text(last.score_after) + " with " +
                       last.ball_type + ".";
    }

    qa[7].answer = closing.scorer + " ended the game at " + score_text(closing.final_score) + " with " +
                   closing.ball_type + ", " + closing.win_reason + ".";
    return qa;
}

std::string render_qa(const QASet& qa) {
    std::string out;
    for (std::size_t i = 0; i < qa.size(); ++i) {
        const auto n = std::to_string(i + 1);
        out += "Q" + n + ": " + qa[i].question + "\n";
        out += "A" + n + ": " + qa[i].answer + "\n";
    }
    return out;
}

}  // namespace badge
