#pragma once

// Helpers shared by the unit tests and the acceptance runner. The replay
// functions here recompute set statistics from the generator's own record of
// who won each rally; they never read the library's parsed columns.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "badge/human_eval.hpp"
#include "badge/match_data.hpp"
#include "badge/stats_engine.hpp"

namespace badge::testing {

std::filesystem::path source_dir();
std::filesystem::path fixtures_dir();

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

struct GeneratedRally {
    bool side_a_scored = false;
    std::string win_reason;
    std::string ball;
    std::string lose_reason;
};

struct GeneratedSet {
    std::string player_a;
    std::string player_b;
    std::vector<GeneratedRally> rallies;

    std::string scorer(std::size_t i) const { return rallies[i].side_a_scored ? player_a : player_b; }
    std::string to_csv() const;
};

/// A legal set of [min_rallies, max_rallies] rallies (shorter if the game is
/// decided first) whose final score is never tied.
GeneratedSet random_set(std::mt19937_64& rng, int min_rallies, int max_rallies);

struct Replay {
    std::string winner;
    std::string loser;
    int winner_points = 0;
    int loser_points = 0;
    // player -> category -> count
    std::map<std::string, std::map<std::string, int>> win_reasons;
    std::map<std::string, std::map<std::string, int>> balls;
    std::map<std::string, std::map<std::string, int>> lose_reasons;
    // (rally, scorer, scorer points, opponent points, ball)
    std::vector<std::tuple<std::size_t, std::string, int, int, std::string>> lead_changes;
    std::tuple<std::string, std::string, std::string, std::string, int, int> closing;
};

Replay replay(const GeneratedSet& set);

/// Empty when every library statistic of `parsed` agrees with the replay;
/// otherwise a description of the first disagreement.
std::string compare_stats(const GeneratedSet& generated, const GameSet& parsed);

struct JudgeText {
    std::string text;
    int embedded = 0;
};

/// A judge-style reply embedding `score`, in one of several phrasings.
JudgeText judge_response(std::mt19937_64& rng, int score);

/// Three reports with distinct authors, for session tests.
std::array<AuthoredReport, 3> sample_reports(const std::string& match_id);

/// One complete response where every score is `score` and each item's guess
/// is its true author when `correct` says so, otherwise the next author.
HumanResponse response_for(const EvalSession& session, const std::string& rater, int score,
                           const std::map<Author, bool>& correct);

}  // namespace badge::testing
