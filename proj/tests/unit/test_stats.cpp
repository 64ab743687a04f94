#include <doctest.h>

#include <algorithm>

#include "badge/error.hpp"
#include "badge/stats_engine.hpp"
#include "badge/util.hpp"
#include "test_support.hpp"

using namespace badge;

namespace {

GameSet straight_set(int points) {
    GameSet s;
    s.player_a = "P";
    s.player_b = "Q";
    for (int i = 1; i <= points; ++i) s.rallies.push_back({"P", "wins by landing", "smash", "opponent wins by landing", i, 0});
    return s;
}

}  // namespace

TEST_SUITE("stats_engine") {

TEST_CASE("golden set answers") {
    const auto match = load_match(testing::fixtures_dir() / "match_01");
    const auto qa = render_qa(answer_questions(match.sets.at(0)));
    CHECK(qa.starts_with("Q1: Which player won the game? How many points did the winner get?\n"
                         "A1: An Se Young won the game with 22 points.\n"
                         "Q2: Which player lost the game? How many points did the loser get?\n"
                         "A2: Ratchanok Intanon lost the game with 20 points.\n"));
    CHECK(qa.find("A8: An Se Young ended the game at 22-20 with ") != std::string::npos);
    CHECK(std::count(qa.begin(), qa.end(), '\n') == 16);
}

TEST_CASE("random sets agree with a brute-force replay") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const auto gen = testing::random_set(rng, 5, 60);
        const auto parsed = parse_set_csv(gen.to_csv(), CsvParseOptions{1, std::nullopt, {gen.player_a, gen.player_b}});
        CAPTURE(i);
        CHECK(testing::compare_stats(gen, parsed) == "");
    }
}

TEST_CASE("most_frequent breaks ties towards the earliest category") {
    CategoryCounts c;
    c.add("lob", 0);
    c.add("smash", 1);
    c.add("smash", 2);
    c.add("lob", 3);
    REQUIRE(c.most_frequent().has_value());
    CHECK(c.most_frequent()->category == "lob");
    CHECK(c.total() == 4);
    c.add("smash", 4);
    CHECK(c.most_frequent()->category == "smash");
    CHECK(CategoryCounts{}.most_frequent() == std::nullopt);
}

TEST_CASE("tied final score") {
    GameSet s;
    s.player_a = "P";
    s.player_b = "Q";
    s.rallies = {{"P", "w", "lob", "l", 1, 0}, {"Q", "w", "lob", "l", 1, 1}};
    try {
        final_score(s);
        FAIL("expected TiedFinalScore");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TiedFinalScore);
    }
}

TEST_CASE("a shutout set") {
    const auto qa = answer_questions(straight_set(21));
    CHECK(qa[0].answer == "P won the game with 21 points.");
    CHECK(qa[1].answer == "Q lost the game with 0 points.");
    CHECK(qa[5].answer == "Q did not win any points.");
    CHECK(qa[6].answer == "The leader never changed.");
    CHECK(qa[7].answer == "P ended the game at 21-0 with smash, wins by landing.");
}

TEST_CASE("singular point") {
    GameSet s;
    s.player_a = "P";
    s.player_b = "Q";
    s.rallies = {{"Q", "w", "lob", "l", 0, 1}, {"P", "w", "drop", "l", 1, 1}, {"P", "w", "drop", "l", 2, 1}};
    const auto qa = answer_questions(s);
    CHECK(qa[1].answer == "Q lost the game with 1 point.");
    CHECK(qa[6].answer == "P took the lead at 2-1 with drop.");
}

TEST_CASE("invalid sets are refused") {
    auto s = straight_set(3);
    s.rallies[1].score_a = 5;
    try {
        answer_questions(s);
        FAIL("expected InvalidSet");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidSet);
    }
}

}
