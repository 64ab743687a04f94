#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "badge/human_eval.hpp"
#include "test_support.hpp"

using namespace badge;
using badge::testing::response_for;
using badge::testing::sample_reports;
using nlohmann::json;

namespace {

ErrorCode code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
}

std::set<std::string> pointers(const std::vector<FieldError>& errors) {
    std::set<std::string> out;
    for (const auto& e : errors) out.insert(e.pointer);
    return out;
}

double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

std::map<Author, bool> all_correct() { return {{Author::Human, true}, {Author::Gpt35, true}, {Author::Gpt4, true}}; }

}  // namespace

TEST_SUITE("human_eval") {

TEST_CASE("author names") {
    CHECK(parse_author("GPT-3.5") == Author::Gpt35);
    CHECK(parse_author("gpt_4") == Author::Gpt4);
    CHECK(parse_author("Human") == Author::Human);
    CHECK(code_of([] { parse_author("claude"); }) == ErrorCode::ConfigError);
    CHECK(author_from_writer("gpt-3.5-turbo-0125") == Author::Gpt35);
    CHECK(author_from_writer("gpt-4-turbo-2024-04-09") == Author::Gpt4);
    CHECK(author_from_writer("human") == Author::Human);
    CHECK_FALSE(author_from_writer("llama-3").has_value());
}

TEST_CASE("sessions hide authors behind a seeded shuffle") {
    const auto reports = sample_reports("match_03");
    std::set<std::array<std::size_t, 3>> seen;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto perm = session_permutation(seed);
        CHECK(perm == session_permutation(seed));
        auto sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::array<std::size_t, 3>{0, 1, 2});
        seen.insert(perm);

        const auto s = create_session("match_03", reports, seed);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(s.items[i].blind_label == "Report " + std::to_string(i + 1));
            CHECK(s.items[i].author == reports[perm[i]].author);
            CHECK(s.items[i].report_text == reports[perm[i]].text);
        }
        const auto back = EvalSession::from_json(s.to_json());
        CHECK(back.to_json() == s.to_json());
    }
    CHECK(seen.size() == 6);
    CHECK(create_session("match_03", reports, 1).session_id == create_session("match_03", reports, 1).session_id);
    CHECK(create_session("match_03", reports, 1).session_id != create_session("match_03", reports, 2).session_id);

    auto dup = reports;
    dup[2].author = Author::Gpt35;
    CHECK(code_of([&] { create_session("match_03", dup, 0); }) == ErrorCode::DuplicateAuthor);
}

TEST_CASE("response checks point at the offending fields") {
    const auto s = create_session("match_01", sample_reports("match_01"), 4);
    auto ok = response_for(s, "rater-a", 7, all_correct());
    CHECK(check_response(s, ok).empty());

    auto bad = ok;
    bad.items[0].scores["coherence"] = 0;
    bad.items[1].scores.erase("fluency");
    bad.items[2].author_guess.reset();
    const auto errors = check_response(s, bad);
    CHECK(pointers(errors) ==
          std::set<std::string>{"/items/0/scores/coherence", "/items/1/scores/fluency", "/items/2/author_guess"});
    for (const auto& e : errors) {
        if (e.pointer == "/items/0/scores/coherence") CHECK(e.code == ErrorCode::ScoreOutOfRange);
        else CHECK(e.code == ErrorCode::IncompleteResponse);
    }

    auto short_one = ok;
    short_one.items.pop_back();
    CHECK(pointers(check_response(s, short_one)) == std::set<std::string>{"/items"});

    auto twice = ok;
    twice.items[1].blind_label = twice.items[0].blind_label;
    CHECK(pointers(check_response(s, twice)).contains("/items/1/blind_label"));

    auto other = ok;
    other.session_id = "s-elsewhere";
    other.rater_id = "";
    CHECK(pointers(check_response(s, other)) == std::set<std::string>{"/session_id", "/rater_id"});
}

TEST_CASE("wire parsing reports type errors by pointer") {
    auto parse_error = [](const json& j) -> std::string {
        try {
            HumanResponse::from_json(j);
        } catch (const ResponseError& e) {
            REQUIRE_FALSE(e.fields().empty());
            return e.fields().front().pointer;
        }
        return "";
    };
    CHECK(parse_error(json{{"items", json::array()}}) == "/rater_id");
    CHECK(parse_error(json{{"rater_id", "r"}, {"items", 3}}) == "/items");
    CHECK(parse_error(json{{"rater_id", "r"},
                           {"items", {{{"blind_label", "Report 1"}, {"scores", {{"coherence", "high"}}}}}}}) ==
          "/items/0/scores/coherence");
    CHECK(parse_error(json{{"rater_id", "r"},
                           {"items", {{{"blind_label", "Report 1"}, {"scores", {{"coherence", 7.5}}}}}}}) ==
          "/items/0/scores/coherence");
    CHECK(parse_error(json{{"rater_id", "r"},
                           {"items",
                            {{{"blind_label", "Report 1"}, {"scores", json::object()}, {"author_guess", "bard"}}}}}) ==
          "/items/0/author_guess");

    const auto s = create_session("match_01", sample_reports("match_01"), 9);
    const auto r = response_for(s, "rater-z", 5, all_correct());
    const auto back = HumanResponse::from_json(r.to_json());
    CHECK(back.to_json() == r.to_json());
}

TEST_CASE("store keeps the latest response per rater and survives reopening") {
    testing::TempDir tmp;
    const auto s = create_session("match_05", sample_reports("match_05"), 3);
    {
        HumanEvalStore store(tmp.path() / "human");
        store.save_session(s);
        CHECK(store.find_session(s.session_id).has_value());
        CHECK_FALSE(store.find_session("s-unknown").has_value());
        CHECK_FALSE(store.find_session("../escape").has_value());

        const auto first = store.record_response(response_for(s, "rater-a", 6, all_correct()));
        CHECK_FALSE(first.superseded);
        const auto second = store.record_response(response_for(s, "rater-a", 9, all_correct()));
        CHECK(second.superseded);
        CHECK(second.response_id == first.response_id);
        store.record_response(response_for(s, "rater-b", 4, all_correct()));

        auto unknown = response_for(s, "rater-c", 5, all_correct());
        unknown.session_id = "s-000000000000";
        CHECK(code_of([&] { store.record_response(unknown); }) == ErrorCode::UnknownSession);

        auto bad = response_for(s, "rater-c", 5, all_correct());
        bad.items[0].scores["fluency"] = 11;
        try {
            store.record_response(bad);
            FAIL("expected ResponseError");
        } catch (const ResponseError& e) {
            CHECK(e.code() == ErrorCode::ScoreOutOfRange);
            CHECK(e.fields().front().pointer == "/items/0/scores/fluency");
        }
        bad.items[0].scores.erase("fluency");
        CHECK(code_of([&] { store.record_response(bad); }) == ErrorCode::IncompleteResponse);
    }

    HumanEvalStore reopened(tmp.path() / "human");
    CHECK(reopened.sessions().size() == 1);
    const auto responses = reopened.responses(s.session_id);
    REQUIRE(responses.size() == 2);
    for (const auto& r : responses) {
        CHECK_FALSE(r.submitted_at.empty());
        if (r.rater_id == "rater-a") CHECK(r.items[0].scores.at("coherence") == 9);
    }
    std::ifstream log(reopened.supersession_log());
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        ++lines;
        CHECK(json::parse(line).at("rater_id") == "rater-a");
    }
    CHECK(lines == 1);
}

TEST_CASE("pearson") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const std::vector<double> y{2, 1, 4, 3, 5};
    CHECK(pearson(x, y) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(pearson(x, x) == doctest::Approx(1.0));
    const std::vector<double> neg{10, 8, 6, 4, 2};
    CHECK(pearson(x, neg) == doctest::Approx(-1.0));
    const std::vector<double> flat{3, 3, 3, 3, 3};
    CHECK(code_of([&] { pearson(x, flat); }) == ErrorCode::ConstantVector);
    CHECK(code_of([&] { pearson(x, std::vector<double>{1, 2}); }) == ErrorCode::LengthMismatch);
    CHECK(code_of([] { pearson(std::vector<double>{1}, std::vector<double>{2}); }) == ErrorCode::TooFewPoints);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(1, 10);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(12), b(12);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = d(rng);
            b[i] = d(rng);
        }
        CHECK(pearson(a, b) == doctest::Approx(naive_pearson(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("author guesses") {
    const auto s = create_session("match_02", sample_reports("match_02"), 17);
    std::vector<HumanResponse> responses;
    for (int i = 0; i < 10; ++i) {
        responses.push_back(response_for(s, "rater-" + std::to_string(i), 7,
                                         {{Author::Human, i < 8}, {Author::Gpt35, i >= 2}, {Author::Gpt4, i % 10 < 7}}));
    }
    const std::vector<EvalSession> sessions{s};
    const auto counts = guess_counts(sessions, responses);
    CHECK(counts.at(Author::Human) == std::pair{8, 10});
    CHECK(counts.at(Author::Gpt35) == std::pair{8, 10});
    CHECK(counts.at(Author::Gpt4) == std::pair{7, 10});
}

TEST_CASE("machine and human agreement") {
    std::vector<EvalSession> sessions;
    std::vector<HumanResponse> responses;
    const std::map<Author, int> level{{Author::Human, 5}, {Author::Gpt35, 7}, {Author::Gpt4, 9}};
    for (int m = 0; m < 3; ++m) {
        const auto id = "match_0" + std::to_string(m + 1);
        sessions.push_back(create_session(id, sample_reports(id), static_cast<std::uint64_t>(m)));
        for (int r = 0; r < 2; ++r) {
            auto resp = response_for(sessions.back(), "rater-" + std::to_string(r), 1, all_correct());
            for (std::size_t i = 0; i < 3; ++i) {
                const auto author = sessions.back().items[i].author;
                int c = 0;
                for (auto& [name, score] : resp.items[i].scores) score = level.at(author) + (c++ % 2);
            }
            responses.push_back(resp);
        }
    }
    const auto human = human_means(sessions, responses);
    CHECK(human.at(Author::Gpt4).means[criterion_index("coherence")] == doctest::Approx(9));
    CHECK(human.at(Author::Gpt4).means[criterion_index("consistency")] == doctest::Approx(10));
    CHECK(human.at(Author::Human).n_responses == 6);

    std::map<Author, CriterionMeans> machine;
    for (const auto& [author, m] : human) machine[author] = m.means;
    const auto stats = machine_human_agreement(machine, sessions, responses);
    CHECK(stats.pearson_r == doctest::Approx(1.0));
    CHECK(stats.cells.size() == 12);
    CHECK(stats.guess_accuracy.at(Author::Gpt35) == doctest::Approx(1.0));

    const auto per = machine_human_agreement(machine, sessions, responses, Pairing::PerResponse);
    CHECK(per.machine.size() == 3 * 2 * 3 * 4);
    CHECK(per.pearson_r == doctest::Approx(1.0));

    std::map<Author, CriterionMeans> shifted;
    for (const auto& [author, m] : machine) {
        for (std::size_t c = 0; c < kCriterionCount; ++c) shifted[author][c] = 2 * m[c] - 3;
    }
    CHECK(machine_human_agreement(shifted, sessions, responses).pearson_r == doctest::Approx(1.0));

    CHECK(code_of([&] { machine_human_agreement({}, sessions, responses); }) == ErrorCode::NoOverlap);
    CHECK(code_of([&] { human_means(sessions, {}); }) == ErrorCode::NoResponses);

    const auto csv = export_responses_csv(sessions, responses);
    CHECK(csv.starts_with("session_id,rater_id,blind_label,true_author,coherence,consistency,excitement,fluency,"
                          "author_guess,submitted_at"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 * 3);
}

TEST_CASE("machine means follow the writer label") {
    std::vector<EvaluationRecord> records(3);
    const char* writers[] = {"gpt-4-turbo-2024-04-09", "gpt-4-turbo-2024-04-09", "llama"};
    for (std::size_t i = 0; i < 3; ++i) {
        for (const auto& c : criteria()) records[i].scores[c.name] = 4.0 + 2.0 * static_cast<double>(i);
        records[i].labels["writer"] = writers[i];
    }
    const auto means = machine_means_by_author(records);
    REQUIRE(means.size() == 1);
    CHECK(means.at(Author::Gpt4)[0] == doctest::Approx(5.0));
}

}
