// Runs every primary acceptance criterion and prints one PASS/FAIL/SKIP line each.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "badge/annotation_service.hpp"
#include "badge/evaluator.hpp"
#include "badge/generation.hpp"
#include "badge/human_eval.hpp"
#include "badge/match_data.hpp"
#include "badge/prompt_builder.hpp"
#include "badge/stats_engine.hpp"
#include "badge/util.hpp"
#include "test_support.hpp"

using namespace badge;
using nlohmann::json;

namespace {

struct Skip {
    std::string why;
};

// Throws std::runtime_error with `what` when `ok` is false.
void expect(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error(what);
}

template <class F>
ErrorCode code_of(F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    throw std::runtime_error("expected an error, none was thrown");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void aggregation_arithmetic() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::pair<std::array<double, 4>, double> cases[] = {
        {{8.4, 9.2, 8.0, 8.9}, 8.625},
        {{7.5, 8.9, 6.8, 8.5}, 7.925},
        {{8.3, 8.2, 8.0, 8.4}, 8.225},
    };
    for (const auto& [means, expected] : cases) {
        const auto row = make_row("row", means);
        expect(std::abs(row.overall - expected) <= 1e-9, "overall " + fmt(row.overall) + " != " + fmt(expected));

        // The same means pushed through aggregate() as single-record groups.
        EvaluationRecord r;
        for (std::size_t c = 0; c < kCriterionCount; ++c) r.scores[criteria()[c].name] = means[c];
        r.labels["writer"] = "w";
        const std::vector<EvaluationRecord> records{r};
        const auto rows = aggregate(records, Grouping::Writer);
        expect(std::abs(rows.at(0).overall - expected) <= 1e-9, "aggregate overall " + fmt(rows.at(0).overall));
    }
    expect(seconds_since(t0) < 1.0, "took longer than 1 s");
}

void stats_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20240601);
    for (int i = 0; i < 1000; ++i) {
        const auto gen = testing::random_set(rng, 5, 60);
        const auto parsed =
            parse_set_csv(gen.to_csv(), CsvParseOptions{1, std::nullopt, {gen.player_a, gen.player_b}});
        const auto diff = testing::compare_stats(gen, parsed);
        expect(diff.empty(), "set " + std::to_string(i) + ": " + diff);
    }
    expect(seconds_since(t0) < 10.0, "took longer than 10 s");
}

void golden_fixtures() {
    const auto sample = parse_set_csv(read_file(testing::source_dir() / "data" / "golden" / "sample_rows.csv"));
    const std::vector<std::tuple<std::string, int, int>> expected{
        {"Ratchanok Intanon", 0, 1}, {"An Se Young", 1, 1}, {"Ratchanok Intanon", 1, 2}};
    expect(sample.rallies.size() == 3, "sample rows did not parse to three rallies");
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& r = sample.rallies[i];
        expect(std::tuple(r.win_point_player, r.score_a, r.score_b) == expected[i],
               "sample row " + std::to_string(i + 1) + " differs");
    }
    const auto match = load_match(testing::fixtures_dir() / "match_01");
    const auto qa = render_qa(answer_questions(match.sets.at(0)));
    for (const char* line : {"A1: An Se Young won the game with 22 points.\n",
                             "A2: Ratchanok Intanon lost the game with 20 points.\n"}) {
        expect(qa.find(line) != std::string::npos, std::string("missing line: ") + line);
    }
}

std::vector<std::string> all_prompts(const std::vector<Match>& matches, const std::vector<Exemplar>& exemplars) {
    std::vector<std::string> out;
    for (const auto& m : matches) {
        for (auto dt : kAllDataTypes) {
            for (auto icl : kAllIclMethods) out.push_back(build_prompt(dt, icl, m, exemplars).render());
        }
    }
    return out;
}

void prompt_matrix() {
    const auto matches = load_matches(testing::fixtures_dir());
    const auto exemplars = load_exemplars(testing::source_dir() / "exemplars");
    expect(matches.size() == 10, "expected 10 fixture matches, found " + std::to_string(matches.size()));
    const auto first = all_prompts(matches, exemplars);
    const auto second = all_prompts(load_matches(testing::fixtures_dir()), load_exemplars(testing::source_dir() / "exemplars"));
    expect(first.size() == 80, "expected 80 prompts");
    expect(first == second, "prompts differ between two runs");
    expect(std::set<std::string>(first.begin(), first.end()).size() == 80, "duplicate prompts");
    for (const auto& m : matches) {
        const auto bundle = build_prompt(DataType::CSV, IclMethod::ZeroShot, m, exemplars);
        const auto sections = split_payload_sections(bundle.data_payload);
        expect(sections.size() == m.sets.size(), m.match_id + ": payload sections != sets");
        for (const auto& set : m.sets) {
            const auto parsed = parse_set_csv(sections.at(set.set_number),
                                              CsvParseOptions{set.set_number, SideMapping{set.player_a, set.player_b}, {}});
            expect(parsed == set, m.match_id + " set " + std::to_string(set.set_number) + " does not round-trip");
        }
    }
}

void end_to_end_mock() {
    const auto t0 = std::chrono::steady_clock::now();
    auto script = MockScript::load(testing::source_dir() / "config" / "mock_script.json");
    auto mock = std::make_shared<MockBackend>(script);
    ChatClient client(mock, BackendConfig{});
    const auto matches = load_matches(testing::fixtures_dir());
    const auto exemplars = load_exemplars(testing::source_dir() / "exemplars");
    GenerationConfig gen;
    gen.jobs = 4;
    const auto reports = run_matrix(matches, gen, GenerationContext{client, exemplars});
    expect(reports.failures.empty(), std::to_string(reports.failures.size()) + " generation failures");
    expect(reports.records.size() == 80, "expected 80 reports, got " + std::to_string(reports.records.size()));

    StepsCache cache;
    EvaluationConfig ev;
    ev.jobs = 4;
    const auto evals = evaluate_reports(reports.records, ev, client, cache);
    expect(evals.failures.empty(), std::to_string(evals.failures.size()) + " evaluation failures");
    expect(evals.records.size() == 80, "expected 80 evaluations");
    for (const auto& r : evals.records) {
        expect(r.scores.size() == 4, r.report_record_id + " lacks scores");
        r.validate();
    }
    expect(seconds_since(t0) < 60.0, "took longer than 60 s");
}

void pearson_suite() {
    auto near = [](double a, double b) { return std::abs(a - b) <= 1e-9; };
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<double> y{1, 3, 2, 4};
    const std::vector<double> rev{4, 3, 2, 1};
    expect(near(pearson(x, x), 1.0), "identity is not 1");
    expect(near(pearson(x, rev), -1.0), "reversed is not -1");
    expect(near(pearson(x, y), 0.8), "hand case gives " + fmt(pearson(x, y)));

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> value(-50, 50);
    std::uniform_real_distribution<double> scale(0.1, 20);
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 3 + rng() % 40;
        std::vector<double> a(n), b(n), a2(n), b2(n);
        const double sa = scale(rng), sb = scale(rng), ha = value(rng), hb = value(rng);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = value(rng);
            b[i] = value(rng);
            a2[i] = sa * a[i] + ha;
            b2[i] = sb * b[i] + hb;
        }
        const double r = pearson(a, b);
        expect(near(r, pearson(b, a)), "not symmetric on pair " + std::to_string(t));
        expect(near(r, pearson(a2, b2)), "not scale/shift invariant on pair " + std::to_string(t));
        expect(r >= -1.0 && r <= 1.0, "out of [-1, 1]");
    }
    const std::vector<double> flat{5, 5, 5, 5};
    expect(code_of([&] { pearson(flat, x); }) == ErrorCode::ConstantVector, "constant x accepted");
    expect(code_of([&] { pearson(x, flat); }) == ErrorCode::ConstantVector, "constant y accepted");
}

void guess_accuracy() {
    const auto session = create_session("match_07", testing::sample_reports("match_07"), 77);
    std::vector<HumanResponse> responses;
    for (int i = 0; i < 10; ++i) {
        responses.push_back(testing::response_for(session, "rater-" + std::to_string(i), 6,
                                                  {{Author::Human, i != 3 && i != 6},
                                                   {Author::Gpt35, i < 8},
                                                   {Author::Gpt4, i != 0 && i != 4 && i != 8}}));
        for (std::size_t k = 0; k < 3; ++k) {
            const int base = 4 + 2 * static_cast<int>(session.items[k].author);
            for (auto& [name, score] : responses.back().items[k].scores) score = base + i % 2;
        }
    }
    const std::vector<EvalSession> sessions{session};
    std::map<Author, CriterionMeans> machine;
    for (auto a : kAllAuthors) machine[a] = {7, 8, 6, static_cast<double>(7 + static_cast<int>(a))};
    const auto counts = guess_counts(sessions, responses);
    expect(counts.at(Author::Human) == std::pair{8, 10} && counts.at(Author::Gpt35) == std::pair{8, 10} &&
               counts.at(Author::Gpt4) == std::pair{7, 10},
           "guess counts are not 8/8/7 of 10");
    const auto stats = machine_human_agreement(machine, sessions, responses);
    const std::map<Author, double> expected{{Author::Human, 0.8}, {Author::Gpt35, 0.8}, {Author::Gpt4, 0.7}};
    for (const auto& [author, acc] : expected) {
        const double got = stats.guess_accuracy.at(author);
        expect(std::abs(got - acc) <= 1e-12, std::string(to_string(author)) + " accuracy " + fmt(got));
    }
}

void score_parser_fuzz() {
    std::mt19937_64 rng(1234);
    for (int i = 0; i < 500; ++i) {
        const int score = 1 + static_cast<int>(rng() % 10);
        const auto reply = testing::judge_response(rng, score);
        int got = 0;
        try {
            got = parse_score(reply.text);
        } catch (const Error& e) {
            throw std::runtime_error("reply " + std::to_string(i) + " rejected: " + e.what());
        }
        expect(got == reply.embedded, "reply " + std::to_string(i) + " parsed as " + std::to_string(got));
    }
    for (int bad : {0, 11, 12, 15, 20, 42, 99, 100, 1000, -1, -5, -10}) {
        for (int k = 0; k < 10; ++k) {
            const auto reply = testing::judge_response(rng, bad);
            expect(code_of([&] { parse_score(reply.text); }) == ErrorCode::ScoreOutOfRange,
                   "out-of-range value accepted: " + reply.text);
        }
    }
}

bool leaks(const json& j, const std::set<std::string>& hidden_values) {
    static const std::set<std::string> hidden_keys{"author", "true_author", "record_id", "shuffle_seed", "writer",
                                                   "model_id"};
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) {
            if (hidden_keys.contains(k) || leaks(v, hidden_values)) return true;
        }
    } else if (j.is_array()) {
        for (const auto& v : j) {
            if (leaks(v, hidden_values)) return true;
        }
    } else if (j.is_string()) {
        return hidden_values.contains(j.get<std::string>());
    }
    return false;
}

void blinding() {
    const auto matches = load_matches(testing::fixtures_dir());
    std::size_t scanned = 0;
    for (const auto& m : matches) {
        const auto reports = testing::sample_reports(m.match_id);
        std::set<std::string> hidden{"human", "gpt35", "gpt4"};
        for (const auto& r : reports) hidden.insert(r.record_id);
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            const auto wire = wire_session(create_session(m.match_id, reports, seed));
            expect(!leaks(wire, hidden), m.match_id + " seed " + std::to_string(seed) + " leaks authorship");
            for (const auto& item : wire.at("items")) {
                std::set<std::string> keys;
                for (const auto& [k, v] : item.items()) keys.insert(k);
                expect(keys == std::set<std::string>{"blind_label", "report_text"}, "unexpected item fields");
            }
            ++scanned;
        }
    }
    expect(scanned == 60, "scanned " + std::to_string(scanned) + " sessions");
}

void live_smoke() {
    const char* key = std::getenv("BADGE_API_KEY");
    if (key == nullptr || *key == '\0') throw Skip{"BADGE_API_KEY is not set"};
    BackendConfig cfg;
    ChatClient client(std::make_shared<HttpBackend>(cfg), cfg);
    const auto match = load_match(testing::fixtures_dir() / "match_01");
    const std::vector<Exemplar> none;
    const auto report = generate_report(match, {DataType::CSV, IclMethod::ZeroShot, "gpt-3.5-turbo-0125"},
                                        GenerationContext{client, none}, GenerationConfig{});
    StepsCache cache;
    const std::vector<ReportRecord> reports{report};
    const auto evals = evaluate_reports(reports, EvaluationConfig{}, client, cache);
    expect(evals.failures.empty(), "judge replies failed to parse");
    expect(evals.records.size() == 1, "no evaluation record");
    evals.records[0].validate();
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void()>>> criteria_list{
        {"aggregation arithmetic", aggregation_arithmetic},
        {"stats engine matches brute-force replay on 1000 sets", stats_oracle},
        {"golden fixtures", golden_fixtures},
        {"prompt matrix totality and determinism", prompt_matrix},
        {"end-to-end mock pipeline (80 reports, 4 scores each)", end_to_end_mock},
        {"pearson suite", pearson_suite},
        {"guess accuracy 0.8/0.8/0.7", guess_accuracy},
        {"score parser fuzz", score_parser_fuzz},
        {"blinded sessions carry no authorship", blinding},
        {"live smoke (real API)", live_smoke},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria_list) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string status = "PASS";
        std::string detail;
        try {
            fn();
        } catch (const Skip& s) {
            status = "SKIP";
            detail = s.why;
        } catch (const std::exception& e) {
            status = "FAIL";
            detail = e.what();
            ++failed;
        }
        std::cout << status << "  " << name << "  (" << static_cast<int>(seconds_since(t0) * 1000) << " ms)";
        if (!detail.empty()) std::cout << "  " << detail;
        std::cout << "\n";
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
    return failed == 0 ? 0 : 1;
}
