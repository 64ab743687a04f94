#include <doctest.h>

#include <fstream>
#include <sstream>

#include "badge/human_eval.hpp"
#include "badge/run_store.hpp"
#include "badge/util.hpp"
#include "cli.hpp"
#include "test_support.hpp"

using namespace badge;
using nlohmann::json;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::size_t count_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) return 0;
    return static_cast<std::size_t>(std::distance(std::filesystem::directory_iterator(dir), {}));
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

std::filesystem::path write_config(const std::filesystem::path& dir, const json& generation) {
    json cfg{{"data_dir", testing::fixtures_dir().string()},
             {"runs_dir", (dir / "ignored-runs").string()},
             {"generation", generation},
             {"evaluation", {{"judge_model", "gpt-4-turbo-2024-04-09"}, {"n_samples", 1}}},
             {"backend", {{"kind", "mock"}, {"mock_script", (testing::source_dir() / "config" / "mock_script.json").string()}}}};
    cfg["generation"]["exemplar_dir"] = (testing::source_dir() / "exemplars").string();
    const auto path = dir / "pipeline.json";
    std::ofstream(path) << cfg.dump(2);
    return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help for every subcommand") {
    testing::TempDir tmp;
    const auto runs = (tmp.path() / "runs").string();
    for (std::vector<std::string> cmd :
         {std::vector<std::string>{"--help"}, {"validate", "--help"}, {"qa", "--help"}, {"prompt", "--help"},
          {"generate", "--help"}, {"evaluate", "--help"}, {"aggregate", "--help"}, {"import-human", "--help"},
          {"sessions", "--help"}, {"sessions", "create", "--help"}, {"serve", "--help"}, {"agreement", "--help"}}) {
        cmd.insert(cmd.begin(), {"--runs-dir", runs});
        const auto r = run(cmd);
        CAPTURE(cmd.back());
        CHECK(r.code == 0);
        CHECK_FALSE(r.out.empty());
    }
    CHECK_FALSE(std::filesystem::exists(runs));
    CHECK(run({"--version"}).out.find(version()) != std::string::npos);
    CHECK(run({}).code == kExitConfig);
    CHECK(run({"dance"}).code == kExitConfig);
}

TEST_CASE("validate and qa") {
    const auto set = testing::fixtures_dir() / "match_01" / "set_1.csv";
    const auto ok = run({"validate", (testing::fixtures_dir() / "match_01").string()});
    CHECK(ok.code == 0);
    CHECK(ok.out == "match_01: ok\n");

    const auto qa = run({"qa", set.string()});
    CHECK(qa.code == 0);
    CHECK(qa.out.starts_with("Q1: Which player won the game?"));
    CHECK(qa.out.find("A1: An Se Young won the game with 22 points.") != std::string::npos);

    testing::TempDir tmp;
    std::ifstream in(set);
    std::stringstream text;
    text << in.rdbuf();
    auto lines = lines_of(text.str());
    // A set where the third rally jumps the score by two.
    std::string corrupted;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string line = lines[i];
        if (i == 3) {
            auto fields = std::vector<std::string>{};
            std::stringstream ls(line);
            for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
            REQUIRE(fields.size() == 6);
            auto& score_a = fields[fields.size() - 2];
            score_a = std::to_string(std::stoi(score_a) + 2);
            line.clear();
            for (std::size_t k = 0; k < fields.size(); ++k) line += (k ? "," : "") + fields[k];
        }
        corrupted += line + "\n";
    }
    const auto bad_path = tmp.path() / "set_1.csv";
    std::ofstream(bad_path) << corrupted;
    const auto bad = run({"validate", bad_path.string()});
    CHECK(bad.code == kExitValidation);
    CHECK(bad.err.find("rally") != std::string::npos);

    CHECK(run({"validate", (tmp.path() / "absent").string()}).code == kExitRuntime);
}

TEST_CASE("prompt") {
    const auto r = run({"prompt", (testing::fixtures_dir() / "match_02").string(), "--data-type", "qa", "--icl",
                        "few_shot", "--exemplars", (testing::source_dir() / "exemplars").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("You are a reporter for badminton games.") != std::string::npos);
    CHECK(r.out.find("Q1: Which player won the game?") != std::string::npos);

    testing::TempDir empty;
    const auto none = run({"prompt", (testing::fixtures_dir() / "match_02").string(), "--icl", "one_shot",
                           "--exemplars", empty.path().string()});
    CHECK(none.code == kExitConfig);
}

TEST_CASE("the full mock pipeline") {
    testing::TempDir tmp;
    const auto runs = tmp.path() / "runs";
    const auto config = write_config(tmp.path(), {{"data_types", {"csv", "qa"}},
                                                  {"icl_methods", {"zero_shot", "one_shot", "few_shot", "cot"}},
                                                  {"model_ids", {"gpt-3.5-turbo-0125"}},
                                                  {"jobs", 3}});
    const auto gen = run({"--runs-dir", runs.string(), "generate", "--config", config.string(), "--run-id", "r1"});
    REQUIRE(gen.code == 0);
    CHECK(gen.out == "r1\n");
    CHECK(count_files(runs / "r1" / "reports") == 80);
    CHECK(std::filesystem::exists(runs / "r1" / "manifest.json"));
    CHECK(std::filesystem::exists(runs / "r1" / "journal.jsonl"));
    CHECK_FALSE(std::filesystem::exists(tmp.path() / "ignored-runs"));

    const auto manifest = RunStore::open(runs, "r1").manifest();
    CHECK(manifest.match_ids.size() == 10);
    CHECK(manifest.backend["kind"] == "mock");

    const auto again = run({"--runs-dir", runs.string(), "generate", "--config", config.string(), "--run-id", "r1"});
    CHECK(again.code == kExitConfig);

    const auto eval = run({"--runs-dir", runs.string(), "evaluate", "--run", "r1", "--config", config.string()});
    REQUIRE(eval.code == 0);
    CHECK(count_files(runs / "r1" / "evals") == 80);
    const auto rows = lines_of(eval.out);
    CHECK(rows.size() == 80);
    CHECK(rows.front().find("\t8\t9\t7\t9") != std::string::npos);

    const auto agg = run({"--runs-dir", runs.string(), "aggregate", "--run", "r1", "--group-by", "icl+datatype"});
    CHECK(agg.code == 0);
    CHECK(agg.out.find("Q&A + few-shot") != std::string::npos);
    CHECK(agg.out.find("8.250") != std::string::npos);
    const auto agg_csv =
        run({"--runs-dir", runs.string(), "aggregate", "--run", "r1", "--group-by", "writer", "--csv"});
    CHECK(agg_csv.code == 0);
    CHECK(lines_of(agg_csv.out).size() == 2);
    CHECK(run({"--runs-dir", runs.string(), "aggregate", "--run", "r1", "--group-by", "nope"}).code == kExitConfig);
    CHECK(run({"--runs-dir", runs.string(), "aggregate", "--run", "missing", "--group-by", "writer"}).code ==
          kExitRuntime);
}

TEST_CASE("import, sessions and agreement") {
    testing::TempDir tmp;
    const auto runs = tmp.path() / "runs";
    const auto config = write_config(tmp.path(), {{"data_types", {"csv"}},
                                                  {"icl_methods", {"cot"}},
                                                  {"model_ids", {"gpt-3.5-turbo-0125", "gpt-4-turbo-2024-04-09"}}});
    const auto base = std::vector<std::string>{"--runs-dir", runs.string()};
    auto with = [&](std::vector<std::string> rest) {
        auto args = base;
        args.insert(args.end(), rest.begin(), rest.end());
        return run(args);
    };
    REQUIRE(with({"generate", "--config", config.string(), "--run-id", "h1"}).code == 0);
    CHECK(count_files(runs / "h1" / "reports") == 20);

    const auto human_file = tmp.path() / "human.txt";
    std::ofstream(human_file) << "An Se Young edged the first game 22-20.";
    CHECK(with({"import-human", "--run", "h1", "--match", "match_01", human_file.string()}).code == 0);
    CHECK(with({"import-human", "--run", "h1", "--match", "match_02", human_file.string()}).code == 0);
    CHECK(with({"import-human", "--run", "h1", "--match", "match_99", human_file.string()}).code != 0);
    CHECK(count_files(runs / "h1" / "reports") == 22);

    REQUIRE(with({"evaluate", "--run", "h1", "--config", config.string()}).code == 0);

    CHECK(with({"agreement", "--run", "h1"}).code != 0);

    const auto created = with({"sessions", "create", "--run", "h1", "--seed", "40"});
    REQUIRE(created.code == 0);
    const auto session_lines = lines_of(created.out);
    REQUIRE(session_lines.size() == 2);
    CHECK(session_lines[0].ends_with("\tmatch_01"));

    HumanEvalStore store(runs / "h1" / "human");
    const auto sessions = store.sessions();
    REQUIRE(sessions.size() == 2);
    for (const auto& s : sessions) {
        for (int rater = 0; rater < 3; ++rater) {
            auto r = testing::response_for(s, "rater-" + std::to_string(rater), 5,
                                           {{Author::Human, true}, {Author::Gpt35, rater != 0}, {Author::Gpt4, false}});
            for (auto& item : r.items) {
                int k = 0;
                for (auto& [name, score] : item.scores) score = 3 + (k++) + rater % 2;
            }
            store.record_response(r);
        }
    }

    const auto csv_path = tmp.path() / "responses.csv";
    const auto agreement = with({"agreement", "--run", "h1", "--export-csv", csv_path.string()});
    REQUIRE(agreement.code == 0);
    CHECK(agreement.out.find("pearson_r\t") != std::string::npos);
    CHECK(agreement.out.find("guess_accuracy\thuman\t6/6") != std::string::npos);
    CHECK(agreement.out.find("guess_accuracy\tgpt35\t4/6") != std::string::npos);
    CHECK(agreement.out.find("guess_accuracy\tgpt4\t0/6") != std::string::npos);
    CHECK(std::filesystem::exists(csv_path));
    CHECK(with({"agreement", "--run", "h1", "--pairing", "responses"}).code == 0);
    CHECK(with({"agreement", "--run", "h1", "--pairing", "both"}).code == kExitConfig);
}

TEST_CASE("configuration errors exit with 3") {
    testing::TempDir tmp;
    const auto runs = tmp.path() / "runs";
    const auto path = tmp.path() / "bad.json";
    std::ofstream(path) << R"({"data_dir": "x", "backend": {"kind": "http", "api_key": "sk-live-123"}})";
    CHECK(run({"--runs-dir", runs.string(), "generate", "--config", path.string()}).code == kExitConfig);
    std::ofstream(path) << "{ not json";
    CHECK(run({"--runs-dir", runs.string(), "generate", "--config", path.string()}).code == kExitConfig);
    CHECK(run({"generate"}).code == kExitConfig);
    CHECK(exit_code_for(ErrorCode::TiedFinalScore) == kExitValidation);
    CHECK(exit_code_for(ErrorCode::AuthError) == kExitConfig);
    CHECK(exit_code_for(ErrorCode::TransportError) == kExitRuntime);
}

}
