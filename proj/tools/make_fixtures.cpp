// Writes the synthetic fixture matches under data/fixtures and the golden
// sample rows under data/golden. Output is a pure function of the seeds below.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "badge/match_data.hpp"
#include "badge/util.hpp"

namespace fs = std::filesystem;

namespace {

struct Reason {
    const char* win;
    const char* lose;
};

constexpr std::array<Reason, 4> kReasons{{
    {"opponent goes out of bounds", "goes out of bounds"},
    {"opponent hits the net", "hits the net"},
    {"wins by landing", "opponent wins by landing"},
    {"opponent fails to return", "fails to return"},
}};

constexpr std::array<const char*, 10> kBalls{"smash", "lob", "push", "drop", "net shot",
                                            "clear", "drive", "rush", "return net", "defensive return lob"};

struct Row {
    std::string scorer;
    std::string win_reason;
    std::string ball;
    std::string lose_reason;
    int a = 0;
    int b = 0;
};

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

bool game_over(int a, int b) {
    const int hi = std::max(a, b);
    const int lo = std::min(a, b);
    return hi == 30 || (hi >= 21 && hi - lo >= 2);
}

Row make_row(std::mt19937_64& rng, const std::string& scorer, int a, int b) {
    const auto& r = kReasons[pick(rng, kReasons.size())];
    return {scorer, r.win, kBalls[pick(rng, kBalls.size())], r.lose, a, b};
}

/// Plays a full game; `edge_a` in [0,100] is side A's rally win chance.
std::vector<Row> play_game(std::mt19937_64& rng, const std::string& pa, const std::string& pb, int edge_a) {
    std::vector<Row> rows;
    int a = 0;
    int b = 0;
    while (!game_over(a, b)) {
        const bool a_wins = static_cast<int>(pick(rng, 100)) < edge_a;
        (a_wins ? a : b) += 1;
        rows.push_back(make_row(rng, a_wins ? pa : pb, a, b));
    }
    return rows;
}

/// Opens with the three published sample rows and ends 22-20 for side A.
std::vector<Row> golden_game(std::mt19937_64& rng, const std::string& pa, const std::string& pb) {
    std::vector<Row> rows{
        {pb, "opponent goes out of bounds", "lob", "goes out of bounds", 0, 1},
        {pa, "opponent hits the net", "push", "hits the net", 1, 1},
        {pb, "wins by landing", "smash", "opponent wins by landing", 1, 2},
    };
    std::vector<bool> middle(19, true);
    middle.resize(19 + 18, false);
    for (std::size_t i = middle.size() - 1; i > 0; --i) {
        const auto j = pick(rng, i + 1);
        std::swap(middle[i], middle[j]);
    }
    middle.push_back(true);
    middle.push_back(true);
    int a = 1;
    int b = 2;
    for (bool a_wins : middle) {
        (a_wins ? a : b) += 1;
        rows.push_back(make_row(rng, a_wins ? pa : pb, a, b));
    }
    return rows;
}

std::string to_csv(const std::vector<Row>& rows) {
    std::string out;
    for (std::size_t i = 0; i < std::size(badge::kCsvColumns); ++i) {
        if (i) out += ",";
        out += badge::kCsvColumns[i];
    }
    out += "\n";
    for (const auto& r : rows) {
        out += badge::csv_quote(r.scorer) + "," + badge::csv_quote(r.win_reason) + "," + badge::csv_quote(r.ball) +
               "," + badge::csv_quote(r.lose_reason) + "," + std::to_string(r.a) + "," + std::to_string(r.b) + "\n";
    }
    return out;
}

struct Spec {
    const char* player_a;
    const char* player_b;
    const char* tournament;
    const char* date;
    int edge_a;
};

constexpr std::array<Spec, 10> kMatches{{
    {"An Se Young", "Ratchanok Intanon", "Harbour City Masters 2021", "2021-01-17", 58},
    {"Kento Momota", "Chou Tien Chen", "Lakeside Open 2018", "2018-09-23", 55},
    {"Viktor Axelsen", "Anders Antonsen", "Northern Classic 2020", "2020-03-15", 54},
    {"Tai Tzu Ying", "Chen Yufei", "Riverside Grand Prix 2019", "2019-04-28", 52},
    {"Carolina Marin", "Akane Yamaguchi", "Capital Badminton Cup 2019", "2019-07-21", 53},
    {"Anthony Sinisuka Ginting", "Jonatan Christie", "Island Series 2019", "2019-11-10", 51},
    {"Pusarla V. Sindhu", "Nozomi Okuhara", "Monsoon Open 2018", "2018-08-05", 50},
    {"Lee Zii Jia", "Ng Ka Long Angus", "Southern Cross Open 2021", "2021-03-21", 56},
    {"Ratchanok Intanon", "He Bingjiao", "Golden Temple Masters 2020", "2020-01-26", 57},
    {"Shi Yuqi", "Srikanth Kidambi", "Eastern Shuttle Open 2018", "2018-06-10", 53},
}};

void write(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    badge::write_file_atomic(path, text);
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("data");
    for (std::size_t m = 0; m < kMatches.size(); ++m) {
        const auto& spec = kMatches[m];
        std::mt19937_64 rng(0xBAD6E000 + m);
        char id[16];
        std::snprintf(id, sizeof id, "match_%02zu", m + 1);
        const auto dir = root / "fixtures" / id;

        int won_a = 0;
        int won_b = 0;
        std::vector<std::string> files;
        while (won_a < 2 && won_b < 2) {
            const int number = won_a + won_b + 1;
            auto rows = (m == 0 && number == 1) ? golden_game(rng, spec.player_a, spec.player_b)
                                                : play_game(rng, spec.player_a, spec.player_b, spec.edge_a);
            (rows.back().a > rows.back().b ? won_a : won_b) += 1;
            const auto name = "set_" + std::to_string(number) + ".csv";
            write(dir / name, to_csv(rows));
            files.push_back(name);
        }
        nlohmann::json sidecar{{"match_id", id},       {"tournament", spec.tournament},
                               {"date", spec.date},    {"player_A", spec.player_a},
                               {"player_B", spec.player_b}, {"set_files", files}};
        write(dir / "match.json", sidecar.dump(2) + "\n");
    }

    std::mt19937_64 rng(0);
    auto sample = golden_game(rng, "An Se Young", "Ratchanok Intanon");
    sample.resize(3);
    write(root / "golden" / "sample_rows.csv", to_csv(sample));
    std::cout << "fixtures written under " << root.string() << "\n";
    return 0;
}
