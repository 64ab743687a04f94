#include "badge/match_data.hpp"

#include <algorithm>
#include <charconv>
#include <json.hpp>

#include "badge/error.hpp"
#include "badge/util.hpp"

namespace badge {

namespace {

std::string row_label(std::size_t data_row) { return "data row " + std::to_string(data_row + 1); }

int parse_score(std::string_view field, std::size_t data_row, std::string_view column) {
    int value = 0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc{} || ptr != last) {
        throw Error(ErrorCode::NonIntegerScore, row_label(data_row) + ": " + std::string(column) +
                                                    " is not an integer: '" + std::string(field) + "'");
    }
    return value;
}

// Assigns players from every clean +1 step; first assignment wins. Used by
// the parser so malformed sets still load and reach validate_set.
SideMapping scan_side_mapping(const std::vector<Rally>& rallies,
                              const std::vector<std::string>& known_players) {
    std::optional<std::string> a;
    std::optional<std::string> b;
    for (std::size_t i = 0; i < rallies.size(); ++i) {
        const auto side = incremented_side(rallies, i);
        if (!side) continue;
        const auto& scorer = rallies[i].win_point_player;
        auto& slot = *side == Side::A ? a : b;
        const auto& other = *side == Side::A ? b : a;
        if (!slot && other != scorer) slot = scorer;
        if (a && b) break;
    }
    auto fill = [&](std::optional<std::string>& slot, const std::optional<std::string>& other) {
        if (slot) return;
        for (const auto& name : known_players) {
            if (name != other) {
                slot = name;
                return;
            }
        }
        for (const auto& r : rallies) {
            if (r.win_point_player != other) {
                slot = r.win_point_player;
                return;
            }
        }
    };
    fill(a, b);
    fill(b, a);
    return {a.value_or(""), b.value_or("")};
}

}  // namespace

std::optional<Side> GameSet::side_of(std::string_view name) const {
    if (!player_a.empty() && name == player_a) return Side::A;
    if (!player_b.empty() && name == player_b) return Side::B;
    return std::nullopt;
}

std::string GameSet::opponent_of(std::string_view name) const {
    return name == player_a ? player_b : player_a;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;    // inside quotes
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"' && trim(current).empty()) {
            current.clear();
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(was_quoted ? current : std::string(trim(current)));
            current.clear();
            was_quoted = false;
        } else if (!was_quoted) {
            current.push_back(c);
        }
    }
    if (quoted) throw Error(ErrorCode::FieldCountMismatch, "unterminated quoted field");
    fields.push_back(was_quoted ? current : std::string(trim(current)));
    return fields;
}

std::string csv_quote(std::string_view field) {
    const bool needs = field.find_first_of(",\"\n\r") != std::string_view::npos ||
                       (!field.empty() && trim(field).size() != field.size());
    if (!needs) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

GameSet parse_set_csv(std::string_view text, const CsvParseOptions& options) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    auto lines = split_lines(text);
    std::erase_if(lines, [](const std::string& l) { return trim(l).empty(); });
    if (lines.empty()) throw Error(ErrorCode::EmptyInput, "empty CSV document");

    const auto header = split_csv_line(lines.front());
    const bool header_ok = header.size() == std::size(kCsvColumns) &&
                           std::equal(header.begin(), header.end(), std::begin(kCsvColumns));
    if (!header_ok) {
        throw Error(ErrorCode::MalformedHeader, "expected header '" + std::string(kCsvColumns[0]) +
                                                    ", ..., roundscore_B', got '" + lines.front() + "'");
    }
    if (lines.size() == 1) throw Error(ErrorCode::EmptyInput, "CSV has a header but no rallies");

    GameSet set;
    set.set_number = options.set_number;
    set.rallies.reserve(lines.size() - 1);
    for (std::size_t row = 0; row + 1 < lines.size(); ++row) {
        const auto fields = split_csv_line(lines[row + 1]);
        if (fields.size() != std::size(kCsvColumns)) {
            throw Error(ErrorCode::FieldCountMismatch,
                        row_label(row) + ": expected 6 fields, got " + std::to_string(fields.size()));
        }
        Rally r;
        r.win_point_player = fields[0];
        r.win_reason = fields[1];
        r.ball_type = fields[2];
        r.lose_reason = fields[3];
        r.score_a = parse_score(fields[4], row, kCsvColumns[4]);
        r.score_b = parse_score(fields[5], row, kCsvColumns[5]);
        set.rallies.push_back(std::move(r));
    }

    const auto mapping = options.players ? *options.players
                                         : scan_side_mapping(set.rallies, options.known_players);
    set.player_a = mapping.player_a;
    set.player_b = mapping.player_b;
    return set;
}

std::optional<Side> incremented_side(const std::vector<Rally>& rallies, std::size_t index) {
    const int prev_a = index == 0 ? 0 : rallies[index - 1].score_a;
    const int prev_b = index == 0 ? 0 : rallies[index - 1].score_b;
    const int da = rallies[index].score_a - prev_a;
    const int db = rallies[index].score_b - prev_b;
    if (da == 1 && db == 0) return Side::A;
    if (da == 0 && db == 1) return Side::B;
    return std::nullopt;
}

SideMapping infer_side_mapping(const std::vector<Rally>& rallies,
                               const std::optional<std::string>& other_player) {
    if (rallies.empty()) throw Error(ErrorCode::EmptyInput, "no rallies to infer sides from");
    std::optional<std::string> a;
    std::optional<std::string> b;
    for (std::size_t i = 0; i < rallies.size(); ++i) {
        const auto side = incremented_side(rallies, i);
        if (!side) {
            throw Error(ErrorCode::InvalidSet,
                        "rally " + std::to_string(i) + ": score does not advance by exactly one point");
        }
        const auto& scorer = rallies[i].win_point_player;
        auto& slot = *side == Side::A ? a : b;
        const auto& other = *side == Side::A ? b : a;
        if ((slot && *slot != scorer) || (other && *other == scorer)) {
            throw Error(ErrorCode::InconsistentMapping,
                        "rally " + std::to_string(i) + ": '" + scorer + "' scores in column " +
                            (*side == Side::A ? "A" : "B") + " which belongs to the other player");
        }
        slot = scorer;
    }
    if (!a || !b) {
        auto& missing = a ? b : a;
        const auto& present = a ? *a : *b;
        if (!other_player || other_player->empty() || *other_player == present) {
            throw Error(ErrorCode::AmbiguousMapping,
                        "only '" + present + "' scores; the opponent's side cannot be inferred");
        }
        missing = *other_player;
    }
    return {*a, *b};
}

ValidationReport validate_set(const GameSet& set) {
    ValidationReport report;
    auto error = [&](std::optional<std::size_t> idx, std::string rule, std::string msg) {
        report.errors.push_back({idx, std::nullopt, std::move(rule), std::move(msg)});
    };
    if (set.rallies.empty()) {
        error(std::nullopt, "empty-set", "set has no rallies");
        return report;
    }
    if (set.player_a.empty() || set.player_b.empty() || set.player_a == set.player_b) {
        error(std::nullopt, "side-mapping",
              "set needs two distinct players (A='" + set.player_a + "', B='" + set.player_b + "')");
    }
    for (std::size_t i = 0; i < set.rallies.size(); ++i) {
        const auto& r = set.rallies[i];
        if (r.score_a < 0 || r.score_b < 0) {
            error(i, "negative-score", "negative score " + std::to_string(r.score_a) + "-" +
                                           std::to_string(r.score_b));
        }
        const auto scorer_side = set.side_of(r.win_point_player);
        if (!scorer_side) {
            error(i, "unknown-player", "scorer '" + r.win_point_player + "' is not a player of this set");
        }
        const auto step = incremented_side(set.rallies, i);
        if (!step) {
            const int prev_a = i == 0 ? 0 : set.rallies[i - 1].score_a;
            const int prev_b = i == 0 ? 0 : set.rallies[i - 1].score_b;
            error(i, "score-step",
                  "score moves from " + std::to_string(prev_a) + "-" + std::to_string(prev_b) + " to " +
                      std::to_string(r.score_a) + "-" + std::to_string(r.score_b) +
                      "; exactly one side must gain one point");
        } else if (scorer_side && *step != *scorer_side) {
            error(i, "side-mismatch", "'" + r.win_point_player + "' won the rally but column " +
                                          (*step == Side::A ? "A" : "B") + " increased");
        }
    }

    const auto& last = set.rallies.back();
    const int leader = std::max(last.score_a, last.score_b);
    const int margin = std::abs(last.score_a - last.score_b);
    if (leader < 21 || (margin < 2 && leader < 30)) {
        report.warnings.push_back({std::nullopt, std::nullopt, "unfinished-set",
                                   "final score " + std::to_string(last.score_a) + "-" +
                                       std::to_string(last.score_b) + " does not end a set"});
    }
    return report;
}

ValidationReport validate_match(const Match& match) {
    ValidationReport report;
    if (match.sets.empty()) {
        report.errors.push_back({std::nullopt, std::nullopt, "no-sets", "match has no sets"});
    } else if (match.sets.size() < 2 || match.sets.size() > 3) {
        report.warnings.push_back({std::nullopt, std::nullopt, "set-count",
                                   "match has " + std::to_string(match.sets.size()) + " sets"});
    }
    if (!is_iso_date(match.date)) {
        report.warnings.push_back(
            {std::nullopt, std::nullopt, "date", "date '" + match.date + "' is not YYYY-MM-DD"});
    }
    for (const auto& set : match.sets) {
        auto sub = validate_set(set);
        for (auto& e : sub.errors) {
            e.set_number = set.set_number;
            report.errors.push_back(std::move(e));
        }
        for (auto& w : sub.warnings) {
            w.set_number = set.set_number;
            report.warnings.push_back(std::move(w));
        }
        const bool same_players =
            (set.player_a == match.player_a && set.player_b == match.player_b) ||
            (set.player_a == match.player_b && set.player_b == match.player_a);
        if (!same_players) {
            report.errors.push_back({std::nullopt, set.set_number, "set-players",
                                     "set players '" + set.player_a + "'/'" + set.player_b +
                                         "' differ from match players"});
        }
    }
    return report;
}

Match load_match(const std::filesystem::path& path) {
    const auto json_path = std::filesystem::is_directory(path) ? path / "match.json" : path;
    const auto base = json_path.parent_path();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(json_path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidMatch, json_path.string() + ": " + e.what());
    }
    Match m;
    try {
        m.match_id = doc.at("match_id").get<std::string>();
        m.tournament = doc.value("tournament", "");
        m.date = doc.value("date", "");
        m.player_a = doc.at("player_A").get<std::string>();
        m.player_b = doc.at("player_B").get<std::string>();
        int number = 1;
        for (const auto& f : doc.at("set_files")) {
            CsvParseOptions opts;
            opts.set_number = number++;
            opts.known_players = {m.player_a, m.player_b};
            m.sets.push_back(parse_set_csv(read_file(base / f.get<std::string>()), opts));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidMatch, json_path.string() + ": " + e.what());
    }
    return m;
}

std::vector<Match> load_matches(const std::filesystem::path& root) {
    if (std::filesystem::is_regular_file(root) ||
        std::filesystem::exists(root / "match.json")) {
        return {load_match(root)};
    }
    if (!std::filesystem::is_directory(root)) throw Error(ErrorCode::IoError, "no such directory: " + root.string());
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "match.json")) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<Match> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs) out.push_back(load_match(d));
    return out;
}

}  // namespace badge
