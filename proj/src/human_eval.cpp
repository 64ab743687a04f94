#include "badge/human_eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "badge/util.hpp"

namespace badge {

using nlohmann::json;

namespace {

std::string lowercase(std::string_view s) {
    std::string out;
    for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

std::string blind_label(std::size_t position) { return "Report " + std::to_string(position + 1); }

std::string pointer_escape(std::string_view token) {
    std::string out;
    for (char c : token) {
        if (c == '~') {
            out += "~0";
        } else if (c == '/') {
            out += "~1";
        } else {
            out.push_back(c);
        }
    }
    return out;
}

ResponseError structural(const std::string& pointer, ErrorCode code, const std::string& message) {
    return ResponseError(code, pointer + ": " + message, {{pointer, code, message}});
}

const EvalSession* session_for(std::span<const EvalSession> sessions, const std::string& id) {
    for (const auto& s : sessions) {
        if (s.session_id == id) return &s;
    }
    return nullptr;
}

}  // namespace

std::string_view to_string(Author a) noexcept {
    switch (a) {
        case Author::Human: return "human";
        case Author::Gpt35: return "gpt35";
        case Author::Gpt4: return "gpt4";
    }
    return "unknown";
}

Author parse_author(std::string_view s) {
    auto t = lowercase(trim(s));
    std::erase_if(t, [](char c) { return c == '-' || c == '.' || c == ' ' || c == '_'; });
    if (t == "human") return Author::Human;
    if (t == "gpt35") return Author::Gpt35;
    if (t == "gpt4") return Author::Gpt4;
    throw Error(ErrorCode::ConfigError, "unknown author '" + std::string(s) + "'");
}

std::optional<Author> author_from_writer(std::string_view writer) {
    const auto w = lowercase(writer);
    if (w == "human") return Author::Human;
    if (w.find("gpt-3.5") != std::string::npos || w.find("gpt35") != std::string::npos) return Author::Gpt35;
    if (w.find("gpt-4") != std::string::npos || w.find("gpt4") != std::string::npos) return Author::Gpt4;
    return std::nullopt;
}

const SessionItem* EvalSession::find_item(std::string_view label) const {
    for (const auto& item : items) {
        if (item.blind_label == label) return &item;
    }
    return nullptr;
}

json EvalSession::to_json() const {
    json items_json = json::array();
    for (const auto& item : items) {
        items_json.push_back({{"blind_label", item.blind_label},
                              {"report_text", item.report_text},
                              {"author", std::string(to_string(item.author))},
                              {"record_id", item.record_id}});
    }
    return {{"session_id", session_id}, {"match_id", match_id}, {"shuffle_seed", shuffle_seed}, {"items", items_json}};
}

EvalSession EvalSession::from_json(const json& j) {
    EvalSession s;
    try {
        s.session_id = j.at("session_id").get<std::string>();
        s.match_id = j.value("match_id", "");
        s.shuffle_seed = j.value("shuffle_seed", std::uint64_t{0});
        const auto& items = j.at("items");
        if (items.size() != 3) throw Error(ErrorCode::IoError, "session needs exactly 3 items");
        for (std::size_t i = 0; i < 3; ++i) {
            s.items[i].blind_label = items[i].at("blind_label").get<std::string>();
            s.items[i].report_text = items[i].at("report_text").get<std::string>();
            s.items[i].author = parse_author(items[i].at("author").get<std::string>());
            s.items[i].record_id = items[i].value("record_id", "");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("session: ") + e.what());
    }
    return s;
}

std::array<std::size_t, 3> session_permutation(std::uint64_t seed) {
    std::array<std::size_t, 3> perm{0, 1, 2};
    std::mt19937_64 rng(seed);
    for (std::size_t i = perm.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

EvalSession create_session(std::string match_id, const std::array<AuthoredReport, 3>& reports, std::uint64_t seed) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
        for (std::size_t j = i + 1; j < reports.size(); ++j) {
            if (reports[i].author == reports[j].author) {
                throw Error(ErrorCode::DuplicateAuthor,
                            "two reports are authored by " + std::string(to_string(reports[i].author)));
            }
        }
    }
    EvalSession session;
    session.match_id = std::move(match_id);
    session.shuffle_seed = seed;
    const auto perm = session_permutation(seed);
    std::string identity = session.match_id + "\n" + std::to_string(seed);
    for (std::size_t pos = 0; pos < perm.size(); ++pos) {
        const auto& src = reports[perm[pos]];
        session.items[pos] = {blind_label(pos), src.text, src.author, src.record_id};
        identity += "\n" + sha256_hex(src.text);
    }
    session.session_id = "s-" + sha256_hex(identity).substr(0, 12);
    return session;
}

const ItemResponse* HumanResponse::find_item(std::string_view label) const {
    for (const auto& item : items) {
        if (item.blind_label == label) return &item;
    }
    return nullptr;
}

json HumanResponse::to_json() const {
    json items_json = json::array();
    for (const auto& item : items) {
        json entry{{"blind_label", item.blind_label}, {"scores", item.scores}};
        entry["author_guess"] = item.author_guess ? json(to_string(*item.author_guess)) : json(nullptr);
        items_json.push_back(std::move(entry));
    }
    return {{"session_id", session_id}, {"rater_id", rater_id}, {"items", items_json}, {"submitted_at", submitted_at}};
}

HumanResponse HumanResponse::from_json(const json& j) {
    if (!j.is_object()) throw structural("", ErrorCode::IncompleteResponse, "body must be a JSON object");
    HumanResponse r;
    auto text_field = [&](const char* key, bool required) -> std::string {
        if (!j.contains(key) || j[key].is_null()) {
            if (required) throw structural(std::string("/") + key, ErrorCode::IncompleteResponse, "missing");
            return {};
        }
        if (!j[key].is_string()) {
            throw structural(std::string("/") + key, ErrorCode::IncompleteResponse, "must be a string");
        }
        return j[key].get<std::string>();
    };
    r.session_id = text_field("session_id", false);
    r.rater_id = text_field("rater_id", true);
    r.submitted_at = text_field("submitted_at", false);
    if (!j.contains("items") || !j["items"].is_array()) {
        throw structural("/items", ErrorCode::IncompleteResponse, "must be an array of scored reports");
    }
    const auto& items = j["items"];
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto base = "/items/" + std::to_string(i);
        const auto& item = items[i];
        if (!item.is_object()) throw structural(base, ErrorCode::IncompleteResponse, "must be an object");
        ItemResponse out;
        if (!item.contains("blind_label") || !item["blind_label"].is_string()) {
            throw structural(base + "/blind_label", ErrorCode::IncompleteResponse, "missing");
        }
        out.blind_label = item["blind_label"].get<std::string>();
        if (item.contains("scores")) {
            if (!item["scores"].is_object()) {
                throw structural(base + "/scores", ErrorCode::IncompleteResponse, "must be an object");
            }
            for (const auto& [name, value] : item["scores"].items()) {
                const auto ptr = base + "/scores/" + pointer_escape(name);
                if (value.is_null()) continue;
                if (!value.is_number_integer()) {
                    throw structural(ptr, ErrorCode::ScoreOutOfRange, "score must be an integer from 1 to 10");
                }
                const auto v = value.get<long long>();
                out.scores[name] = static_cast<int>(std::clamp<long long>(v, -1'000'000, 1'000'000));
            }
        }
        if (item.contains("author_guess") && !item["author_guess"].is_null()) {
            const auto ptr = base + "/author_guess";
            if (!item["author_guess"].is_string()) {
                throw structural(ptr, ErrorCode::IncompleteResponse, "must be one of human, gpt35, gpt4");
            }
            try {
                out.author_guess = parse_author(item["author_guess"].get<std::string>());
            } catch (const Error&) {
                throw structural(ptr, ErrorCode::IncompleteResponse, "must be one of human, gpt35, gpt4");
            }
        }
        r.items.push_back(std::move(out));
    }
    return r;
}

std::vector<FieldError> check_response(const EvalSession& session, const HumanResponse& response) {
    std::vector<FieldError> errors;
    if (!response.session_id.empty() && response.session_id != session.session_id) {
        errors.push_back({"/session_id", ErrorCode::IncompleteResponse, "does not match the session"});
    }
    if (trim(response.rater_id).empty()) {
        errors.push_back({"/rater_id", ErrorCode::IncompleteResponse, "rater id is required"});
    }
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < response.items.size(); ++i) {
        const auto& item = response.items[i];
        const auto base = "/items/" + std::to_string(i);
        if (!session.find_item(item.blind_label)) {
            errors.push_back({base + "/blind_label", ErrorCode::IncompleteResponse,
                              "'" + item.blind_label + "' is not a report of this session"});
            continue;
        }
        if (seen.contains(item.blind_label)) {
            errors.push_back({base + "/blind_label", ErrorCode::IncompleteResponse,
                              "'" + item.blind_label + "' is scored twice"});
            continue;
        }
        seen[item.blind_label] = i;
        for (const auto& c : criteria()) {
            const auto ptr = base + "/scores/" + c.name;
            auto it = item.scores.find(c.name);
            if (it == item.scores.end()) {
                errors.push_back({ptr, ErrorCode::IncompleteResponse, c.name + " score is missing"});
            } else if (it->second < c.scale_min || it->second > c.scale_max) {
                errors.push_back({ptr, ErrorCode::ScoreOutOfRange,
                                  c.name + " score " + std::to_string(it->second) + " is outside " +
                                      std::to_string(c.scale_min) + "-" + std::to_string(c.scale_max)});
            }
        }
        for (const auto& [name, value] : item.scores) {
            const bool known = std::any_of(criteria().begin(), criteria().end(),
                                           [&](const Criterion& c) { return c.name == name; });
            if (!known) {
                errors.push_back({base + "/scores/" + pointer_escape(name), ErrorCode::IncompleteResponse,
                                  "unknown criterion '" + name + "'"});
            }
        }
        if (!item.author_guess) {
            errors.push_back({base + "/author_guess", ErrorCode::IncompleteResponse, "author guess is missing"});
        }
    }
    for (const auto& item : session.items) {
        if (!seen.contains(item.blind_label)) {
            errors.push_back({"/items", ErrorCode::IncompleteResponse, "'" + item.blind_label + "' is not scored"});
        }
    }
    return errors;
}

HumanEvalStore::HumanEvalStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_ / "sessions");
    std::filesystem::create_directories(dir_ / "responses");
}

std::string HumanEvalStore::response_id(const std::string& session_id, const std::string& rater_id) {
    return "r-" + sha256_hex(session_id + "\n" + rater_id).substr(0, 16);
}

void HumanEvalStore::save_session(const EvalSession& session) {
    std::lock_guard lock(mu_);
    write_file_atomic(dir_ / "sessions" / (session.session_id + ".json"), session.to_json().dump(2));
}

std::optional<EvalSession> HumanEvalStore::find_session(const std::string& session_id) const {
    const bool safe = !session_id.empty() && std::all_of(session_id.begin(), session_id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    });
    if (!safe) return std::nullopt;
    const auto path = dir_ / "sessions" / (session_id + ".json");
    std::lock_guard lock(mu_);
    if (!std::filesystem::exists(path)) return std::nullopt;
    return EvalSession::from_json(json::parse(read_file(path)));
}

std::vector<EvalSession> HumanEvalStore::sessions() const {
    std::lock_guard lock(mu_);
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir_ / "sessions")) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<EvalSession> out;
    for (const auto& f : files) out.push_back(EvalSession::from_json(json::parse(read_file(f))));
    return out;
}

StoredResponse HumanEvalStore::record_response(const HumanResponse& response) {
    const auto session = find_session(response.session_id);
    if (!session) throw Error(ErrorCode::UnknownSession, "unknown session '" + response.session_id + "'");
    auto errors = check_response(*session, response);
    if (!errors.empty()) {
        const bool incomplete = std::any_of(errors.begin(), errors.end(),
                                            [](const FieldError& e) { return e.code == ErrorCode::IncompleteResponse; });
        const auto code = incomplete ? ErrorCode::IncompleteResponse : ErrorCode::ScoreOutOfRange;
        const auto message = errors.front().pointer + ": " + errors.front().message;
        throw ResponseError(code, message, std::move(errors));
    }

    HumanResponse stored = response;
    if (stored.submitted_at.empty()) stored.submitted_at = utc_timestamp();
    const auto id = response_id(stored.session_id, stored.rater_id);
    const auto path = dir_ / "responses" / stored.session_id / (id + ".json");

    std::lock_guard lock(mu_);
    StoredResponse result{id, std::filesystem::exists(path)};
    if (result.superseded) {
        const auto previous = json::parse(read_file(path));
        append_line(supersession_log(), json{{"session_id", stored.session_id},
                                             {"rater_id", stored.rater_id},
                                             {"response_id", id},
                                             {"previous_submitted_at", previous.value("submitted_at", "")},
                                             {"submitted_at", stored.submitted_at},
                                             {"logged_at", utc_timestamp()}}
                                            .dump());
    }
    write_file_atomic(path, stored.to_json().dump(2));
    return result;
}

std::vector<HumanResponse> HumanEvalStore::responses(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    std::vector<HumanResponse> out;
    const auto dir = dir_ / "responses" / session_id;
    if (!std::filesystem::is_directory(dir)) return out;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back(HumanResponse::from_json(json::parse(read_file(f))));
    return out;
}

std::vector<HumanResponse> HumanEvalStore::responses() const {
    std::vector<HumanResponse> out;
    for (const auto& s : sessions()) {
        auto part = responses(s.session_id);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

std::map<Author, AuthorMeans> human_means(std::span<const EvalSession> sessions,
                                          std::span<const HumanResponse> responses) {
    std::map<Author, std::pair<CriterionMeans, std::size_t>> sums;
    for (const auto& r : responses) {
        const auto* session = session_for(sessions, r.session_id);
        if (!session) continue;
        for (const auto& item : session->items) {
            const auto* answer = r.find_item(item.blind_label);
            if (!answer) continue;
            auto& [sum, n] = sums[item.author];
            for (std::size_t c = 0; c < kCriterionCount; ++c) {
                sum[c] += answer->scores.at(criteria()[c].name);
            }
            ++n;
        }
    }
    if (sums.empty()) throw Error(ErrorCode::NoResponses, "no human responses to average");
    std::map<Author, AuthorMeans> out;
    for (const auto& [author, entry] : sums) {
        AuthorMeans m;
        m.n_responses = entry.second;
        double total = 0;
        for (std::size_t c = 0; c < kCriterionCount; ++c) {
            m.means[c] = entry.first[c] / static_cast<double>(entry.second);
            total += m.means[c];
        }
        m.overall = total / static_cast<double>(kCriterionCount);
        out[author] = m;
    }
    return out;
}

std::map<Author, CriterionMeans> machine_means_by_author(std::span<const EvaluationRecord> records) {
    std::map<Author, std::pair<CriterionMeans, std::size_t>> sums;
    for (const auto& r : records) {
        auto it = r.labels.find("writer");
        if (it == r.labels.end()) continue;
        const auto author = author_from_writer(it->second);
        if (!author) continue;
        auto& [sum, n] = sums[*author];
        for (std::size_t c = 0; c < kCriterionCount; ++c) sum[c] += r.scores.at(criteria()[c].name);
        ++n;
    }
    std::map<Author, CriterionMeans> out;
    for (const auto& [author, entry] : sums) {
        CriterionMeans m{};
        for (std::size_t c = 0; c < kCriterionCount; ++c) m[c] = entry.first[c] / static_cast<double>(entry.second);
        out[author] = m;
    }
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    "vectors differ in length: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    }
    if (x.size() < 2) throw Error(ErrorCode::TooFewPoints, "pearson needs at least two points");
    const auto n = static_cast<double>(x.size());
    double mx = 0;
    double my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0;
    double sxx = 0;
    double syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::ConstantVector, "pearson is undefined for a constant vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::map<Author, std::pair<int, int>> guess_counts(std::span<const EvalSession> sessions,
                                                   std::span<const HumanResponse> responses) {
    std::map<Author, std::pair<int, int>> counts;
    for (const auto& r : responses) {
        const auto* session = session_for(sessions, r.session_id);
        if (!session) continue;
        for (const auto& item : session->items) {
            const auto* answer = r.find_item(item.blind_label);
            if (!answer || !answer->author_guess) continue;
            auto& [correct, total] = counts[item.author];
            ++total;
            if (*answer->author_guess == item.author) ++correct;
        }
    }
    return counts;
}

AgreementStats machine_human_agreement(const std::map<Author, CriterionMeans>& machine,
                                       std::span<const EvalSession> sessions,
                                       std::span<const HumanResponse> responses, Pairing pairing) {
    AgreementStats stats;
    const auto humans = human_means(sessions, responses);
    if (pairing == Pairing::CellMeans) {
        for (auto author : kAllAuthors) {
            auto m = machine.find(author);
            auto h = humans.find(author);
            if (m == machine.end() || h == humans.end()) continue;
            for (std::size_t c = 0; c < kCriterionCount; ++c) {
                stats.machine.push_back(m->second[c]);
                stats.human.push_back(h->second.means[c]);
                stats.cells.push_back(std::string(to_string(author)) + "/" + criteria()[c].name);
            }
        }
    } else {
        for (const auto& r : responses) {
            const auto* session = session_for(sessions, r.session_id);
            if (!session) continue;
            for (const auto& item : session->items) {
                const auto* answer = r.find_item(item.blind_label);
                auto m = machine.find(item.author);
                if (!answer || m == machine.end()) continue;
                for (std::size_t c = 0; c < kCriterionCount; ++c) {
                    stats.machine.push_back(m->second[c]);
                    stats.human.push_back(answer->scores.at(criteria()[c].name));
                    stats.cells.push_back(std::string(to_string(item.author)) + "/" + criteria()[c].name);
                }
            }
        }
    }
    if (stats.machine.empty()) {
        throw Error(ErrorCode::NoOverlap, "no (author, criterion) cell is scored by both machine and humans");
    }
    stats.pearson_r = pearson(stats.machine, stats.human);
    stats.guess_counts = guess_counts(sessions, responses);
    for (const auto& [author, c] : stats.guess_counts) {
        stats.guess_accuracy[author] = c.second == 0 ? 0.0 : static_cast<double>(c.first) / c.second;
    }
    return stats;
}

std::string export_responses_csv(std::span<const EvalSession> sessions, std::span<const HumanResponse> responses) {
    std::string out = "session_id,rater_id,blind_label,true_author";
    for (const auto& c : criteria()) out += "," + c.name;
    out += ",author_guess,submitted_at\n";
    for (const auto& r : responses) {
        const auto* session = session_for(sessions, r.session_id);
        if (!session) continue;
        for (const auto& item : session->items) {
            const auto* answer = r.find_item(item.blind_label);
            if (!answer) continue;
            out += csv_quote(r.session_id) + "," + csv_quote(r.rater_id) + "," + csv_quote(item.blind_label) + "," +
                   std::string(to_string(item.author));
            for (const auto& c : criteria()) {
                auto it = answer->scores.find(c.name);
                out += "," + (it == answer->scores.end() ? std::string() : std::to_string(it->second));
            }
            out += "," + (answer->author_guess ? std::string(to_string(*answer->author_guess)) : std::string()) + "," +
                   csv_quote(r.submitted_at) + "\n";
        }
    }
    return out;
}

}  // namespace badge
