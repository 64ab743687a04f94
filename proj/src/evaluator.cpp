#include "badge/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "badge/util.hpp"

namespace badge {

using nlohmann::json;

namespace {

std::string capitalized(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

std::string criterion_line(const Criterion& c) {
    return capitalized(c.name) + " (" + std::to_string(c.scale_min) + "-" + std::to_string(c.scale_max) +
           "): " + c.definition;
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

struct IntToken {
    long long value;
    bool decimal;  // followed by ".<digit>"
};

// Integer starting at `pos` (optional sign then digits), or nullopt.
std::optional<IntToken> read_int(std::string_view s, std::size_t pos) {
    bool negative = false;
    if (pos < s.size() && (s[pos] == '-' || s[pos] == '+')) {
        negative = s[pos] == '-';
        ++pos;
    }
    if (pos >= s.size() || !is_digit(s[pos])) return std::nullopt;
    long long v = 0;
    while (pos < s.size() && is_digit(s[pos])) {
        v = std::min<long long>(v * 10 + (s[pos] - '0'), 1'000'000'000);
        ++pos;
    }
    const bool decimal = pos + 1 < s.size() && s[pos] == '.' && is_digit(s[pos + 1]);
    return IntToken{negative ? -v : v, decimal};
}

std::optional<std::size_t> find_marker(std::string_view text) {
    constexpr std::string_view marker = "score:";
    if (text.size() < marker.size()) return std::nullopt;
    for (std::size_t i = 0; i + marker.size() <= text.size(); ++i) {
        bool match = true;
        for (std::size_t k = 0; k < marker.size(); ++k) {
            if (std::tolower(static_cast<unsigned char>(text[i + k])) != marker[k]) {
                match = false;
                break;
            }
        }
        if (match && (i == 0 || !is_alnum(text[i - 1]))) return i + marker.size();
    }
    return std::nullopt;
}

int checked(long long v, int lo, int hi, std::string_view text) {
    if (v < lo || v > hi) {
        throw Error(ErrorCode::ScoreOutOfRange, "score " + std::to_string(v) + " outside [" + std::to_string(lo) +
                                                    ", " + std::to_string(hi) + "] in: " +
                                                    std::string(text.substr(0, 120)));
    }
    return static_cast<int>(v);
}

std::pair<int, int> grouping_rank(const std::string& key) {
    const auto plus = key.find('+');
    if (plus == std::string::npos) return {99, 99};
    try {
        return {static_cast<int>(parse_data_type(key.substr(0, plus))),
                static_cast<int>(parse_icl_method(key.substr(plus + 1)))};
    } catch (const Error&) {
        return {99, 99};
    }
}

std::string pretty_key(const std::string& key, Grouping g) {
    if (g == Grouping::Writer) return key;
    const auto plus = key.find('+');
    if (plus == std::string::npos) return key;
    const auto dt = key.substr(0, plus);
    std::string icl = key.substr(plus + 1);
    std::replace(icl.begin(), icl.end(), '_', '-');
    if (icl == "cot") icl = "CoT";
    return (dt == "qa" ? std::string("Q&A") : std::string("CSV")) + " + " + icl;
}

std::string fmt(double v, int decimals) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace

const std::array<Criterion, kCriterionCount>& criteria() {
    static const std::array<Criterion, kCriterionCount> all = {{
        {"coherence",
         "means being logical and clear in thought or communication, where ideas fit together smoothly "
         "to form a unified whole.",
         1, 10},
        {"consistency",
         "refers to the quality of being steadfast, reliable, and uniform in behavior, performance, or "
         "appearance over time.",
         1, 10},
        {"excitement", "is a feeling of enthusiasm or thrill, often before or during an event or activity.", 1, 10},
        {"fluency",
         "the quality of the summary in terms of grammar, spelling, punctuation, word choice, and sentence "
         "structure.",
         1, 10},
    }};
    return all;
}

std::size_t criterion_index(std::string_view name) {
    const auto& all = criteria();
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].name == name) return i;
    }
    throw Error(ErrorCode::ConfigError, "unknown criterion '" + std::string(name) + "'");
}

const Criterion& criterion(std::string_view name) { return criteria()[criterion_index(name)]; }

std::optional<EvaluationSteps> StepsCache::find(const std::string& criterion, const std::string& model_id) const {
    std::lock_guard lock(mu_);
    auto it = steps_.find({criterion, model_id});
    if (it == steps_.end()) return std::nullopt;
    return it->second;
}

EvaluationSteps StepsCache::insert_if_absent(EvaluationSteps steps) {
    std::lock_guard lock(mu_);
    auto [it, inserted] = steps_.try_emplace({steps.criterion, steps.model_id}, std::move(steps));
    return it->second;
}

std::size_t StepsCache::size() const {
    std::lock_guard lock(mu_);
    return steps_.size();
}

std::string steps_prompt(const Criterion& c) {
    return std::string(kTaskIntroduction) + "\n\nEvaluation Criteria:\n" + criterion_line(c) +
           "\n\nWrite the Evaluation Steps a reviewer should follow to score a badminton report on this "
           "criterion. Answer with a numbered list (\"1. ...\").";
}

std::vector<std::string> parse_numbered_steps(std::string_view text) {
    std::vector<std::string> steps;
    bool in_list = false;
    for (const auto& raw : split_lines(text)) {
        const auto line = trim(raw);
        std::size_t pos = 0;
        while (pos < line.size() && is_digit(line[pos])) ++pos;
        const bool numbered = pos > 0 && pos < line.size() && (line[pos] == '.' || line[pos] == ')') &&
                              (pos + 1 == line.size() || line[pos + 1] == ' ' || line[pos + 1] == '\t');
        if (numbered) {
            const auto n = std::stoul(std::string(line.substr(0, pos)));
            if (n == steps.size() + 1) {
                steps.emplace_back(trim(line.substr(pos + 1)));
                in_list = true;
                continue;
            }
            if (in_list) break;
        } else if (in_list && !line.empty()) {
            auto& last = steps.back();
            if (!last.empty()) last += ' ';
            last += line;
        }
    }
    std::erase_if(steps, [](const std::string& s) { return s.empty(); });
    if (steps.size() < 2) {
        throw Error(ErrorCode::UnparseableSteps,
                    "no numbered list of at least two steps in: " + std::string(text.substr(0, 200)));
    }
    return steps;
}

EvaluationSteps auto_steps(const Criterion& c, const ChatClient& client, const std::string& model_id,
                           StepsCache& cache) {
    if (auto hit = cache.find(c.name, model_id)) return *hit;
    const auto prompt = steps_prompt(c);
    auto req = ChatRequest::user(model_id, prompt, kEvaluationTemperature, "steps/" + c.name);
    const auto response = client.complete(req);
    EvaluationSteps steps{c.name, parse_numbered_steps(response.content), model_id, fingerprint(prompt)};
    return cache.insert_if_absent(std::move(steps));
}

std::string evaluation_prompt(const Criterion& c, const EvaluationSteps& steps, std::string_view report) {
    std::string out(kTaskIntroduction);
    out += "\n\nEvaluation Criteria:\n" + criterion_line(c) + "\n\nEvaluation Steps:\n";
    for (std::size_t i = 0; i < steps.steps.size(); ++i) {
        out += std::to_string(i + 1) + ". " + steps.steps[i] + "\n";
    }
    out += "\nBadminton Report:\n";
    out += trim(report);
    out += "\n\nEvaluation Form:\nAnswer with a single line \"Score: N\", where N is an integer from " +
           std::to_string(c.scale_min) + " (lowest) to " + std::to_string(c.scale_max) + " (highest) for " +
           c.name + ".";
    return out;
}

int parse_score(std::string_view text, int scale_min, int scale_max) {
    if (auto after = find_marker(text)) {
        std::size_t pos = *after;
        while (pos < text.size() && std::string_view(" \t*_`\"'[(").find(text[pos]) != std::string_view::npos) {
            ++pos;
        }
        if (auto tok = read_int(text, pos)) {
            if (tok->decimal) {
                throw Error(ErrorCode::ScoreParseError,
                            "non-integer score after 'Score:' in: " + std::string(text.substr(0, 120)));
            }
            return checked(tok->value, scale_min, scale_max, text);
        }
    }
    // Fallback: first integer token not glued to letters and not part of a decimal.
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        const bool sign = (c == '-' || c == '+') && i + 1 < text.size() && is_digit(text[i + 1]);
        if (!is_digit(c) && !sign) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        std::size_t end = sign ? i + 1 : i;
        while (end < text.size() && is_digit(text[end])) ++end;
        const bool decimal = end + 1 < text.size() && text[end] == '.' && is_digit(text[end + 1]);
        std::size_t token_end = end;
        if (decimal) {
            token_end = end + 1;
            while (token_end < text.size() && is_digit(text[token_end])) ++token_end;
        }
        const char prev = start > 0 ? text[start - 1] : ' ';
        const bool standalone = !is_alnum(prev) && prev != '_' && prev != '.';
        const bool glued = token_end < text.size() &&
                           (std::isalpha(static_cast<unsigned char>(text[token_end])) || text[token_end] == '_');
        if (standalone && !decimal && !glued) {
            return checked(read_int(text, start)->value, scale_min, scale_max, text);
        }
        i = token_end;
    }
    throw Error(ErrorCode::ScoreParseError, "no score found in: " + std::string(text.substr(0, 120)));
}

CriterionScore evaluate_report(const ReportRecord& report, const Criterion& c, const EvaluationSteps& steps,
                               int n_samples, const ChatClient& client, const std::string& model_id) {
    if (n_samples < 1) throw Error(ErrorCode::ConfigError, "n_samples must be at least 1");
    const auto prompt = evaluation_prompt(c, steps, report.report);
    CriterionScore out{c.name, 0.0, {}};
    long long sum = 0;
    for (int i = 0; i < n_samples; ++i) {
        auto req = ChatRequest::user(model_id, prompt, kEvaluationTemperature,
                                     "eval/" + report.record_id + "/" + c.name + "/" + std::to_string(i));
        auto response = client.complete(req);
        sum += parse_score(response.content, c.scale_min, c.scale_max);
        out.raw_responses.push_back(std::move(response.content));
    }
    if (n_samples == 1) {
        out.score = static_cast<double>(sum);
    } else {
        out.score = std::round(static_cast<double>(sum) / n_samples * 10.0) / 10.0;
    }
    return out;
}

void EvaluationRecord::validate() const {
    for (const auto& c : criteria()) {
        auto it = scores.find(c.name);
        if (it == scores.end()) {
            throw Error(ErrorCode::IncompleteResponse, "evaluation of " + report_record_id + " lacks " + c.name);
        }
        if (!(it->second >= c.scale_min && it->second <= c.scale_max)) {
            throw Error(ErrorCode::ScoreOutOfRange, "evaluation of " + report_record_id + ": " + c.name +
                                                        " = " + std::to_string(it->second));
        }
    }
    if (n_samples < 1) throw Error(ErrorCode::ConfigError, "n_samples must be at least 1");
}

json EvaluationRecord::to_json() const {
    return {{"report_record_id", report_record_id},
            {"rater", {{"kind", rater.kind == Rater::Kind::Machine ? "machine" : "human"}, {"id", rater.id}}},
            {"scores", scores},
            {"n_samples", n_samples},
            {"raw_responses", raw_responses},
            {"labels", labels}};
}

EvaluationRecord EvaluationRecord::from_json(const json& j) {
    EvaluationRecord r;
    try {
        r.report_record_id = j.at("report_record_id").get<std::string>();
        const auto& rater = j.at("rater");
        r.rater.kind = rater.at("kind").get<std::string>() == "human" ? Rater::Kind::Human : Rater::Kind::Machine;
        r.rater.id = rater.at("id").get<std::string>();
        r.scores = j.at("scores").get<std::map<std::string, double>>();
        r.n_samples = j.value("n_samples", 1);
        r.raw_responses = j.value("raw_responses", std::vector<std::string>{});
        r.labels = j.value("labels", std::map<std::string, std::string>{});
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("evaluation record: ") + e.what());
    }
    return r;
}

std::map<std::string, std::string> report_labels(const ReportRecord& r) {
    std::map<std::string, std::string> labels{{"writer", r.model_id}, {"match_id", r.match_id}};
    if (r.data_type) labels["data_type"] = std::string(to_string(*r.data_type));
    if (r.icl) labels["icl"] = std::string(to_string(*r.icl));
    return labels;
}

EvaluationRunResult evaluate_reports(std::span<const ReportRecord> reports, const EvaluationConfig& cfg,
                                     const ChatClient& client, StepsCache& cache) {
    if (cfg.n_samples < 1) throw Error(ErrorCode::ConfigError, "n_samples must be at least 1");
    const auto& all = criteria();

    std::array<std::optional<EvaluationSteps>, kCriterionCount> steps;
    std::array<std::string, kCriterionCount> steps_error;
    std::array<ErrorCode, kCriterionCount> steps_code{};
    for (std::size_t c = 0; c < all.size(); ++c) {
        try {
            steps[c] = auto_steps(all[c], client, cfg.judge_model, cache);
        } catch (const Error& e) {
            steps_error[c] = e.what();
            steps_code[c] = e.code();
        }
    }

    struct Slot {
        std::optional<CriterionScore> score;
        std::optional<EvaluationFailure> failure;
    };
    const std::size_t n_tasks = reports.size() * all.size();
    std::vector<Slot> slots(n_tasks);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) {
            const auto& report = reports[i / all.size()];
            const auto c = i % all.size();
            if (!steps[c]) {
                slots[i].failure = EvaluationFailure{report.record_id, all[c].name, steps_code[c], steps_error[c]};
                continue;
            }
            try {
                slots[i].score = evaluate_report(report, all[c], *steps[c], cfg.n_samples, client, cfg.judge_model);
            } catch (const Error& e) {
                slots[i].failure = EvaluationFailure{report.record_id, all[c].name, e.code(), e.what()};
            }
        }
    };
    const auto n_threads = std::min(std::max<std::size_t>(cfg.jobs, 1), std::max<std::size_t>(n_tasks, 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    }

    EvaluationRunResult result;
    for (std::size_t r = 0; r < reports.size(); ++r) {
        EvaluationRecord rec;
        rec.report_record_id = reports[r].record_id;
        rec.rater = {Rater::Kind::Machine, cfg.judge_model};
        rec.n_samples = cfg.n_samples;
        rec.labels = report_labels(reports[r]);
        bool complete = true;
        for (std::size_t c = 0; c < all.size(); ++c) {
            auto& slot = slots[r * all.size() + c];
            if (slot.failure) {
                result.failures.push_back(std::move(*slot.failure));
                complete = false;
                continue;
            }
            rec.scores[all[c].name] = slot.score->score;
            for (auto& raw : slot.score->raw_responses) rec.raw_responses.push_back(std::move(raw));
        }
        if (complete) result.records.push_back(std::move(rec));
    }
    return result;
}

Grouping parse_grouping(std::string_view s) {
    const auto t = trim(s);
    if (t == "icl+datatype" || t == "datatype+icl" || t == "icl") return Grouping::IclDataType;
    if (t == "writer") return Grouping::Writer;
    throw Error(ErrorCode::ConfigError, "unknown grouping '" + std::string(s) + "'");
}

AggregateRow make_row(std::string key, const std::array<double, kCriterionCount>& means, std::size_t n) {
    AggregateRow row{std::move(key), means, 0.0, n};
    row.overall = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
    return row;
}

std::string group_key(const EvaluationRecord& r, Grouping g) {
    if (g == Grouping::Writer) {
        auto it = r.labels.find("writer");
        return it == r.labels.end() ? r.rater.id : it->second;
    }
    auto dt = r.labels.find("data_type");
    auto icl = r.labels.find("icl");
    if (dt == r.labels.end() || icl == r.labels.end()) return {};
    return dt->second + "+" + icl->second;
}

std::vector<AggregateRow> aggregate(std::span<const EvaluationRecord> records, Grouping g,
                                    const std::vector<std::string>& required_keys) {
    if (records.empty()) throw Error(ErrorCode::EmptyGroup, "no evaluation records to aggregate");
    std::map<std::string, std::pair<std::array<double, kCriterionCount>, std::size_t>> sums;
    for (const auto& r : records) {
        const auto key = group_key(r, g);
        if (key.empty()) continue;
        r.validate();
        auto& [sum, n] = sums[key];
        for (std::size_t c = 0; c < kCriterionCount; ++c) sum[c] += r.scores.at(criteria()[c].name);
        ++n;
    }
    for (const auto& k : required_keys) {
        if (!sums.contains(k)) throw Error(ErrorCode::EmptyGroup, "group '" + k + "' has no records");
    }
    if (sums.empty()) throw Error(ErrorCode::EmptyGroup, "no record carries the grouping labels");

    std::vector<AggregateRow> rows;
    for (const auto& [key, entry] : sums) {
        std::array<double, kCriterionCount> means{};
        for (std::size_t c = 0; c < kCriterionCount; ++c) means[c] = entry.first[c] / static_cast<double>(entry.second);
        rows.push_back(make_row(key, means, entry.second));
    }
    if (g == Grouping::IclDataType) {
        std::stable_sort(rows.begin(), rows.end(), [](const AggregateRow& a, const AggregateRow& b) {
            return std::pair(grouping_rank(a.key), a.key) < std::pair(grouping_rank(b.key), b.key);
        });
    }
    return rows;
}

std::string render_table_text(std::span<const AggregateRow> rows, Grouping g) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({g == Grouping::Writer ? "Writer" : "Data Type + ICL", "Coherence", "Consistency",
                     "Excitement", "Fluency", "Avg."});
    for (const auto& r : rows) {
        cells.push_back({pretty_key(r.key, g), fmt(r.means[0], 2), fmt(r.means[1], 2), fmt(r.means[2], 2),
                         fmt(r.means[3], 2), fmt(r.overall, 3)});
    }
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    }
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t i = 0; i < cells[r].size(); ++i) {
            const auto& cell = cells[r][i];
            if (i == 0) {
                out += cell + std::string(width[i] - cell.size(), ' ');
            } else {
                out += "  " + std::string(width[i] - cell.size(), ' ') + cell;
            }
        }
        out += '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w;
            out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
        }
    }
    return out;
}

std::string render_table_csv(std::span<const AggregateRow> rows, Grouping g) {
    std::string out = g == Grouping::Writer ? "writer" : "data_type+icl";
    out += ",coherence,consistency,excitement,fluency,avg,n\n";
    for (const auto& r : rows) {
        out += csv_quote(r.key);
        for (double m : r.means) out += "," + fmt(m, 4);
        out += "," + fmt(r.overall, 4) + "," + std::to_string(r.n) + "\n";
    }
    return out;
}

}  // namespace badge
