#include "badge/prompt_builder.hpp"

#include <algorithm>
#include <cctype>

#include "badge/error.hpp"
#include "badge/stats_engine.hpp"
#include "badge/util.hpp"
#include "builtin_templates.hpp"

namespace badge {

namespace {

std::string normalize_token(std::string_view s) {
    std::string out;
    for (char c : trim(s)) {
        if (c == '-' || c == ' ') c = '_';
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::string file_key(DataType t, IclMethod m) {
    return std::string(to_string(t)) + "/" + std::string(to_string(m)) + ".txt";
}

std::string strip_trailing_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

std::string examples_block(IclMethod icl, std::span<const Exemplar> exemplars, std::size_t k) {
    if (icl == IclMethod::OneShot) {
        return "Example:\n" + strip_trailing_newlines(exemplars.front().report_text);
    }
    std::string out;
    for (std::size_t i = 0; i < k; ++i) {
        if (i > 0) out += "\n\n";
        out += "Example " + std::to_string(i + 1) + ":\n" + strip_trailing_newlines(exemplars[i].report_text);
    }
    return out;
}

}  // namespace

std::string_view to_string(DataType t) noexcept {
    return t == DataType::CSV ? "csv" : "qa";
}

std::string_view to_string(IclMethod m) noexcept {
    switch (m) {
        case IclMethod::ZeroShot: return "zero_shot";
        case IclMethod::OneShot: return "one_shot";
        case IclMethod::FewShot: return "few_shot";
        case IclMethod::CoT: return "cot";
    }
    return "unknown";
}

DataType parse_data_type(std::string_view s) {
    const auto t = normalize_token(s);
    if (t == "csv") return DataType::CSV;
    if (t == "qa" || t == "q&a") return DataType::QA;
    throw Error(ErrorCode::ConfigError, "unknown data type '" + std::string(s) + "'");
}

IclMethod parse_icl_method(std::string_view s) {
    const auto t = normalize_token(s);
    if (t == "zero_shot" || t == "zeroshot") return IclMethod::ZeroShot;
    if (t == "one_shot" || t == "oneshot") return IclMethod::OneShot;
    if (t == "few_shot" || t == "fewshot") return IclMethod::FewShot;
    if (t == "cot") return IclMethod::CoT;
    throw Error(ErrorCode::ConfigError, "unknown ICL method '" + std::string(s) + "'");
}

std::size_t required_exemplars(IclMethod m, std::size_t few_shot_k) noexcept {
    switch (m) {
        case IclMethod::OneShot: return 1;
        case IclMethod::FewShot: return few_shot_k;
        default: return 0;
    }
}

std::vector<Exemplar> load_exemplars(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw Error(ErrorCode::IoError, "exemplar directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
    std::vector<Exemplar> out;
    for (const auto& f : files) {
        auto text = read_file(f);
        if (trim(text).empty()) {
            throw Error(ErrorCode::EmptyExemplarFile, "exemplar file is empty: " + f.filename().string());
        }
        out.push_back({f.stem().string(), std::move(text)});
    }
    return out;
}

const PromptTemplates& PromptTemplates::builtin() {
    static const PromptTemplates instance = from_files(detail::builtin_template_files(), "<builtin>");
    return instance;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
    Files files;
    auto read = [&](const std::string& rel) {
        const auto p = dir / rel;
        if (!std::filesystem::exists(p)) {
            throw Error(ErrorCode::MissingTemplate, "missing template file " + p.string());
        }
        files[rel] = read_file(p);
    };
    read("VERSION");
    read("persona.txt");
    for (auto t : kAllDataTypes) {
        read(std::string(to_string(t)) + "/steps.txt");
        for (auto m : kAllIclMethods) read(file_key(t, m));
    }
    return from_files(files, dir.string());
}

PromptTemplates PromptTemplates::from_files(const Files& files, std::string_view origin) {
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = files.find(key);
        if (it == files.end()) {
            throw Error(ErrorCode::MissingTemplate, std::string(origin) + ": missing " + key);
        }
        return it->second;
    };
    PromptTemplates t;
    t.version_ = std::string(trim(get("VERSION")));
    t.persona_ = std::string(trim(get("persona.txt")));
    for (auto dt : kAllDataTypes) {
        t.steps_[dt] = strip_trailing_newlines(get(std::string(to_string(dt)) + "/steps.txt"));
        for (auto m : kAllIclMethods) {
            const auto key = file_key(dt, m);
            auto body = strip_trailing_newlines(get(key));
            if (!body.starts_with("{persona}")) {
                throw Error(ErrorCode::MissingTemplate, std::string(origin) + ": " + key +
                                                            " must start with {persona}");
            }
            if (count_occurrences(body, "{payload}") != 1) {
                throw Error(ErrorCode::MissingTemplate,
                            std::string(origin) + ": " + key + " must contain {payload} exactly once");
            }
            const bool wants_examples = m == IclMethod::OneShot || m == IclMethod::FewShot;
            if (wants_examples && body.find("{examples}") == std::string::npos) {
                throw Error(ErrorCode::MissingTemplate, std::string(origin) + ": " + key + " lacks {examples}");
            }
            if (m == IclMethod::CoT && body.find("{steps}") == std::string::npos) {
                throw Error(ErrorCode::MissingTemplate, std::string(origin) + ": " + key + " lacks {steps}");
            }
            t.bodies_[{dt, m}] = std::move(body);
        }
    }
    return t;
}

const std::string& PromptTemplates::body(DataType t, IclMethod m) const { return bodies_.at({t, m}); }

const std::string& PromptTemplates::steps(DataType t) const { return steps_.at(t); }

std::string fill_placeholders(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find('{', pos);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find('}', open + 1);
        if (close == std::string_view::npos) break;
        out.append(tmpl.substr(pos, open - pos));
        const auto name = std::string(tmpl.substr(open + 1, close - open - 1));
        if (auto it = values.find(name); it != values.end()) {
            out += it->second;
        } else {
            out.append(tmpl.substr(open, close - open + 1));
        }
        pos = close + 1;
    }
    out.append(tmpl.substr(std::min(pos, tmpl.size())));
    return out;
}

std::string PromptBundle::render() const {
    std::string out;
    out.reserve(body.size() + data_payload.size());
    out.append(body, 0, payload_offset);
    out += data_payload;
    out.append(body, payload_offset);
    return out;
}

std::string serialize_csv(const GameSet& set) {
    std::string out;
    for (std::size_t i = 0; i < std::size(kCsvColumns); ++i) {
        if (i > 0) out += ", ";
        out += kCsvColumns[i];
    }
    out += '\n';
    for (const auto& r : set.rallies) {
        out += csv_quote(r.win_point_player) + ", " + csv_quote(r.win_reason) + ", " +
               csv_quote(r.ball_type) + ", " + csv_quote(r.lose_reason) + ", " +
               std::to_string(r.score_a) + ", " + std::to_string(r.score_b) + '\n';
    }
    return out;
}

std::string build_payload(DataType data_type, const Match& match, std::span<const GameSet> sets) {
    std::string out;
    if (!match.tournament.empty()) out += "Tournament: " + match.tournament + "\n";
    if (!match.date.empty()) out += "Date: " + match.date + "\n";
    out += "Players: " + match.player_a + " vs " + match.player_b + "\n";
    for (const auto& set : sets) {
        out += "\nSet " + std::to_string(set.set_number) + "\n";
        out += data_type == DataType::CSV ? serialize_csv(set) : render_qa(answer_questions(set));
    }
    return strip_trailing_newlines(std::move(out));
}

std::map<int, std::string> split_payload_sections(std::string_view payload) {
    std::map<int, std::string> sections;
    std::string* current = nullptr;
    for (const auto& line : split_lines(payload)) {
        if (line.starts_with("Set ") && line.size() > 4 &&
            std::all_of(line.begin() + 4, line.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            current = &sections[std::stoi(line.substr(4))];
            continue;
        }
        if (current && !trim(line).empty()) *current += line + "\n";
    }
    return sections;
}

PromptBundle build_prompt(DataType data_type, IclMethod icl, const Match& match,
                          std::span<const GameSet> sets, std::span<const Exemplar> exemplars,
                          const PromptTemplates& templates, const PromptOptions& options) {
    const auto needed = required_exemplars(icl, options.few_shot_k);
    if (exemplars.size() < needed) {
        throw Error(ErrorCode::MissingExemplars,
                    std::string(to_string(icl)) + " needs " + std::to_string(needed) +
                        " exemplar(s), " + std::to_string(exemplars.size()) + " provided");
    }
    std::map<std::string, std::string> values{{"persona", templates.persona()}};
    if (needed > 0) values["examples"] = examples_block(icl, exemplars, needed);
    if (icl == IclMethod::CoT) values["steps"] = templates.steps(data_type);

    PromptBundle bundle;
    bundle.system_preamble = templates.persona();
    const auto& tmpl = templates.body(data_type, icl);
    const auto cut = tmpl.find("{payload}");
    auto head = fill_placeholders(std::string_view(tmpl).substr(0, cut), values);
    bundle.payload_offset = head.size();
    bundle.body = std::move(head) + fill_placeholders(std::string_view(tmpl).substr(cut + 9), values);
    bundle.data_payload = build_payload(data_type, match, sets);
    bundle.icl = icl;
    bundle.data_type = data_type;
    return bundle;
}

PromptBundle build_prompt(DataType data_type, IclMethod icl, const Match& match,
                          std::span<const Exemplar> exemplars, const PromptTemplates& templates,
                          const PromptOptions& options) {
    return build_prompt(data_type, icl, match, std::span<const GameSet>(match.sets), exemplars,
                        templates, options);
}

}  // namespace badge
