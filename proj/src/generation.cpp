#include "badge/generation.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <variant>

#include "badge/util.hpp"

namespace badge {

using nlohmann::json;

namespace {

std::string describe_errors(const ValidationReport& report) {
    std::string out;
    for (const auto& e : report.errors) {
        if (!out.empty()) out += "; ";
        if (e.set_number) out += "set " + std::to_string(*e.set_number) + " ";
        if (e.rally_index) out += "rally " + std::to_string(*e.rally_index) + " ";
        out += "(" + e.rule + ") " + e.message;
    }
    return out;
}

std::string request_tag(const Match& match, const GenerationCell& cell, std::optional<int> set_number) {
    std::string tag = "gen/" + match.match_id + "/" + cell.label();
    if (set_number) tag += "/set" + std::to_string(*set_number);
    return tag;
}

}  // namespace

std::string GenerationCell::label() const {
    return std::string(to_string(data_type)) + "+" + std::string(to_string(icl)) + "/" + model_id;
}

void GenerationConfig::validate() const {
    if (data_types.empty()) throw Error(ErrorCode::ConfigError, "generation: data_types is empty");
    if (icl_methods.empty()) throw Error(ErrorCode::ConfigError, "generation: icl_methods is empty");
    if (model_ids.empty()) throw Error(ErrorCode::ConfigError, "generation: model_ids is empty");
    if (jobs == 0) throw Error(ErrorCode::ConfigError, "generation: jobs must be at least 1");
    if (few_shot_k < 2) throw Error(ErrorCode::ConfigError, "generation: few_shot_k must be at least 2");
}

std::vector<GenerationCell> GenerationConfig::cells() const {
    std::vector<GenerationCell> out;
    for (auto dt : data_types) {
        for (auto icl : icl_methods) {
            for (const auto& model : model_ids) out.push_back({dt, icl, model});
        }
    }
    return out;
}

json GenerationConfig::to_json() const {
    json dts = json::array();
    for (auto d : data_types) dts.push_back(to_string(d));
    json icls = json::array();
    for (auto m : icl_methods) icls.push_back(to_string(m));
    return {{"data_types", dts},
            {"icl_methods", icls},
            {"model_ids", model_ids},
            {"exemplar_dir", exemplar_dir.string()},
            {"granularity", granularity == Granularity::PerMatch ? "match" : "set"},
            {"temperature", temperature},
            {"max_tokens", max_tokens},
            {"few_shot_k", few_shot_k},
            {"jobs", jobs}};
}

GenerationConfig GenerationConfig::from_json(const json& j) {
    GenerationConfig cfg;
    try {
        if (j.contains("data_types")) {
            cfg.data_types.clear();
            for (const auto& d : j.at("data_types")) cfg.data_types.push_back(parse_data_type(d.get<std::string>()));
        }
        if (j.contains("icl_methods")) {
            cfg.icl_methods.clear();
            for (const auto& m : j.at("icl_methods")) cfg.icl_methods.push_back(parse_icl_method(m.get<std::string>()));
        }
        if (j.contains("model_ids")) cfg.model_ids = j.at("model_ids").get<std::vector<std::string>>();
        cfg.exemplar_dir = j.value("exemplar_dir", std::string{});
        const auto gran = j.value("granularity", std::string("match"));
        if (gran == "match") {
            cfg.granularity = Granularity::PerMatch;
        } else if (gran == "set") {
            cfg.granularity = Granularity::PerSet;
        } else {
            throw Error(ErrorCode::ConfigError, "granularity must be 'match' or 'set'");
        }
        cfg.temperature = j.value("temperature", kGenerationTemperature);
        cfg.max_tokens = j.value("max_tokens", 1024);
        cfg.few_shot_k = j.value("few_shot_k", std::size_t{2});
        cfg.jobs = j.value("jobs", std::size_t{1});
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("generation config: ") + e.what());
    }
    return cfg;
}

std::string ReportRecord::compute_id() const {
    auto j = to_json();
    j.erase("record_id");
    j.erase("created_at");
    return sha256_hex(j.dump()).substr(0, 16);
}

json ReportRecord::to_json() const {
    return {{"record_id", record_id},
            {"match_id", match_id},
            {"set_scope", set_number ? json(*set_number) : json("all")},
            {"data_type", data_type ? json(to_string(*data_type)) : json(nullptr)},
            {"icl", icl ? json(to_string(*icl)) : json(nullptr)},
            {"model_id", model_id},
            {"prompt", prompt},
            {"report", report},
            {"created_at", created_at},
            {"backend_journal_ref", backend_journal_ref}};
}

ReportRecord ReportRecord::from_json(const json& j) {
    ReportRecord r;
    try {
        r.record_id = j.at("record_id").get<std::string>();
        r.match_id = j.at("match_id").get<std::string>();
        const auto& scope = j.at("set_scope");
        if (scope.is_number_integer()) r.set_number = scope.get<int>();
        if (!j.at("data_type").is_null()) r.data_type = parse_data_type(j.at("data_type").get<std::string>());
        if (!j.at("icl").is_null()) r.icl = parse_icl_method(j.at("icl").get<std::string>());
        r.model_id = j.at("model_id").get<std::string>();
        r.prompt = j.value("prompt", "");
        r.report = j.at("report").get<std::string>();
        r.created_at = j.value("created_at", "");
        r.backend_journal_ref = j.value("backend_journal_ref", "");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("report record: ") + e.what());
    }
    return r;
}

ReportRecord import_human_report(const std::string& match_id, std::string report_text) {
    if (trim(report_text).empty()) throw Error(ErrorCode::ValidationFailed, "human report is empty");
    ReportRecord r;
    r.match_id = match_id;
    r.model_id = std::string(kHumanWriter);
    r.report = std::move(report_text);
    r.created_at = utc_timestamp();
    r.backend_journal_ref = "import/" + match_id;
    r.record_id = r.compute_id();
    return r;
}

json CellFailure::to_json() const {
    return {{"match_id", match_id},
            {"set_scope", set_number ? json(*set_number) : json("all")},
            {"cell", cell.label()},
            {"code", std::string(to_string(code))},
            {"message", message}};
}

ReportRecord generate_report(const Match& match, const GenerationCell& cell, const GenerationContext& ctx,
                             const GenerationConfig& cfg, std::optional<int> set_number) {
    const auto validation = validate_match(match);
    if (!validation.ok()) {
        throw Error(ErrorCode::ValidationFailed,
                    "match " + match.match_id + " failed validation: " + describe_errors(validation));
    }
    std::span<const GameSet> sets(match.sets);
    if (set_number) {
        auto it = std::find_if(match.sets.begin(), match.sets.end(),
                               [&](const GameSet& s) { return s.set_number == *set_number; });
        if (it == match.sets.end()) {
            throw Error(ErrorCode::ValidationFailed,
                        "match " + match.match_id + " has no set " + std::to_string(*set_number));
        }
        sets = std::span<const GameSet>(&*it, 1);
    }
    const auto bundle = build_prompt(cell.data_type, cell.icl, match, sets, ctx.exemplars, ctx.templates,
                                     PromptOptions{cfg.few_shot_k});
    auto prompt = bundle.render();
    const auto tag = request_tag(match, cell, set_number);
    auto request = ChatRequest::user(cell.model_id, prompt, cfg.temperature, tag);
    request.max_tokens = cfg.max_tokens;
    auto response = ctx.client.complete(request);
    if (trim(response.content).empty()) {
        throw Error(ErrorCode::MalformedResponse, "empty report for " + tag);
    }

    ReportRecord record;
    record.match_id = match.match_id;
    record.set_number = set_number;
    record.data_type = cell.data_type;
    record.icl = cell.icl;
    record.model_id = cell.model_id;
    record.prompt = std::move(prompt);
    record.report = std::move(response.content);
    record.created_at = utc_timestamp();
    record.backend_journal_ref = tag;
    record.record_id = record.compute_id();
    return record;
}

MatrixResult run_matrix(std::span<const Match> matches, const GenerationConfig& cfg,
                        const GenerationContext& ctx) {
    cfg.validate();
    struct Task {
        const Match* match;
        std::optional<int> set_number;
        GenerationCell cell;
    };
    std::vector<Task> tasks;
    const auto cells = cfg.cells();
    for (const auto& match : matches) {
        std::vector<std::optional<int>> scopes;
        if (cfg.granularity == Granularity::PerMatch) {
            scopes.emplace_back();
        } else {
            for (const auto& s : match.sets) scopes.emplace_back(s.set_number);
        }
        for (const auto& scope : scopes) {
            for (const auto& cell : cells) tasks.push_back({&match, scope, cell});
        }
    }

    std::vector<std::variant<std::monostate, ReportRecord, CellFailure>> slots(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
            const auto& t = tasks[i];
            try {
                slots[i] = generate_report(*t.match, t.cell, ctx, cfg, t.set_number);
            } catch (const Error& e) {
                slots[i] = CellFailure{t.match->match_id, t.set_number, t.cell, e.code(), e.what()};
            } catch (const std::exception& e) {
                slots[i] = CellFailure{t.match->match_id, t.set_number, t.cell, ErrorCode::TransportError, e.what()};
            }
        }
    };
    const auto n_threads = std::min(cfg.jobs, std::max<std::size_t>(tasks.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    }

    MatrixResult result;
    for (auto& slot : slots) {
        if (auto* r = std::get_if<ReportRecord>(&slot)) {
            result.records.push_back(std::move(*r));
        } else if (auto* f = std::get_if<CellFailure>(&slot)) {
            result.failures.push_back(std::move(*f));
        }
    }
    return result;
}

}  // namespace badge
