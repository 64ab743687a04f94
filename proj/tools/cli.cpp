#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "badge/annotation_service.hpp"
#include "badge/evaluator.hpp"
#include "badge/generation.hpp"
#include "badge/human_eval.hpp"
#include "badge/match_data.hpp"
#include "badge/prompt_builder.hpp"
#include "badge/run_store.hpp"
#include "badge/stats_engine.hpp"
#include "badge/util.hpp"

namespace badge {

namespace fs = std::filesystem;

ExitCode exit_code_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptyInput:
        case ErrorCode::MalformedHeader:
        case ErrorCode::FieldCountMismatch:
        case ErrorCode::NonIntegerScore:
        case ErrorCode::InconsistentMapping:
        case ErrorCode::AmbiguousMapping:
        case ErrorCode::InvalidMatch:
        case ErrorCode::TiedFinalScore:
        case ErrorCode::InvalidSet:
        case ErrorCode::ValidationFailed:
        case ErrorCode::IncompleteResponse:
        case ErrorCode::ScoreOutOfRange:
        case ErrorCode::DuplicateAuthor:
            return kExitValidation;
        case ErrorCode::ConfigError:
        case ErrorCode::MissingExemplars:
        case ErrorCode::EmptyExemplarFile:
        case ErrorCode::MissingTemplate:
        case ErrorCode::AuthError:
            return kExitConfig;
        default:
            return kExitRuntime;
    }
}

namespace {

std::string describe(const ValidationIssue& issue) {
    std::string where;
    if (issue.set_number) where += "set " + std::to_string(*issue.set_number) + " ";
    if (issue.rally_index) where += "rally " + std::to_string(*issue.rally_index) + " ";
    return where + "[" + issue.rule + "] " + issue.message;
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

const PromptTemplates& templates_from(const std::string& dir, std::optional<PromptTemplates>& holder) {
    if (dir.empty()) return PromptTemplates::builtin();
    holder = PromptTemplates::load(dir);
    return *holder;
}

std::shared_ptr<ChatBackend> backend_from(const std::string& config_path, const std::string& mock_script,
                                          const std::string& key_env, BackendConfig& backend_cfg) {
    if (!config_path.empty()) {
        auto cfg = PipelineConfig::load(config_path);
        backend_cfg = cfg.backend;
        if (!mock_script.empty()) return std::make_shared<MockBackend>(MockScript::load(mock_script));
        return make_backend(cfg);
    }
    if (!key_env.empty()) backend_cfg.api_key_env = key_env;
    if (!mock_script.empty()) return std::make_shared<MockBackend>(MockScript::load(mock_script));
    return std::make_shared<HttpBackend>(backend_cfg);
}

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::string runs_dir = "runs";
    bool runs_dir_given = false;
    std::size_t jobs = 0;
};

int cmd_validate(Context& cx, const std::string& path) {
    ValidationReport report;
    std::string label = path;
    if (fs::is_regular_file(path) && fs::path(path).extension() == ".csv") {
        const auto set = parse_set_csv(read_file(path));
        report = validate_set(set);
    } else {
        const auto match = load_match(path);
        label = match.match_id;
        report = validate_match(match);
    }
    for (const auto& w : report.warnings) cx.err << "warning: " << describe(w) << "\n";
    for (const auto& e : report.errors) cx.err << "error: " << describe(e) << "\n";
    if (!report.ok()) {
        cx.err << label << ": " << report.errors.size() << " error(s)\n";
        return kExitValidation;
    }
    cx.out << label << ": ok\n";
    return kExitOk;
}

int cmd_qa(Context& cx, const std::string& path, int set_number, const std::string& player_a,
           const std::string& player_b) {
    CsvParseOptions opts;
    opts.set_number = set_number;
    if (!player_a.empty() && !player_b.empty()) {
        opts.players = SideMapping{player_a, player_b};
    } else {
        if (!player_a.empty()) opts.known_players.push_back(player_a);
        if (!player_b.empty()) opts.known_players.push_back(player_b);
    }
    const auto set = parse_set_csv(read_file(path), opts);
    cx.out << render_qa(answer_questions(set));
    return kExitOk;
}

struct PromptArgs {
    std::string match;
    std::string data_type = "csv";
    std::string icl = "zero_shot";
    std::string exemplars = "exemplars";
    std::string templates;
    int set_number = 0;
    std::size_t few_shot_k = 2;
};

int cmd_prompt(Context& cx, const PromptArgs& a) {
    const auto dt = parse_data_type(a.data_type);
    const auto icl = parse_icl_method(a.icl);
    const auto match = load_match(a.match);
    const auto validation = validate_match(match);
    if (!validation.ok()) {
        for (const auto& e : validation.errors) cx.err << "error: " << describe(e) << "\n";
        return kExitValidation;
    }
    std::vector<Exemplar> exemplars;
    if (required_exemplars(icl, a.few_shot_k) > 0) exemplars = load_exemplars(a.exemplars);
    std::optional<PromptTemplates> holder;
    const auto& templates = templates_from(a.templates, holder);
    std::span<const GameSet> sets(match.sets);
    if (a.set_number > 0) {
        auto it = std::find_if(match.sets.begin(), match.sets.end(),
                               [&](const GameSet& s) { return s.set_number == a.set_number; });
        if (it == match.sets.end()) throw Error(ErrorCode::ValidationFailed, "no set " + std::to_string(a.set_number));
        sets = std::span<const GameSet>(&*it, 1);
    }
    const auto bundle = build_prompt(dt, icl, match, sets, exemplars, templates, PromptOptions{a.few_shot_k});
    cx.out << bundle.render() << "\n";
    return kExitOk;
}

struct GenerateArgs {
    std::string config;
    std::string run_id;
    std::string mock_script;
    std::string templates;
};

int cmd_generate(Context& cx, const GenerateArgs& a) {
    auto cfg = PipelineConfig::load(a.config);
    if (cx.jobs > 0) cfg.generation.jobs = cx.jobs;
    if (cx.runs_dir_given) cfg.runs_dir = cx.runs_dir;
    if (!a.mock_script.empty()) {
        cfg.backend_kind = BackendKind::Mock;
        cfg.mock_script = a.mock_script;
    }
    const auto matches = load_matches(cfg.data_dir);
    if (matches.empty()) throw Error(ErrorCode::ConfigError, "no matches under " + cfg.data_dir.string());

    std::vector<Exemplar> exemplars;
    if (!cfg.generation.exemplar_dir.empty()) exemplars = load_exemplars(cfg.generation.exemplar_dir);
    std::optional<PromptTemplates> holder;
    const auto& templates = templates_from(a.templates, holder);

    RunManifest manifest;
    manifest.dataset_hash = dataset_hash(matches);
    for (const auto& m : matches) manifest.match_ids.push_back(m.match_id);
    manifest.run_id = !a.run_id.empty() ? a.run_id : cfg.run_id.value_or(new_run_id(manifest.dataset_hash));
    manifest.generation = cfg.generation;
    manifest.backend = backend_summary(cfg.backend, to_string(cfg.backend_kind));
    manifest.tool_version = version();
    manifest.template_version = templates.version();
    manifest.created_at = utc_timestamp();

    RunStore store(cfg.runs_dir, manifest.run_id);
    if (store.exists()) throw Error(ErrorCode::ConfigError, "run " + manifest.run_id + " already exists");
    store.write_manifest(manifest);

    ChatClient::Options options;
    options.journal_path = store.journal_path();
    ChatClient client(make_backend(cfg), cfg.backend, options);
    GenerationContext ctx{client, exemplars, templates};
    cx.err << "generating " << matches.size() << " match(es) x " << cfg.generation.cells().size() << " cell(s)\n";
    const auto result = run_matrix(matches, cfg.generation, ctx);

    for (const auto& r : result.records) store.write_report(r);
    nlohmann::json failures = nlohmann::json::array();
    bool only_validation = true;
    for (const auto& f : result.failures) {
        failures.push_back(f.to_json());
        cx.err << "failed: " << f.match_id << " " << f.cell.label() << ": " << f.message << "\n";
        only_validation = only_validation && exit_code_for(f.code) == kExitValidation;
    }
    store.write_failures(failures);
    cx.err << result.records.size() << " report(s), " << result.failures.size() << " failure(s) in "
           << store.dir().string() << "\n";
    cx.out << manifest.run_id << "\n";
    if (result.failures.empty()) return kExitOk;
    return only_validation ? kExitValidation : kExitRuntime;
}

struct EvaluateArgs {
    std::string run;
    std::string config;
    std::string mock_script;
    std::string judge_model{kDefaultJudgeModel};
    std::string key_env;
    int samples = 1;
};

int cmd_evaluate(Context& cx, const EvaluateArgs& a) {
    auto store = RunStore::open(cx.runs_dir, a.run);
    const auto reports = store.reports();
    if (reports.empty()) throw Error(ErrorCode::ValidationFailed, "run " + a.run + " has no reports");

    BackendConfig backend_cfg;
    auto backend = backend_from(a.config, a.mock_script, a.key_env, backend_cfg);
    ChatClient::Options options;
    options.journal_path = store.journal_path();
    ChatClient client(backend, backend_cfg, options);

    EvaluationConfig ecfg;
    ecfg.judge_model = a.judge_model;
    ecfg.n_samples = a.samples;
    ecfg.jobs = cx.jobs > 0 ? cx.jobs : 1;
    StepsCache cache;
    cx.err << "evaluating " << reports.size() << " report(s) with " << ecfg.judge_model << "\n";
    const auto result = evaluate_reports(reports, ecfg, client, cache);

    for (const auto& r : result.records) {
        store.write_eval(r);
        cx.out << r.report_record_id;
        for (const auto& c : criteria()) cx.out << "\t" << r.scores.at(c.name);
        cx.out << "\n";
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : result.failures) {
        failures.push_back({{"report_record_id", f.report_record_id},
                            {"criterion", f.criterion},
                            {"code", std::string(to_string(f.code))},
                            {"message", f.message}});
        cx.err << "failed: " << f.report_record_id << " " << f.criterion << ": " << f.message << "\n";
    }
    store.write_failures(failures, "eval_failures.json");
    cx.err << result.records.size() << " evaluation(s), " << result.failures.size() << " failure(s)\n";
    return result.failures.empty() ? kExitOk : kExitRuntime;
}

int cmd_aggregate(Context& cx, const std::string& run, const std::string& group_by, bool csv) {
    const auto grouping = parse_grouping(group_by);
    const auto store = RunStore::open(cx.runs_dir, run);
    const auto records = store.evals();
    const auto rows = aggregate(records, grouping);
    cx.out << (csv ? render_table_csv(rows, grouping) : render_table_text(rows, grouping));
    return kExitOk;
}

int cmd_import_human(Context& cx, const std::string& run, const std::string& match_id, const std::string& file) {
    auto store = RunStore::open(cx.runs_dir, run);
    const auto manifest = store.manifest();
    if (std::find(manifest.match_ids.begin(), manifest.match_ids.end(), match_id) == manifest.match_ids.end()) {
        throw Error(ErrorCode::ValidationFailed, "run " + run + " has no match " + match_id);
    }
    const auto record = import_human_report(match_id, read_file(file));
    store.write_report(record);
    cx.out << record.record_id << "\n";
    return kExitOk;
}

struct SessionArgs {
    std::string run;
    std::vector<std::string> matches;
    std::uint64_t seed = 0;
    std::string data_type = "csv";
    std::string icl = "cot";
};

int cmd_sessions_create(Context& cx, const SessionArgs& a) {
    const auto dt = parse_data_type(a.data_type);
    const auto icl = parse_icl_method(a.icl);
    const auto store = RunStore::open(cx.runs_dir, a.run);
    const auto reports = store.reports();

    auto match_ids = a.matches;
    if (match_ids.empty()) {
        std::set<std::string> with_human;
        for (const auto& r : reports) {
            if (r.model_id == kHumanWriter) with_human.insert(r.match_id);
        }
        match_ids.assign(with_human.begin(), with_human.end());
    }
    if (match_ids.empty()) throw Error(ErrorCode::ValidationFailed, "no match has an imported human report");

    HumanEvalStore human(store.human_dir());
    for (std::size_t i = 0; i < match_ids.size(); ++i) {
        const auto& match_id = match_ids[i];
        std::map<Author, AuthoredReport> picked;
        for (const auto& r : reports) {
            if (r.match_id != match_id || r.set_number) continue;
            const auto author = author_from_writer(r.model_id);
            if (!author || picked.contains(*author)) continue;
            if (*author != Author::Human && (r.data_type != dt || r.icl != icl)) continue;
            picked[*author] = {*author, r.report, r.record_id};
        }
        std::array<AuthoredReport, 3> trio;
        for (std::size_t k = 0; k < 3; ++k) {
            auto it = picked.find(kAllAuthors[k]);
            if (it == picked.end()) {
                throw Error(ErrorCode::ValidationFailed, "match " + match_id + " has no " +
                                                             std::string(to_string(kAllAuthors[k])) + " report for " +
                                                             a.data_type + "+" + a.icl);
            }
            trio[k] = it->second;
        }
        const auto session = create_session(match_id, trio, a.seed + i);
        human.save_session(session);
        cx.out << session.session_id << "\t" << match_id << "\n";
    }
    return kExitOk;
}

std::atomic<AnnotationService*> g_service{nullptr};

extern "C" void stop_service(int) {
    if (auto* s = g_service.load()) s->stop();
}

int cmd_serve(Context& cx, const std::string& run, const std::string& host, int port, const std::string& static_dir,
              bool any_origin) {
    const auto store = RunStore::open(cx.runs_dir, run);
    HumanEvalStore human(store.human_dir());
    ServiceOptions options;
    options.host = host;
    options.port = port;
    if (!static_dir.empty()) options.static_dir = static_dir;
    options.allow_any_origin = any_origin;
    AnnotationService service(human, options);
    const int bound = service.bind();
    cx.err << "serving run " << run << " on http://" << host << ":" << bound << "\n";
    g_service = &service;
    std::signal(SIGINT, stop_service);
    std::signal(SIGTERM, stop_service);
    service.listen();
    g_service = nullptr;
    return kExitOk;
}

int cmd_agreement(Context& cx, const std::string& run, const std::string& pairing_name, const std::string& csv_out) {
    Pairing pairing;
    if (pairing_name == "cells") {
        pairing = Pairing::CellMeans;
    } else if (pairing_name == "responses") {
        pairing = Pairing::PerResponse;
    } else {
        throw Error(ErrorCode::ConfigError, "--pairing must be 'cells' or 'responses'");
    }
    const auto store = RunStore::open(cx.runs_dir, run);
    const HumanEvalStore human(store.human_dir());
    const auto sessions = human.sessions();
    const auto responses = human.responses();

    std::set<std::string> shown;
    for (const auto& s : sessions) {
        for (const auto& item : s.items) shown.insert(item.record_id);
    }
    std::vector<EvaluationRecord> evals;
    for (auto& e : store.evals()) {
        if (shown.contains(e.report_record_id)) evals.push_back(std::move(e));
    }
    const auto machine = machine_means_by_author(evals);
    const auto stats = machine_human_agreement(machine, sessions, responses, pairing);
    const auto humans = human_means(sessions, responses);

    cx.out << "Author\tJudge\tCoherence\tConsistency\tExcitement\tFluency\tAvg.\n";
    for (auto author : kAllAuthors) {
        if (auto m = machine.find(author); m != machine.end()) {
            const auto row = make_row(std::string(to_string(author)), m->second);
            cx.out << row.key << "\tmachine";
            for (double v : row.means) cx.out << "\t" << fixed(v, 2);
            cx.out << "\t" << fixed(row.overall, 3) << "\n";
        }
        if (auto h = humans.find(author); h != humans.end()) {
            cx.out << to_string(author) << "\thuman";
            for (double v : h->second.means) cx.out << "\t" << fixed(v, 2);
            cx.out << "\t" << fixed(h->second.overall, 3) << "\n";
        }
    }
    cx.out << "pearson_r\t" << fixed(stats.pearson_r, 3) << "\t(" << pairing_name << ", n=" << stats.machine.size()
           << ")\n";
    for (const auto& [author, counts] : stats.guess_counts) {
        cx.out << "guess_accuracy\t" << to_string(author) << "\t" << counts.first << "/" << counts.second << "\t"
               << fixed(stats.guess_accuracy.at(author), 2) << "\n";
    }
    if (!csv_out.empty()) write_file_atomic(csv_out, export_responses_csv(sessions, responses));
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Badminton report generation and evaluation", "badge"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);
    Context cx{out, err};
    app.add_option("--runs-dir", cx.runs_dir, "Directory holding run folders")->capture_default_str();
    app.add_option("--jobs", cx.jobs, "Parallel requests for generate/evaluate");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Check a match directory (or one set CSV)");
    validate->add_option("match", validate_path, "Match directory, match.json or set CSV")->required();

    std::string qa_path;
    std::string qa_a;
    std::string qa_b;
    int qa_set = 1;
    auto* qa = app.add_subcommand("qa", "Print the eight Q&A pairs of one set");
    qa->add_option("set_csv", qa_path, "Set CSV file")->required()->check(CLI::ExistingFile);
    qa->add_option("--set-number", qa_set, "Set number")->capture_default_str();
    qa->add_option("--player-a", qa_a, "Player in the roundscore_A column");
    qa->add_option("--player-b", qa_b, "Player in the roundscore_B column");

    PromptArgs pa;
    auto* prompt = app.add_subcommand("prompt", "Print the prompt for one match");
    prompt->add_option("match", pa.match, "Match directory")->required();
    prompt->add_option("--data-type", pa.data_type, "csv or qa")->capture_default_str();
    prompt->add_option("--icl", pa.icl, "zero_shot, one_shot, few_shot or cot")->capture_default_str();
    prompt->add_option("--exemplars", pa.exemplars, "Exemplar report directory")->capture_default_str();
    prompt->add_option("--templates", pa.templates, "Template directory overriding the built-in set");
    prompt->add_option("--set", pa.set_number, "Only this set");
    prompt->add_option("--few-shot-k", pa.few_shot_k, "Examples in few-shot prompts")->capture_default_str();

    GenerateArgs ga;
    auto* generate = app.add_subcommand("generate", "Run the generation matrix into a new run directory");
    generate->add_option("--config", ga.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    generate->add_option("--run-id", ga.run_id, "Run id (default: timestamp + hash)");
    generate->add_option("--mock-script", ga.mock_script, "Use the mock backend with this script")
        ->check(CLI::ExistingFile);
    generate->add_option("--templates", ga.templates, "Template directory overriding the built-in set");

    EvaluateArgs ea;
    auto* evaluate = app.add_subcommand("evaluate", "Score every report of a run on the four criteria");
    evaluate->add_option("--run", ea.run, "Run id")->required();
    evaluate->add_option("--config", ea.config, "Pipeline config for the backend")->check(CLI::ExistingFile);
    evaluate->add_option("--mock-script", ea.mock_script, "Use the mock backend with this script")
        ->check(CLI::ExistingFile);
    evaluate->add_option("--judge-model", ea.judge_model, "Judge model id")->capture_default_str();
    evaluate->add_option("--samples", ea.samples, "Judge samples per criterion")->capture_default_str()
        ->check(CLI::PositiveNumber);
    evaluate->add_option("--api-key-env", ea.key_env, "Environment variable holding the API key");

    std::string agg_run;
    std::string group_by;
    bool agg_csv = false;
    auto* aggregate_cmd = app.add_subcommand("aggregate", "Print mean scores per group");
    aggregate_cmd->add_option("--run", agg_run, "Run id")->required();
    aggregate_cmd->add_option("--group-by", group_by, "icl+datatype or writer")->required();
    aggregate_cmd->add_flag("--csv", agg_csv, "CSV instead of a text table");

    std::string imp_run;
    std::string imp_match;
    std::string imp_file;
    auto* import_cmd = app.add_subcommand("import-human", "Add a human-written report to a run");
    import_cmd->add_option("--run", imp_run, "Run id")->required();
    import_cmd->add_option("--match", imp_match, "Match id")->required();
    import_cmd->add_option("report", imp_file, "Report text file")->required()->check(CLI::ExistingFile);

    SessionArgs sa;
    auto* sessions = app.add_subcommand("sessions", "Blind evaluation sessions");
    sessions->require_subcommand(1);
    auto* create = sessions->add_subcommand("create", "One session per match: human, GPT-3.5 and GPT-4 reports");
    create->add_option("--run", sa.run, "Run id")->required();
    create->add_option("--match", sa.matches, "Match id (repeatable; default: every match with a human report)");
    create->add_option("--seed", sa.seed, "Shuffle seed; match i uses seed + i")->required();
    create->add_option("--data-type", sa.data_type, "Data type of the model reports")->capture_default_str();
    create->add_option("--icl", sa.icl, "ICL method of the model reports")->capture_default_str();

    std::string serve_run;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
    bool any_origin = false;
    auto* serve = app.add_subcommand("serve", "Serve sessions and collect responses over HTTP");
    serve->add_option("--run", serve_run, "Run id")->required();
    serve->add_option("--host", host, "Bind address")->capture_default_str();
    serve->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str()->check(CLI::Range(0, 65535));
    serve->add_option("--static-dir", static_dir, "Built UI bundle served at /")->check(CLI::ExistingDirectory);
    serve->add_flag("--dev-cors", any_origin, "Allow cross-origin requests");

    std::string ag_run;
    std::string pairing = "cells";
    std::string csv_out;
    auto* agreement = app.add_subcommand("agreement", "Pearson r between judge and raters, and guess accuracy");
    agreement->add_option("--run", ag_run, "Run id")->required();
    agreement->add_option("--pairing", pairing, "cells or responses")->capture_default_str();
    agreement->add_option("--export-csv", csv_out, "Also write the response matrix as CSV");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    cx.runs_dir_given = app.get_option("--runs-dir")->count() > 0;
    try {
        if (*validate) return cmd_validate(cx, validate_path);
        if (*qa) return cmd_qa(cx, qa_path, qa_set, qa_a, qa_b);
        if (*prompt) return cmd_prompt(cx, pa);
        if (*generate) return cmd_generate(cx, ga);
        if (*evaluate) return cmd_evaluate(cx, ea);
        if (*aggregate_cmd) return cmd_aggregate(cx, agg_run, group_by, agg_csv);
        if (*import_cmd) return cmd_import_human(cx, imp_run, imp_match, imp_file);
        if (*create) return cmd_sessions_create(cx, sa);
        if (*serve) return cmd_serve(cx, serve_run, host, port, static_dir, any_origin);
        if (*agreement) return cmd_agreement(cx, ag_run, pairing, csv_out);
    } catch (const Error& e) {
        err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}

}  // namespace badge
