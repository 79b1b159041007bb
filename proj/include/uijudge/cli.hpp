#pragma once
#include "uijudge/decomposer.hpp"
#include "uijudge/gateway.hpp"
#include "uijudge/http_backend.hpp"
#include "uijudge/judge.hpp"
#include "uijudge/metrics.hpp"
#include "uijudge/trace_store.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

// Operator surface: decompose / judge / score / report subcommands.
// Exit codes: 0 success, 1 partial failure under --keep-going,
// 2 hard failure or usage error.

namespace uijudge {

struct RunConfig {
    std::filesystem::path store_root = "runs/default";
    BackendConfig decomposer;
    BackendConfig reasoner;
    BackendConfig capturer;
    int decompose_retries = 2;
    int parallel = 1;
};

namespace cli_detail {

inline BackendConfig backend_from_json(const nlohmann::json& j, const std::string& stage) {
    BackendConfig cfg;
    cfg.provider = j.value("provider", "");
    cfg.model = j.value("model", "");
    cfg.endpoint = j.value("endpoint", "");
    cfg.credential_env = j.value("credential_env", "");
    cfg.max_retries = j.value("max_retries", 2);
    cfg.requests_per_minute =
        j.value("requests_per_minute", cfg.provider == "scripted" ? 100000 : 60);
    if (cfg.provider.empty())
        throw Error("config stage `" + stage + "` needs a provider");
    return cfg;
}

} // namespace cli_detail

inline RunConfig load_run_config(const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::parse(read_file_bytes(path), nullptr, false);
    if (doc.is_discarded()) throw Error("config is not valid JSON: " + path.string());

    RunConfig cfg;
    if (doc.contains("store_root")) cfg.store_root = doc["store_root"].get<std::string>();
    cfg.decompose_retries = doc.value("decompose_retries", 2);
    cfg.parallel = doc.value("parallel", 1);
    if (!doc.contains("stages")) throw Error("config needs a `stages` object");
    const auto& stages = doc["stages"];
    if (stages.contains("decomposer"))
        cfg.decomposer = cli_detail::backend_from_json(stages["decomposer"], "decomposer");
    if (stages.contains("reasoner"))
        cfg.reasoner = cli_detail::backend_from_json(stages["reasoner"], "reasoner");
    if (stages.contains("capturer"))
        cfg.capturer = cli_detail::backend_from_json(stages["capturer"], "capturer");
    return cfg;
}

// Builds the shared gateway for one run. Scripted stages each get a
// private registry key so two stages can replay different script files;
// HTTP providers share one transport and one rate-limit bucket.
inline std::shared_ptr<ModelGateway> make_gateway(RunConfig& cfg, const EvalStore& store,
                                                  const std::string& transcript_name) {
    GatewayOptions opts;
    opts.caption_cache = std::make_shared<DiskCaptionCache>(store.captions_dir());
    opts.transcript = std::make_shared<TranscriptLog>();
    opts.transcript->attach_file(store.transcripts_dir() / (transcript_name + ".jsonl"),
                                 /*truncate=*/true);
    auto gateway = std::make_shared<ModelGateway>(std::move(opts));

    auto http = std::make_shared<HttpBackend>();
    auto wire = [&](BackendConfig& stage, const std::string& stage_name) {
        if (stage.provider.empty()) return;
        if (stage.provider == "scripted") {
            stage.provider = "scripted:" + stage_name;
            gateway->register_backend(stage.provider, ScriptedBackend::from_file(stage.endpoint));
        } else {
            gateway->register_backend(stage.provider, http);
        }
    };
    wire(cfg.decomposer, "decomposer");
    wire(cfg.reasoner, "reasoner");
    wire(cfg.capturer, "capturer");
    return gateway;
}

namespace cli_detail {

struct TaskResult {
    std::string task_id;
    bool ok = false;
    std::string message;
};

inline int summarize(std::ostream& out, const std::vector<TaskResult>& results, bool keep_going) {
    int failures = 0;
    for (const auto& r : results) {
        if (r.ok)
            out << "ok   " << r.task_id << (r.message.empty() ? "" : "  " + r.message) << "\n";
        else {
            out << "FAIL " << r.task_id << "  " << r.message << "\n";
            ++failures;
        }
    }
    out << results.size() - failures << "/" << results.size() << " tasks succeeded\n";
    if (failures == 0) return 0;
    return keep_going ? 1 : 2;
}

inline std::vector<std::string> judged_task_ids(const EvalStore& store) {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(store.judgements_dir()))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

inline std::vector<std::string> graph_task_ids(const EvalStore& store) {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(store.graphs_dir()))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace cli_detail

inline int cmd_decompose(RunConfig cfg, const std::filesystem::path& tasks_file, bool keep_going,
                         std::ostream& out) {
    EvalStore store(cfg.store_root);
    auto gateway = make_gateway(cfg, store, "decompose");
    const std::vector<TaskSpec> tasks = ingest_task_list(tasks_file);

    DecomposerOptions opts;
    opts.validation_retries = cfg.decompose_retries;

    std::vector<cli_detail::TaskResult> results;
    for (const auto& task : tasks) {
        cli_detail::TaskResult r;
        r.task_id = task.task_id;
        try {
            TaskLock lock(store, task.task_id);
            DecomposeResult res = decompose(task, cfg.decomposer, *gateway, opts);
            store_task_spec(store, task);
            store_graph(store, res.graph);
            r.ok = true;
            r.message = "(" + std::to_string(res.graph.size()) + " substates" +
                        (res.warnings.empty()
                             ? std::string(")")
                             : ", " + std::to_string(res.warnings.size()) + " warnings)");
        } catch (const Error& e) {
            r.message = e.what();
        }
        results.push_back(std::move(r));
        if (!results.back().ok && !keep_going) break;
    }
    return cli_detail::summarize(out, results, keep_going);
}

inline int cmd_judge(RunConfig cfg, bool keep_going, int parallel, std::ostream& out) {
    EvalStore store(cfg.store_root);
    auto gateway = make_gateway(cfg, store, "judge");
    const std::vector<std::string> ids = cli_detail::graph_task_ids(store);
    if (ids.empty()) {
        out << "no graphs found under " << store.graphs_dir().string() << "\n";
        return 2;
    }

    JudgeStages stages{cfg.reasoner, cfg.capturer};
    auto run_one = [&](const std::string& task_id) {
        cli_detail::TaskResult r;
        r.task_id = task_id;
        try {
            TaskLock lock(store, task_id);
            const SubstateGraph graph = load_graph(store, task_id);
            const TaskSpec task = load_task_spec(store, task_id);
            if (!std::filesystem::exists(store.trace_dir(task_id) / "manifest.json"))
                throw ManifestError("no trace recorded for task " + task_id);
            const TraceManifest trace = load_trace(store.trace_dir(task_id));
            const TaskJudgement judgement =
                judge_task(task, graph, trace, stages, *gateway);
            store_judgement(store, judgement);
            r.ok = true;
            r.message = "(" + std::to_string(judgement.success_count()) + "/" +
                        std::to_string(judgement.final_status.size()) + " substates)";
        } catch (const Error& e) {
            r.message = e.what();
        }
        return r;
    };

    std::vector<cli_detail::TaskResult> results(ids.size());
    const int workers = std::min<int>(std::max(parallel, 1), static_cast<int>(ids.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            results[i] = run_one(ids[i]);
            if (!results[i].ok && !keep_going) {
                results.resize(i + 1);
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < ids.size(); i = next++)
                    results[i] = run_one(ids[i]);
            });
        for (auto& t : pool) t.join();
    }
    return cli_detail::summarize(out, results, keep_going);
}

inline int cmd_score(const std::filesystem::path& store_root,
                     const std::filesystem::path& annotations_file,
                     const std::filesystem::path& ground_truth_file, std::string family,
                     std::ostream& out) {
    EvalStore store(store_root);
    if (family.empty()) {
        if (!annotations_file.empty())
            family = "quality";
        else if (!ground_truth_file.empty())
            family = "reliability";
        else
            family = "performance";
    }

    try {
        MetricReport report;
        if (family == "quality") {
            if (annotations_file.empty()) {
                std::cerr << "scoring decomposer quality requires --annotations\n";
                return 2;
            }
            report = decomposer_quality(annotations_from_json(
                nlohmann::json::parse(read_file_bytes(annotations_file))));
        } else if (family == "reliability") {
            if (ground_truth_file.empty()) {
                std::cerr << "scoring judge reliability requires --ground-truth\n";
                return 2;
            }
            std::vector<TaskJudgement> judged;
            for (const auto& id : cli_detail::judged_task_ids(store))
                judged.push_back(load_judgement(store, id));
            report = judge_reliability(judged, ground_truth_from_json(nlohmann::json::parse(
                                                   read_file_bytes(ground_truth_file))));
        } else if (family == "performance") {
            std::vector<TaskJudgement> judged;
            for (const auto& id : cli_detail::judged_task_ids(store))
                judged.push_back(load_judgement(store, id));
            report = agent_performance(judged);
        } else {
            std::cerr << "unknown metric family `" << family << "`\n";
            return 2;
        }
        store_report(store, report);
        out << render_table(report);
        out << "report written to " << store.report_path(report.family).string() << "\n";
        return 0;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
}

inline std::string render_checklist(const TaskJudgement& j) {
    std::string out = "Task " + j.task_id + "  " + std::to_string(j.success_count()) + "/" +
                      std::to_string(j.final_status.size()) + " substates\n";
    for (const auto& node : j.graph.nodes) {
        const bool done = j.final_status.at(node.id) == Verdict::Success;
        out += done ? "  ✓ " : "  ? ";
        out += render_node(node);
        if (done)
            out += "  (screenshot " + std::to_string(j.first_success_index.at(node.id)) + ")";
        out += "\n";
    }
    for (const auto& s : j.skipped)
        out += "  ! screenshot " + std::to_string(s.index) + " skipped: " + s.reason + "\n";
    return out;
}

inline int cmd_report(const std::filesystem::path& store_root, std::ostream& out) {
    EvalStore store(store_root);
    std::vector<TaskJudgement> judged;
    for (const auto& id : cli_detail::judged_task_ids(store))
        judged.push_back(load_judgement(store, id));

    if (judged.empty()) {
        out << "uijudge report\n==============\nwarning: no judgements found under "
            << store.judgements_dir().string() << "\n";
        return 0;
    }

    out << "uijudge report\n==============\n\n";
    for (const auto& j : judged) out << render_checklist(j) << "\n";

    out << "Aggregate metrics\n-----------------\n";
    bool have_reports = false;
    std::vector<std::filesystem::path> report_files;
    for (const auto& entry : std::filesystem::directory_iterator(store.reports_dir()))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            report_files.push_back(entry.path());
    std::sort(report_files.begin(), report_files.end());
    for (const auto& path : report_files) {
        have_reports = true;
        out << render_table(report_from_json(nlohmann::json::parse(read_file_bytes(path))))
            << "\n";
    }
    if (!have_reports) out << render_table(agent_performance(judged)) << "\n";
    return 0;
}

// Entry point shared by the binary and the tests.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout) {
    CLI::App app{"substate-based evaluation of GUI agent screenshot trajectories"};
    app.require_subcommand(1);

    std::string config_path, store_override;
    app.add_option("--config", config_path, "run configuration (JSON)");
    app.add_option("--store", store_override, "evaluation store root (overrides config)");

    auto* dec = app.add_subcommand("decompose", "generate substate graphs for a task list");
    std::string tasks_file;
    bool dec_keep_going = false;
    dec->add_option("--tasks", tasks_file, "task list file")->required();
    dec->add_flag("--keep-going", dec_keep_going, "continue past failing tasks");

    auto* jud = app.add_subcommand("judge", "judge recorded traces against stored graphs");
    bool jud_keep_going = false;
    int parallel = 0;
    jud->add_flag("--keep-going", jud_keep_going, "continue past failing tasks");
    jud->add_option("--parallel", parallel, "max concurrent tasks");

    auto* sco = app.add_subcommand("score", "compute metric reports from stored artifacts");
    std::string annotations_file, ground_truth_file, family;
    sco->add_option("--annotations", annotations_file, "substate annotation file");
    sco->add_option("--ground-truth", ground_truth_file, "human-verified judgement file");
    sco->add_option("--family", family, "quality | reliability | performance");

    auto* rep = app.add_subcommand("report", "render judgements and metrics for humans");

    std::vector<const char*> argv;
    argv.push_back("uijudge");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_run_config(config_path);
        if (!store_override.empty()) cfg.store_root = store_override;

        if (dec->parsed()) {
            if (config_path.empty()) {
                std::cerr << "decompose requires --config\n";
                return 2;
            }
            return cmd_decompose(cfg, tasks_file, dec_keep_going, out);
        }
        if (jud->parsed()) {
            if (config_path.empty()) {
                std::cerr << "judge requires --config\n";
                return 2;
            }
            return cmd_judge(cfg, jud_keep_going, parallel > 0 ? parallel : cfg.parallel, out);
        }
        if (sco->parsed())
            return cmd_score(cfg.store_root, annotations_file, ground_truth_file, family, out);
        if (rep->parsed()) return cmd_report(cfg.store_root, out);
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "invalid JSON input: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

} // namespace uijudge
