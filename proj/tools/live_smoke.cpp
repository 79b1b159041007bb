// Live smoke check against real providers. Not part of the default test
// suite: it needs network access and credentials. Run it manually:
//
//   UIJUDGE_LIVE=1 ./build/tools/uijudge_live_smoke path/to/config.json trace_dir
//
// Performs one real decomposition and one short judgement and reports
// whether any checker rule needed more than a single retry.

#include "uijudge/cli.hpp"
#include "uijudge/decomposer.hpp"
#include "uijudge/judge.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    using namespace uijudge;

    const char* live = std::getenv("UIJUDGE_LIVE");
    if (live == nullptr || std::string(live) != "1") {
        std::cout << "skipped: set UIJUDGE_LIVE=1 (and provider credentials) to run\n";
        return 77;
    }
    if (argc < 3) {
        std::cerr << "usage: uijudge_live_smoke <config.json> <trace_dir>\n";
        return 2;
    }

    try {
        RunConfig cfg = load_run_config(argv[1]);
        EvalStore store(cfg.store_root);
        auto gateway = make_gateway(cfg, store, "live_smoke");

        TaskSpec task;
        task.task_id = "live-smoke";
        task.description = "Open the Clock app and create an alarm for 7:30 AM";
        task.app_name = "Clock";

        DecomposeResult res = decompose(task, cfg.decomposer, *gateway);
        std::cout << "decomposed into " << res.graph.size() << " substates ("
                  << res.attempts << " attempt(s))\n"
                  << render_nodes(res.graph);

        TraceManifest trace = load_trace(argv[2]);
        if (trace.screenshots.size() > 2) trace.screenshots.resize(2);
        TaskJudgement judgement =
            judge_task(task, res.graph, trace, {cfg.reasoner, cfg.capturer}, *gateway);

        int retries = 0;
        for (const auto& r : judgement.records) retries += r.retries;
        std::cout << "judged " << judgement.records.size() << " screenshots, "
                  << judgement.success_count() << "/" << judgement.final_status.size()
                  << " substates succeeded, " << retries << " retries, "
                  << judgement.skipped.size() << " skipped\n";
        if (retries > 1 || !judgement.skipped.empty()) {
            std::cerr << "smoke check failed: too many rule violations or skips\n";
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "smoke check failed: " << e.what() << "\n";
        return 1;
    }
}
