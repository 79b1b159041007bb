#pragma once
#include "uijudge/gateway.hpp"
#include "uijudge/prompts.hpp"
#include "uijudge/ssr.hpp"

#include <optional>
#include <string>
#include <vector>

// State decomposer: turns a natural-language task into a validated
// substate graph by prompting a text model and parsing its reply.

namespace uijudge {

struct TaskSpec {
    std::string task_id;
    std::string description;
    std::optional<std::string> app_name;
    std::optional<std::string> additional_info; // pre-retrieved app knowledge
};

class DecompositionFailed : public Error {
public:
    explicit DecompositionFailed(const std::string& what)
        : Error("decomposition failed: " + what) {}
};

struct DecomposerOptions {
    double temperature = 0.2;
    int max_output_tokens = 2048;
    int validation_retries = 2; // corrective retries after a bad response
};

// Pure function of the task: the system prompt is the decomposer template
// with {additional_info} substituted ("None." when the caller has none).
inline ChatRequest build_decomposer_prompt(const TaskSpec& task,
                                           const DecomposerOptions& opts = {}) {
    if (trim_copy(task.description).empty()) throw Error("task description must be non-empty");

    std::string system(prompts::decomposer_system_prompt);
    static constexpr std::string_view slot = "{additional_info}";
    const auto pos = system.find(slot);
    if (pos == std::string::npos) throw Error("decomposer template is missing the info slot");
    system.replace(pos, slot.size(), task.additional_info.value_or("None."));

    std::string user = "Task: " + task.description;
    if (task.app_name) user += "\nTask's related app: " + *task.app_name;

    ChatRequest req;
    req.system_prompt = std::move(system);
    req.user_content = std::move(user);
    req.temperature = opts.temperature;
    req.max_output_tokens = opts.max_output_tokens;
    return req;
}

struct DecomposeResult {
    SubstateGraph graph;
    std::vector<std::string> warnings;
    int attempts = 1;
};

// Calls the model, parses and validates the reply, and retries with the
// violation messages appended as corrective feedback when the reply is
// malformed. Duplicate substates are collapsed before the graph is
// returned; the result always validates cleanly.
inline DecomposeResult decompose(const TaskSpec& task, const BackendConfig& cfg,
                                 ModelGateway& gateway, const DecomposerOptions& opts = {}) {
    const ChatRequest base = build_decomposer_prompt(task, opts);
    const CallContext ctx{task.task_id, "decomposer"};

    std::string feedback;
    std::string last_error;
    const int attempts_allowed = opts.validation_retries + 1;
    for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
        ChatRequest req = base;
        if (!feedback.empty())
            req.user_content += "\n\nYour previous response was invalid:\n" + feedback +
                                "\nReturn the corrected list of substates in the required "
                                "node-line format, nothing else.";
        const CompletionResult completion = gateway.complete(cfg, req, ctx);
        try {
            ParsedDecomposition parsed = parse_decomposition(completion.text);
            DecomposeResult result;
            ParsedDecomposition collapsed = collapse_duplicate_nodes(parsed.graph);
            result.graph = std::move(collapsed.graph);
            result.graph.task_id = task.task_id;
            result.warnings = std::move(parsed.warnings);
            result.warnings.insert(result.warnings.end(), collapsed.warnings.begin(),
                                   collapsed.warnings.end());
            result.attempts = attempt;
            ensure_valid(result.graph);
            return result;
        } catch (const ValidationError& e) {
            feedback.clear();
            for (const auto& v : e.violations()) feedback += "- " + v.message + "\n";
            last_error = e.what();
        } catch (const ParseError& e) {
            feedback = std::string("- ") + e.what() + "\n";
            last_error = e.what();
        }
    }
    throw DecompositionFailed("no valid substate graph after " +
                              std::to_string(attempts_allowed) + " attempts; last error: " +
                              last_error);
}

} // namespace uijudge
