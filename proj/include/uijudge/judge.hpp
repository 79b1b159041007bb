#pragma once
#include "uijudge/decomposer.hpp"
#include "uijudge/gateway.hpp"
#include "uijudge/prompts.hpp"
#include "uijudge/ssr.hpp"
#include "uijudge/trace_store.hpp"

#include <nlohmann/json.hpp>

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

// Judge system: capture -> reason -> check over a screenshot trajectory.
// Each screenshot is captioned, the pending (not yet satisfied) substates
// are judged against the caption, and the checker enforces that a
// UnitNode can only succeed when its parent page has succeeded. Satisfied
// substates latch: they stay successful and are carried as prior
// knowledge instead of being re-queried.

namespace uijudge {

enum class Verdict { Success, Uncertain };

inline std::string_view verdict_name(Verdict v) {
    return v == Verdict::Success ? "success" : "uncertain";
}

inline Verdict verdict_from_name(const std::string& name) {
    if (name == "success") return Verdict::Success;
    if (name == "uncertain") return Verdict::Uncertain;
    throw DecodeError("unknown verdict `" + name + "`");
}

struct ReasonerOutput {
    std::string thought;
    std::vector<std::string> analysis;
    std::vector<Verdict> states;
    std::optional<std::string> critical_info;

    bool operator==(const ReasonerOutput&) const = default;
};

// Carry-forward state for one task run: free-text notes the reasoner
// emitted for later screenshots, and the substates that already
// succeeded (with the screenshot that first satisfied each).
struct Memory {
    struct Note {
        int screenshot_index;
        std::string text;
        bool operator==(const Note&) const = default;
    };

    std::deque<Note> notes;
    std::map<int, int> succeeded; // substate id -> first success screenshot
    std::size_t note_cap = 20;

    void add_note(int screenshot_index, std::string text) {
        notes.push_back({screenshot_index, std::move(text)});
        while (notes.size() > note_cap) notes.pop_front();
    }
    bool is_latched(int node_id) const { return succeeded.count(node_id) != 0; }
};

struct SubstateVerdict {
    int node_id;
    Verdict verdict;
    bool operator==(const SubstateVerdict&) const = default;
};

struct ScreenshotRecord {
    int index = 0;
    std::string caption;
    std::string raw_response;               // final reasoner reply used
    std::optional<ReasonerOutput> decoded;  // absent when undecodable
    std::vector<SubstateVerdict> verdicts;  // post-check; empty when skipped
    std::string disposition = "ok";         // "ok" | "degraded" | "skipped"
    int retries = 0;

    bool operator==(const ScreenshotRecord&) const = default;
};

struct SkippedScreenshot {
    int index;
    std::string reason;
    bool operator==(const SkippedScreenshot&) const = default;
};

struct TaskJudgement {
    std::string task_id;
    SubstateGraph graph;
    std::map<int, Verdict> final_status;
    std::map<int, int> first_success_index;
    std::vector<ScreenshotRecord> records;
    std::vector<SkippedScreenshot> skipped;

    bool operator==(const TaskJudgement&) const = default;

    int success_count() const {
        int n = 0;
        for (const auto& [id, v] : final_status)
            if (v == Verdict::Success) ++n;
        return n;
    }
};

class RuleViolation : public Error {
public:
    explicit RuleViolation(const std::string& what) : Error("rule violation: " + what) {}
};

class CaptureError : public Error {
public:
    explicit CaptureError(const std::string& what) : Error("capture error: " + what) {}
};

class JudgeError : public Error {
public:
    explicit JudgeError(const std::string& what) : Error("judge error: " + what) {}
};

// ---------------------------------------------------------------------------
// Capturer

// Rejects payloads that are not recognizable images before any model
// call, then captions through the gateway (which caches by digest).
inline std::string capture(ModelGateway& gateway, const BackendConfig& cfg,
                           const std::string& image_bytes, const CallContext& ctx) {
    const auto type = detect_image_type(image_bytes);
    if (!type) throw CaptureError("payload is not a decodable png/jpeg/webp image");
    VisionRequest req;
    req.system_prompt = std::string(prompts::capturer_system_prompt);
    req.image_bytes = image_bytes;
    req.media_type = *type;
    return gateway.caption(cfg, req, ctx);
}

// ---------------------------------------------------------------------------
// Reasoner

struct JudgeOptions {
    double reasoner_temperature = 0.0;
    int reasoner_max_output_tokens = 4096;
    std::size_t memory_cap = 20;
};

inline ChatRequest build_reasoner_prompt(const TaskSpec& task,
                                         const std::vector<StateNode>& pending,
                                         const std::string& caption, const Memory& mem,
                                         const SubstateGraph& graph,
                                         const JudgeOptions& opts = {}) {
    if (pending.empty()) throw Error("reasoner prompt needs at least one pending substate");

    std::string user = "Task Description: " + task.description;
    if (task.app_name) user += "\nRelated app: " + *task.app_name;

    user += "\n\nHistorical Context:\n";
    if (mem.notes.empty()) {
        user += "None.\n";
    } else {
        for (const auto& note : mem.notes)
            user += "- [screenshot " + std::to_string(note.screenshot_index) + "] " + note.text +
                    "\n";
    }

    user += "\nPreviously satisfied substates:\n";
    if (mem.succeeded.empty()) {
        user += "None.\n";
    } else {
        for (const auto& [id, at] : mem.succeeded) {
            const StateNode* node = graph.find(id);
            if (node == nullptr) continue;
            user += "- " + render_node(*node) + " (confirmed at screenshot " +
                    std::to_string(at) + ")\n";
        }
    }

    user += "\nCurrent UI State:\n" + caption + "\n";

    user += "\nVerification Targets:\n";
    for (const auto& node : pending) user += render_node(node) + "\n";

    ChatRequest req;
    req.system_prompt = std::string(prompts::reasoner_system_prompt);
    req.user_content = std::move(user);
    req.temperature = opts.reasoner_temperature;
    req.max_output_tokens = opts.reasoner_max_output_tokens;
    return req;
}

namespace detail {

// First balanced JSON object in free-form model text, skipping braces
// inside string literals.
inline std::optional<nlohmann::json> extract_json_object(const std::string& raw) {
    for (std::size_t start = raw.find('{'); start != std::string::npos;
         start = raw.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < raw.size(); ++i) {
            const char c = raw[i];
            if (in_string) {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    nlohmann::json doc =
                        nlohmann::json::parse(raw.substr(start, i - start + 1), nullptr, false);
                    if (!doc.is_discarded() && doc.is_object()) return doc;
                    break;
                }
            }
        }
    }
    return std::nullopt;
}

} // namespace detail

// Decodes the reasoner's JSON reply, tolerating code fences and prose
// around the object. Enforces field presence, the two-word verdict
// vocabulary, and the per-substate count.
inline ReasonerOutput decode_reasoner_output(const std::string& raw, std::size_t expected_count) {
    auto doc = detail::extract_json_object(raw);
    if (!doc) throw DecodeError("no JSON object found in reasoner response");

    if (!doc->contains("thought") || !(*doc)["thought"].is_string())
        throw DecodeError("missing string field `thought`");
    if (!doc->contains("analysis") || !(*doc)["analysis"].is_array())
        throw DecodeError("missing array field `analysis`");
    if (!doc->contains("states") || !(*doc)["states"].is_array())
        throw DecodeError("missing array field `states`");

    ReasonerOutput out;
    out.thought = (*doc)["thought"].get<std::string>();

    for (const auto& a : (*doc)["analysis"]) {
        if (!a.is_string()) throw DecodeError("analysis entries must be strings");
        out.analysis.push_back(a.get<std::string>());
    }
    for (const auto& s : (*doc)["states"]) {
        if (!s.is_string()) throw DecodeError("states entries must be strings");
        const std::string v = s.get<std::string>();
        if (v == "true")
            out.states.push_back(Verdict::Success);
        else if (v == "uncertain")
            out.states.push_back(Verdict::Uncertain);
        else
            throw DecodeError("states entries must be \"true\" or \"uncertain\", got \"" + v +
                              "\"");
    }

    if (out.states.size() != expected_count)
        throw DecodeError("expected " + std::to_string(expected_count) + " states, got " +
                          std::to_string(out.states.size()));
    if (out.analysis.size() != out.states.size())
        throw DecodeError("number of analyses (" + std::to_string(out.analysis.size()) +
                          ") does not match number of states (" +
                          std::to_string(out.states.size()) + ")");

    if (doc->contains("critical_info") && !(*doc)["critical_info"].is_null()) {
        if (!(*doc)["critical_info"].is_string())
            throw DecodeError("critical_info must be a string");
        std::string info = (*doc)["critical_info"].get<std::string>();
        if (!trim_copy(info).empty()) out.critical_info = std::move(info);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checker

enum class GatePolicy {
    Strict, // throw RuleViolation when a unit succeeds under an unsatisfied parent
    Demote, // silently demote such units to Uncertain
};

// Applies the parent gate: a UnitNode's Success is ANDed with its parent
// page's verdict, taken from this same output when the parent is pending
// or from memory when it latched earlier.
inline std::vector<SubstateVerdict> check(const ReasonerOutput& output,
                                          const std::vector<StateNode>& pending,
                                          const Memory& mem,
                                          GatePolicy policy = GatePolicy::Strict) {
    if (output.states.size() != pending.size())
        throw std::invalid_argument("check: verdict count does not match pending substates");

    std::unordered_map<int, std::size_t> position;
    for (std::size_t i = 0; i < pending.size(); ++i) position.emplace(pending[i].id, i);

    std::vector<Verdict> effective = output.states;
    std::vector<std::string> violations;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        const StateNode& node = pending[i];
        if (node.kind != NodeKind::Unit || effective[i] != Verdict::Success) continue;

        Verdict parent_verdict = Verdict::Uncertain;
        if (node.parent_id) {
            if (mem.is_latched(*node.parent_id)) {
                parent_verdict = Verdict::Success;
            } else if (auto it = position.find(*node.parent_id); it != position.end()) {
                parent_verdict = effective[it->second];
            }
        }
        if (parent_verdict != Verdict::Success) {
            violations.push_back("substate " + std::to_string(node.id) +
                                 " (UnitNode) is judged Success but its parent page " +
                                 (node.parent_id ? std::to_string(*node.parent_id)
                                                 : std::string("<none>")) +
                                 " is not Success");
            effective[i] = Verdict::Uncertain;
        }
    }

    if (!violations.empty() && policy == GatePolicy::Strict) {
        std::string msg;
        for (const auto& v : violations) {
            if (!msg.empty()) msg += "; ";
            msg += v;
        }
        throw RuleViolation(msg);
    }

    std::vector<SubstateVerdict> out;
    out.reserve(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i)
        out.push_back({pending[i].id, effective[i]});
    return out;
}

// ---------------------------------------------------------------------------
// Judging loop

struct JudgeStages {
    BackendConfig reasoner;
    BackendConfig capturer;
};

namespace detail {

struct ReasonedScreenshot {
    std::string raw;
    std::optional<ReasonerOutput> output;
    std::vector<SubstateVerdict> verdicts;
    std::string disposition; // "ok" | "degraded" | "skipped"
    std::string skip_reason;
    int retries = 0;
};

inline std::string feedback_suffix(const std::string& reason) {
    return "\n\nYour previous response was rejected: " + reason +
           "\nAnswer again, strictly following the required JSON format and the parent-page "
           "rule.";
}

// One reasoner round with at most one corrective retry. Total except for
// provider failures: an undecodable retry skips the screenshot, a gate
// violation that survives the retry is demoted instead of discarded.
inline ReasonedScreenshot reason_one_screenshot(ModelGateway& gateway, const JudgeStages& stages,
                                                const ChatRequest& prompt,
                                                const std::vector<StateNode>& pending,
                                                const Memory& mem, const CallContext& ctx) {
    ReasonedScreenshot rs;
    rs.raw = gateway.complete(stages.reasoner, prompt, ctx).text;

    auto retry_with = [&](const std::string& reason) {
        ChatRequest retry = prompt;
        retry.user_content += feedback_suffix(reason);
        rs.retries = 1;
        return gateway.complete(stages.reasoner, retry, ctx).text;
    };

    std::optional<ReasonerOutput> first;
    try {
        first = decode_reasoner_output(rs.raw, pending.size());
    } catch (const DecodeError& e) {
        rs.raw = retry_with(e.what());
        try {
            first = decode_reasoner_output(rs.raw, pending.size());
        } catch (const DecodeError& e2) {
            rs.disposition = "skipped";
            rs.skip_reason = e2.what();
            return rs;
        }
        rs.output = *first;
        try {
            rs.verdicts = check(*first, pending, mem, GatePolicy::Strict);
            rs.disposition = "ok";
        } catch (const RuleViolation&) {
            // The single retry is already spent; apply the gate silently.
            rs.verdicts = check(*first, pending, mem, GatePolicy::Demote);
            rs.disposition = "degraded";
        }
        return rs;
    }

    rs.output = *first;
    try {
        rs.verdicts = check(*first, pending, mem, GatePolicy::Strict);
        rs.disposition = "ok";
        return rs;
    } catch (const RuleViolation& v) {
        const std::string first_raw = rs.raw;
        rs.raw = retry_with(v.what());
        try {
            ReasonerOutput second = decode_reasoner_output(rs.raw, pending.size());
            try {
                rs.verdicts = check(second, pending, mem, GatePolicy::Strict);
                rs.disposition = "ok";
            } catch (const RuleViolation&) {
                rs.verdicts = check(second, pending, mem, GatePolicy::Demote);
                rs.disposition = "degraded";
            }
            rs.output = std::move(second);
        } catch (const DecodeError&) {
            // Retry reply unusable; fall back to the first output, demoted.
            rs.raw = first_raw;
            rs.verdicts = check(*first, pending, mem, GatePolicy::Demote);
            rs.disposition = "degraded";
        }
        return rs;
    }
}

} // namespace detail

// Judges one task run over its screenshot trajectory. Screenshots whose
// capture or reasoning cannot be salvaged are recorded as skipped and the
// loop continues; the run aborts only when every screenshot skipped.
inline TaskJudgement judge_task(const TaskSpec& task, const SubstateGraph& graph,
                                const TraceManifest& trajectory, const JudgeStages& stages,
                                ModelGateway& gateway, const JudgeOptions& opts = {}) {
    ensure_valid(graph);
    if (graph.empty()) throw JudgeError("substate graph for task " + task.task_id + " is empty");
    if (trajectory.screenshots.empty())
        throw JudgeError("trajectory for task " + task.task_id + " has no screenshots");

    TaskJudgement judgement;
    judgement.task_id = task.task_id;
    judgement.graph = graph;

    Memory mem;
    mem.note_cap = opts.memory_cap;
    const CallContext ctx{task.task_id, "reasoner"};
    const CallContext capture_ctx{task.task_id, "capturer"};

    for (std::size_t i = 0; i < trajectory.screenshots.size(); ++i) {
        const int index = static_cast<int>(i);

        std::vector<StateNode> pending;
        for (const auto& node : graph.nodes)
            if (!mem.is_latched(node.id)) pending.push_back(node);
        if (pending.empty()) break; // everything satisfied; no further model calls

        std::string caption;
        try {
            const auto& ref = trajectory.screenshots[i];
            if (auto cached = trajectory.captions.find(ref.digest);
                cached != trajectory.captions.end()) {
                caption = cached->second;
            } else {
                caption = capture(gateway, stages.capturer,
                                  read_file_bytes(trajectory.screenshot_path(i)), capture_ctx);
            }
        } catch (const Error& e) {
            judgement.skipped.push_back({index, std::string("capture: ") + e.what()});
            continue;
        }

        const ChatRequest prompt =
            build_reasoner_prompt(task, pending, caption, mem, graph, opts);
        ScreenshotRecord record;
        record.index = index;
        record.caption = caption;
        try {
            detail::ReasonedScreenshot rs =
                detail::reason_one_screenshot(gateway, stages, prompt, pending, mem, ctx);
            record.raw_response = std::move(rs.raw);
            record.decoded = std::move(rs.output);
            record.verdicts = std::move(rs.verdicts);
            record.disposition = rs.disposition;
            record.retries = rs.retries;
            if (rs.disposition == "skipped") {
                judgement.skipped.push_back({index, "decode: " + rs.skip_reason});
                judgement.records.push_back(std::move(record));
                continue;
            }
        } catch (const ProviderError& e) {
            judgement.skipped.push_back({index, std::string("reasoner: ") + e.what()});
            continue;
        }

        if (record.decoded && record.decoded->critical_info)
            mem.add_note(index, *record.decoded->critical_info);
        for (const auto& sv : record.verdicts)
            if (sv.verdict == Verdict::Success && !mem.is_latched(sv.node_id))
                mem.succeeded.emplace(sv.node_id, index);

        judgement.records.push_back(std::move(record));
    }

    if (judgement.skipped.size() == trajectory.screenshots.size())
        throw JudgeError("every screenshot of task " + task.task_id + " was skipped");

    for (const auto& node : graph.nodes) {
        const bool latched = mem.is_latched(node.id);
        judgement.final_status[node.id] = latched ? Verdict::Success : Verdict::Uncertain;
        if (latched) judgement.first_success_index[node.id] = mem.succeeded.at(node.id);
    }
    return judgement;
}

// ---------------------------------------------------------------------------
// Judgement persistence (structured-text report, deterministic bytes)

inline nlohmann::json judgement_to_json(const TaskJudgement& j) {
    nlohmann::json final_list = nlohmann::json::array();
    for (const auto& [id, verdict] : j.final_status) {
        nlohmann::json entry;
        entry["id"] = id;
        entry["status"] = verdict_name(verdict);
        auto it = j.first_success_index.find(id);
        entry["first_success_screenshot"] =
            it != j.first_success_index.end() ? nlohmann::json(it->second) : nlohmann::json();
        final_list.push_back(std::move(entry));
    }

    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : j.records) {
        nlohmann::json rec;
        rec["index"] = r.index;
        rec["caption"] = r.caption;
        rec["raw_response"] = r.raw_response;
        rec["disposition"] = r.disposition;
        rec["retries"] = r.retries;
        if (r.decoded) {
            nlohmann::json d;
            d["thought"] = r.decoded->thought;
            d["analysis"] = r.decoded->analysis;
            nlohmann::json states = nlohmann::json::array();
            for (Verdict v : r.decoded->states) states.push_back(verdict_name(v));
            d["states"] = std::move(states);
            d["critical_info"] = r.decoded->critical_info ? nlohmann::json(*r.decoded->critical_info)
                                                          : nlohmann::json();
            rec["decoded"] = std::move(d);
        } else {
            rec["decoded"] = nullptr;
        }
        nlohmann::json verdicts = nlohmann::json::array();
        for (const auto& sv : r.verdicts)
            verdicts.push_back({{"id", sv.node_id}, {"verdict", verdict_name(sv.verdict)}});
        rec["verdicts"] = std::move(verdicts);
        records.push_back(std::move(rec));
    }

    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& s : j.skipped)
        skipped.push_back({{"index", s.index}, {"reason", s.reason}});

    nlohmann::json doc;
    doc["task_id"] = j.task_id;
    doc["graph"] = graph_to_json(j.graph);
    doc["final"] = std::move(final_list);
    doc["records"] = std::move(records);
    doc["skipped"] = std::move(skipped);
    return doc;
}

inline TaskJudgement judgement_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("task_id") || !doc.contains("graph") ||
        !doc.contains("final"))
        throw DecodeError("judgement must contain task_id, graph and final");

    TaskJudgement j;
    j.task_id = doc["task_id"].get<std::string>();
    j.graph = graph_from_json(doc["graph"]);
    for (const auto& entry : doc["final"]) {
        const int id = entry.at("id").get<int>();
        j.final_status[id] = verdict_from_name(entry.at("status").get<std::string>());
        if (entry.contains("first_success_screenshot") &&
            !entry["first_success_screenshot"].is_null())
            j.first_success_index[id] = entry["first_success_screenshot"].get<int>();
    }
    for (const auto& rec : doc.value("records", nlohmann::json::array())) {
        ScreenshotRecord r;
        r.index = rec.at("index").get<int>();
        r.caption = rec.value("caption", "");
        r.raw_response = rec.value("raw_response", "");
        r.disposition = rec.value("disposition", "ok");
        r.retries = rec.value("retries", 0);
        if (rec.contains("decoded") && !rec["decoded"].is_null()) {
            ReasonerOutput out;
            const auto& d = rec["decoded"];
            out.thought = d.value("thought", "");
            for (const auto& a : d.value("analysis", nlohmann::json::array()))
                out.analysis.push_back(a.get<std::string>());
            for (const auto& s : d.value("states", nlohmann::json::array()))
                out.states.push_back(verdict_from_name(s.get<std::string>()));
            if (d.contains("critical_info") && !d["critical_info"].is_null())
                out.critical_info = d["critical_info"].get<std::string>();
            r.decoded = std::move(out);
        }
        for (const auto& sv : rec.value("verdicts", nlohmann::json::array()))
            r.verdicts.push_back(
                {sv.at("id").get<int>(), verdict_from_name(sv.at("verdict").get<std::string>())});
        j.records.push_back(std::move(r));
    }
    for (const auto& s : doc.value("skipped", nlohmann::json::array()))
        j.skipped.push_back({s.at("index").get<int>(), s.value("reason", "")});
    return j;
}

inline void store_judgement(const EvalStore& store, const TaskJudgement& j) {
    write_file_bytes(store.judgement_path(j.task_id), judgement_to_json(j).dump(2) + "\n");
}

inline TaskJudgement load_judgement(const EvalStore& store, const std::string& task_id) {
    const std::string bytes = read_file_bytes(store.judgement_path(task_id));
    nlohmann::json doc = nlohmann::json::parse(bytes, nullptr, false);
    if (doc.is_discarded()) throw DecodeError("judgement file is not valid JSON");
    return judgement_from_json(doc);
}

} // namespace uijudge
