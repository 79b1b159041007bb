#pragma once
#include "uijudge/judge.hpp"
#include "uijudge/ssr.hpp"
#include "uijudge/trace_store.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

// Three metric families:
//   decomposer quality  - cover / redundant / optional / incorrect rates,
//                         pooled over all annotated tasks
//   judge reliability   - SR / FP / FN over (task, substate) pairs
//   agent performance   - SCR (per-task macro average) and TCR
// All rates are exact rationals so fixtures compare without tolerance.

namespace uijudge {

class AnnotationError : public Error {
public:
    explicit AnnotationError(const std::string& what) : Error("annotation error: " + what) {}
};

class MismatchError : public Error {
public:
    explicit MismatchError(const std::string& what) : Error("mismatch error: " + what) {}
};

class EmptyGraphError : public Error {
public:
    explicit EmptyGraphError(const std::string& what) : Error("empty graph: " + what) {}
};

struct Rational {
    long long num = 0;
    long long den = 1;

    static Rational of(long long num, long long den) {
        Rational r{num, den};
        r.reduce();
        return r;
    }

    void reduce() {
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    Rational operator+(const Rational& o) const { return of(num * o.den + o.num * den, den * o.den); }
    Rational operator/(long long k) const { return of(num, den * k); }
    bool operator==(const Rational& o) const { return num * o.den == o.num * den; }
    bool operator<=(const Rational& o) const { return num * o.den <= o.num * den; }
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct RateEntry {
    std::string name;
    long long numerator = 0;
    long long denominator = 0; // 0 marks an undefined rate

    Rational rational() const { return Rational{numerator, denominator}; }
    bool defined() const { return denominator > 0; }
};

struct MetricReport {
    std::string family;
    std::vector<RateEntry> rates;
    std::vector<std::pair<std::string, std::string>> metadata;

    const RateEntry& rate(std::string_view name) const {
        for (const auto& r : rates)
            if (r.name == name) return r;
        throw Error("report has no rate named " + std::string(name));
    }
};

// Tables render percentages with two decimals; internals stay exact.
inline std::string render_percent(const RateEntry& r) {
    if (!r.defined()) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", r.rational().value() * 100.0);
    return buf;
}

// ---------------------------------------------------------------------------
// Decomposer quality

enum class AnnotationKind { Covering, Redundant, Optional, Incorrect };

inline std::string_view annotation_kind_name(AnnotationKind k) {
    switch (k) {
        case AnnotationKind::Covering: return "covering";
        case AnnotationKind::Redundant: return "redundant";
        case AnnotationKind::Optional: return "optional";
        case AnnotationKind::Incorrect: return "incorrect";
    }
    return "unknown";
}

struct AutoLabel {
    AnnotationKind kind = AnnotationKind::Covering;
    std::optional<int> ref; // Covering: human substate id; Redundant: duplicate-of auto id
    bool operator==(const AutoLabel&) const = default;
};

// Human review of one task's generated substates against a reference
// list: every auto substate gets exactly one label.
struct SubstateAnnotation {
    std::string task_id;
    std::set<int> human_ids;
    std::map<int, AutoLabel> labels; // auto substate id -> label
};

inline void validate_annotation(const SubstateAnnotation& a) {
    int expected = 0;
    for (const auto& [auto_id, label] : a.labels) {
        if (auto_id != expected)
            throw AnnotationError("task " + a.task_id + ": labels must cover auto ids 0..N-1, " +
                                  "missing id " + std::to_string(expected));
        ++expected;
        if (label.kind == AnnotationKind::Covering) {
            if (!label.ref || a.human_ids.count(*label.ref) == 0)
                throw AnnotationError("task " + a.task_id + ": auto substate " +
                                      std::to_string(auto_id) +
                                      " covers a human substate that does not exist");
        }
        if (label.kind == AnnotationKind::Redundant) {
            if (!label.ref || a.labels.count(*label.ref) == 0 || *label.ref == auto_id)
                throw AnnotationError("task " + a.task_id + ": auto substate " +
                                      std::to_string(auto_id) +
                                      " marked redundant of a missing auto substate");
        }
    }
}

inline MetricReport decomposer_quality(const std::vector<SubstateAnnotation>& annotations) {
    if (annotations.empty()) throw AnnotationError("no annotations supplied");

    long long total_human = 0, covered_human = 0;
    long long total_auto = 0, redundant = 0, optional_count = 0, incorrect = 0;
    for (const auto& a : annotations) {
        validate_annotation(a);
        total_human += static_cast<long long>(a.human_ids.size());
        total_auto += static_cast<long long>(a.labels.size());
        std::set<int> covered;
        for (const auto& [auto_id, label] : a.labels) {
            switch (label.kind) {
                case AnnotationKind::Covering: covered.insert(*label.ref); break;
                case AnnotationKind::Redundant: ++redundant; break;
                case AnnotationKind::Optional: ++optional_count; break;
                case AnnotationKind::Incorrect: ++incorrect; break;
            }
        }
        covered_human += static_cast<long long>(covered.size());
    }

    MetricReport report;
    report.family = "decomposer_quality";
    report.rates = {
        {"cover_rate", covered_human, total_human},
        {"redundant_rate", redundant, total_auto},
        {"optional_rate", optional_count, total_auto},
        {"incorrect_rate", incorrect, total_auto},
    };
    report.metadata = {{"averaging", "micro (pooled substates across tasks)"},
                       {"tasks", std::to_string(annotations.size())}};
    return report;
}

// ---------------------------------------------------------------------------
// Judge reliability

// Human-verified final verdict per substate; optional substates are
// path-dependent and excluded from reliability scoring.
struct GroundTruthJudgement {
    std::string task_id;
    std::map<int, Verdict> verdicts;
    std::set<int> optional_ids;
};

inline MetricReport judge_reliability(const std::vector<TaskJudgement>& judged,
                                      const std::vector<GroundTruthJudgement>& truth) {
    std::map<std::string, const GroundTruthJudgement*> truth_by_task;
    for (const auto& t : truth) truth_by_task[t.task_id] = &t;
    if (truth_by_task.size() != truth.size())
        throw MismatchError("duplicate task ids in ground truth");
    if (judged.size() != truth.size())
        throw MismatchError("judged " + std::to_string(judged.size()) + " tasks but truth has " +
                            std::to_string(truth.size()));

    long long total = 0, agree = 0, fp = 0, fn = 0, excluded = 0;
    for (const auto& j : judged) {
        auto it = truth_by_task.find(j.task_id);
        if (it == truth_by_task.end())
            throw MismatchError("no ground truth for task " + j.task_id);
        const GroundTruthJudgement& t = *it->second;

        std::set<int> judged_ids, truth_ids;
        for (const auto& [id, v] : j.final_status) judged_ids.insert(id);
        for (const auto& [id, v] : t.verdicts) truth_ids.insert(id);
        if (judged_ids != truth_ids)
            throw MismatchError("task " + j.task_id +
                                ": judged and ground-truth substate ids disagree");

        for (const auto& [id, judged_verdict] : j.final_status) {
            if (t.optional_ids.count(id) != 0) {
                ++excluded;
                continue;
            }
            const Verdict truth_verdict = t.verdicts.at(id);
            ++total;
            if (judged_verdict == truth_verdict)
                ++agree;
            else if (judged_verdict == Verdict::Success)
                ++fp;
            else
                ++fn;
        }
    }

    MetricReport report;
    report.family = "judge_reliability";
    report.rates = {
        {"success_rate", agree, total},
        {"false_positive_rate", fp, total},
        {"false_negative_rate", fn, total},
    };
    report.metadata = {{"pairing", "per (task, substate) pair"},
                       {"optional_pairs_excluded", std::to_string(excluded)},
                       {"tasks", std::to_string(judged.size())}};
    return report;
}

// ---------------------------------------------------------------------------
// Agent performance

inline MetricReport agent_performance(const std::vector<TaskJudgement>& judged) {
    if (judged.empty()) throw EmptyGraphError("no judgements supplied");

    Rational scr_sum{0, 1};
    long long complete_tasks = 0;
    for (const auto& j : judged) {
        const long long total = static_cast<long long>(j.final_status.size());
        if (total == 0) throw EmptyGraphError("task " + j.task_id + " has no substates");
        const long long done = j.success_count();
        scr_sum = scr_sum + Rational::of(done, total);
        if (done == total) ++complete_tasks;
    }
    const Rational scr = scr_sum / static_cast<long long>(judged.size());

    MetricReport report;
    report.family = "agent_performance";
    report.rates = {
        {"substate_completion_rate", scr.num, scr.den},
        {"task_completion_rate", complete_tasks, static_cast<long long>(judged.size())},
    };
    report.metadata = {{"scr_averaging", "macro (mean of per-task completion fractions)"},
                       {"tasks", std::to_string(judged.size())}};
    return report;
}

// ---------------------------------------------------------------------------
// Rendering and persistence

inline std::string render_table(const MetricReport& report) {
    // Header uses the conventional short names where they exist.
    static const std::map<std::string, std::string> short_names = {
        {"cover_rate", "Cover"},
        {"redundant_rate", "Redundant"},
        {"optional_rate", "Optional"},
        {"incorrect_rate", "Incorrect"},
        {"success_rate", "SR"},
        {"false_positive_rate", "FP"},
        {"false_negative_rate", "FN"},
        {"substate_completion_rate", "SCR"},
        {"task_completion_rate", "TCR"},
    };

    std::vector<std::string> headers, cells;
    std::size_t width = 0;
    for (const auto& r : report.rates) {
        auto it = short_names.find(r.name);
        headers.push_back(it != short_names.end() ? it->second : r.name);
        cells.push_back(render_percent(r));
        width = std::max({width, headers.back().size(), cells.back().size()});
    }

    auto pad = [&](const std::string& s) {
        std::string out = s;
        out.resize(width + 2, ' ');
        return out;
    };
    std::string out = report.family + "\n";
    for (const auto& h : headers) out += pad(h);
    out += "\n";
    for (const auto& c : cells) out += pad(c);
    out += "\n";
    return out;
}

inline nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json rates = nlohmann::json::object();
    for (const auto& r : report.rates) {
        nlohmann::json entry;
        entry["numerator"] = r.numerator;
        entry["denominator"] = r.denominator;
        entry["value"] = r.defined() ? nlohmann::json(r.rational().value()) : nlohmann::json();
        entry["rendered"] = render_percent(r);
        rates[r.name] = std::move(entry);
    }
    nlohmann::json meta = nlohmann::json::object();
    for (const auto& [k, v] : report.metadata) meta[k] = v;
    nlohmann::json doc;
    doc["family"] = report.family;
    doc["rates"] = std::move(rates);
    doc["metadata"] = std::move(meta);
    return doc;
}

inline MetricReport report_from_json(const nlohmann::json& doc) {
    MetricReport report;
    report.family = doc.at("family").get<std::string>();
    for (const auto& [name, entry] : doc.at("rates").items())
        report.rates.push_back({name, entry.at("numerator").get<long long>(),
                                entry.at("denominator").get<long long>()});
    if (doc.contains("metadata"))
        for (const auto& [k, v] : doc["metadata"].items())
            report.metadata.emplace_back(k, v.get<std::string>());
    return report;
}

inline void store_report(const EvalStore& store, const MetricReport& report) {
    write_file_bytes(store.report_path(report.family), report_to_json(report).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Annotation / ground-truth file ingestion
//
// Annotations:  [{"task_id": ..., "human_substates": [0,1,..],
//                 "labels": {"0": {"label": "covering", "ref": 1}, ...}}, ...]
// Ground truth: [{"task_id": ..., "verdicts": {"0": "success", ...},
//                 "optional": [2, ...]}, ...]

inline std::vector<SubstateAnnotation> annotations_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw AnnotationError("annotation file must be a JSON array");
    std::vector<SubstateAnnotation> out;
    for (const auto& item : doc) {
        SubstateAnnotation a;
        a.task_id = item.at("task_id").get<std::string>();
        for (const auto& id : item.value("human_substates", nlohmann::json::array()))
            a.human_ids.insert(id.get<int>());
        for (const auto& [key, label] : item.at("labels").items()) {
            AutoLabel l;
            const std::string kind = label.at("label").get<std::string>();
            if (kind == "covering")
                l.kind = AnnotationKind::Covering;
            else if (kind == "redundant")
                l.kind = AnnotationKind::Redundant;
            else if (kind == "optional")
                l.kind = AnnotationKind::Optional;
            else if (kind == "incorrect")
                l.kind = AnnotationKind::Incorrect;
            else
                throw AnnotationError("task " + a.task_id + ": unknown label `" + kind + "`");
            if (label.contains("ref") && !label["ref"].is_null())
                l.ref = label["ref"].get<int>();
            a.labels[std::stoi(key)] = l;
        }
        validate_annotation(a);
        out.push_back(std::move(a));
    }
    return out;
}

inline std::vector<GroundTruthJudgement> ground_truth_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw MismatchError("ground-truth file must be a JSON array");
    std::vector<GroundTruthJudgement> out;
    for (const auto& item : doc) {
        GroundTruthJudgement t;
        t.task_id = item.at("task_id").get<std::string>();
        for (const auto& [key, verdict] : item.at("verdicts").items())
            t.verdicts[std::stoi(key)] = verdict_from_name(verdict.get<std::string>());
        for (const auto& id : item.value("optional", nlohmann::json::array()))
            t.optional_ids.insert(id.get<int>());
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace uijudge
