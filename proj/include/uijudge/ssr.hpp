#pragma once
#include "uijudge/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

// Structured substate representation: an ordered tree of UI states that a
// task run must pass through. PageNodes describe page-level navigation
// states, UnitNodes describe element states inside a page. Every parent
// pointer must reference an earlier PageNode.

namespace uijudge {

enum class NodeKind { Page, Unit };

inline std::string_view node_kind_name(NodeKind k) {
    return k == NodeKind::Page ? "PageNode" : "UnitNode";
}

struct StateNode {
    int id = 0;
    NodeKind kind = NodeKind::Page;
    std::string content;
    std::optional<int> parent_id;

    bool operator==(const StateNode&) const = default;
};

struct SubstateGraph {
    std::string task_id;
    std::vector<StateNode> nodes;

    bool operator==(const SubstateGraph&) const = default;
    bool empty() const { return nodes.empty(); }
    std::size_t size() const { return nodes.size(); }

    const StateNode* find(int id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }
};

enum class GraphRule {
    NonDenseIds,
    ForwardParent,
    MissingParent,
    UnitWithoutParent,
    ParentNotPage,
    EmptyContent,
};

inline std::string_view graph_rule_name(GraphRule r) {
    switch (r) {
        case GraphRule::NonDenseIds: return "NonDenseIds";
        case GraphRule::ForwardParent: return "ForwardParent";
        case GraphRule::MissingParent: return "MissingParent";
        case GraphRule::UnitWithoutParent: return "UnitWithoutParent";
        case GraphRule::ParentNotPage: return "ParentNotPage";
        case GraphRule::EmptyContent: return "EmptyContent";
    }
    return "Unknown";
}

struct GraphViolation {
    std::optional<int> node_id;
    GraphRule rule;
    std::string message;
};

class ParseError : public Error {
public:
    ParseError(int line, const std::string& reason)
        : Error("parse error at line " + std::to_string(line) + ": " + reason), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<GraphViolation> violations)
        : Error(describe(violations)), violations_(std::move(violations)) {}
    const std::vector<GraphViolation>& violations() const { return violations_; }

private:
    static std::string describe(const std::vector<GraphViolation>& vs) {
        std::string s = "invalid substate graph:";
        for (const auto& v : vs) {
            s += "\n- [";
            s += graph_rule_name(v.rule);
            s += "] ";
            s += v.message;
        }
        return s;
    }
    std::vector<GraphViolation> violations_;
};

class DecodeError : public Error {
public:
    explicit DecodeError(const std::string& reason) : Error("decode error: " + reason) {}
};

inline std::string trim_copy(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string lower_copy(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Case-insensitive content key used wherever substates are deduplicated.
inline std::string content_fold(std::string_view content) {
    return lower_copy(trim_copy(content));
}

// Checks every graph invariant and reports one violation per failed
// check, ordered by node position. Total: never throws.
inline std::vector<GraphViolation> validate(const SubstateGraph& graph) {
    std::vector<GraphViolation> out;
    const int n = static_cast<int>(graph.nodes.size());

    std::unordered_map<int, const StateNode*> by_id;
    for (const auto& node : graph.nodes) by_id.emplace(node.id, &node);

    for (int pos = 0; pos < n; ++pos) {
        const StateNode& node = graph.nodes[pos];
        if (node.id != pos) {
            out.push_back({node.id, GraphRule::NonDenseIds,
                           "node at position " + std::to_string(pos) + " has id " +
                               std::to_string(node.id) + "; ids must be exactly 0.." +
                               std::to_string(n - 1) + " in order"});
        }
        if (trim_copy(node.content).empty()) {
            out.push_back({node.id, GraphRule::EmptyContent,
                           "node " + std::to_string(node.id) + " has empty content"});
        }
        if (node.kind == NodeKind::Unit && !node.parent_id.has_value()) {
            out.push_back({node.id, GraphRule::UnitWithoutParent,
                           "UnitNode " + std::to_string(node.id) + " has no parent page"});
        }
        if (node.parent_id.has_value()) {
            const int parent = *node.parent_id;
            auto it = by_id.find(parent);
            if (parent < 0 || it == by_id.end()) {
                out.push_back({node.id, GraphRule::MissingParent,
                               "node " + std::to_string(node.id) + " references missing parent " +
                                   std::to_string(parent)});
            } else if (parent >= node.id) {
                out.push_back({node.id, GraphRule::ForwardParent,
                               "node " + std::to_string(node.id) + " references parent " +
                                   std::to_string(parent) + " which is not an earlier node"});
            } else if (it->second->kind != NodeKind::Page) {
                out.push_back({node.id, GraphRule::ParentNotPage,
                               "node " + std::to_string(node.id) + " has parent " +
                                   std::to_string(parent) + " which is not a PageNode"});
            }
        }
    }
    return out;
}

inline void ensure_valid(const SubstateGraph& graph) {
    auto violations = validate(graph);
    if (!violations.empty()) throw ValidationError(std::move(violations));
}

// One node in the decomposer wire format:
//   <id>. PageNode(content="...", parent_id=None)
inline std::string render_node(const StateNode& node) {
    std::string s = std::to_string(node.id);
    s += ". ";
    s += node_kind_name(node.kind);
    s += "(content=\"";
    s += node.content;
    s += "\", parent_id=";
    s += node.parent_id ? std::to_string(*node.parent_id) : std::string("None");
    s += ")";
    return s;
}

inline std::string render_nodes(const SubstateGraph& graph) {
    std::string out;
    for (const auto& node : graph.nodes) {
        out += render_node(node);
        out += '\n';
    }
    return out;
}

struct ParsedDecomposition {
    SubstateGraph graph;
    std::vector<std::string> warnings;
};

namespace detail {

struct RawNodeLine {
    int line_no;
    int id;
    NodeKind kind;
    std::string content;
    std::optional<int> parent_id;
};

inline bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    long long value = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        value = value * 10 + (c - '0');
        if (value > 1'000'000'000LL) return false;
    }
    out = static_cast<int>(value);
    return true;
}

// A line "looks like" a node once it starts with `<digits>. PageNode(` or
// `<digits>. UnitNode(`; from that point on any malformation is an error
// rather than ignorable prose.
inline bool looks_like_node_line(std::string_view line, std::size_t& digits_end) {
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0 || i >= line.size() || line[i] != '.') return false;
    digits_end = i;
    std::size_t j = i + 1;
    while (j < line.size() && (line[j] == ' ' || line[j] == '\t')) ++j;
    return line.compare(j, 9, "PageNode(") == 0 || line.compare(j, 9, "UnitNode(") == 0;
}

inline RawNodeLine parse_node_line(std::string_view line, std::size_t digits_end, int line_no) {
    RawNodeLine out;
    out.line_no = line_no;
    if (!parse_int(line.substr(0, digits_end), out.id))
        throw ParseError(line_no, "invalid node index");

    std::size_t j = digits_end + 1;
    while (j < line.size() && (line[j] == ' ' || line[j] == '\t')) ++j;
    out.kind = line.compare(j, 9, "PageNode(") == 0 ? NodeKind::Page : NodeKind::Unit;
    j += 9;

    static constexpr std::string_view content_open = "content=\"";
    if (line.compare(j, content_open.size(), content_open) != 0)
        throw ParseError(line_no, "expected content=\"...\" after node kind");
    j += content_open.size();

    // Content may contain unescaped quotes, so anchor on the final
    // `", parent_id=` instead of the next quote.
    static constexpr std::string_view parent_anchor = "\", parent_id=";
    const std::size_t anchor = line.rfind(parent_anchor);
    if (anchor == std::string_view::npos || anchor < j)
        throw ParseError(line_no, "missing `\", parent_id=` delimiter");
    out.content.assign(line.substr(j, anchor - j));

    std::size_t p = anchor + parent_anchor.size();
    const std::size_t close = line.find(')', p);
    if (close == std::string_view::npos)
        throw ParseError(line_no, "missing closing `)`");
    if (!trim_copy(line.substr(close + 1)).empty())
        throw ParseError(line_no, "trailing text after closing `)`");

    const std::string parent_text = trim_copy(line.substr(p, close - p));
    if (parent_text == "None") {
        out.parent_id = std::nullopt;
    } else {
        int parent = 0;
        if (!parse_int(parent_text, parent))
            throw ParseError(line_no, "parent_id must be an integer or None, got `" + parent_text + "`");
        out.parent_id = parent;
    }
    return out;
}

} // namespace detail

// Parses raw decomposer output. Node lines are extracted from surrounding
// prose, code fences and blank lines; gapped-but-increasing ids are
// re-indexed to 0..N-1 with a warning; then the graph is validated.
// Throws ParseError when no node lines exist or a node line is malformed,
// ValidationError when the parsed graph breaks an invariant.
inline ParsedDecomposition parse_decomposition(const std::string& text) {
    std::vector<detail::RawNodeLine> raw;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string_view line(text.data() + pos,
                              (eol == std::string::npos ? text.size() : eol) - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;

        // Tolerate indentation and a leading list bullet.
        std::size_t start = 0;
        while (start < line.size() &&
               (line[start] == ' ' || line[start] == '\t')) ++start;
        if (start + 1 < line.size() && line[start] == '-' && line[start + 1] == ' ') start += 2;
        std::string_view body = line.substr(start);

        std::size_t digits_end = 0;
        if (detail::looks_like_node_line(body, digits_end))
            raw.push_back(detail::parse_node_line(body, digits_end, line_no));

        if (eol == std::string::npos) break;
        pos = eol + 1;
    }
    if (raw.empty()) throw ParseError(0, "no substate node lines found in response");

    ParsedDecomposition result;

    // Re-index strictly increasing but gapped ids; anything else is left
    // untouched for validate() to reject as NonDenseIds.
    bool strictly_increasing = true;
    for (std::size_t i = 1; i < raw.size(); ++i)
        if (raw[i].id <= raw[i - 1].id) strictly_increasing = false;

    std::unordered_map<int, int> remap;
    bool remapped = false;
    if (strictly_increasing) {
        for (std::size_t i = 0; i < raw.size(); ++i) {
            remap.emplace(raw[i].id, static_cast<int>(i));
            if (raw[i].id != static_cast<int>(i)) remapped = true;
        }
    }

    for (std::size_t i = 0; i < raw.size(); ++i) {
        StateNode node;
        node.kind = raw[i].kind;
        node.content = std::move(raw[i].content);
        if (strictly_increasing) {
            node.id = static_cast<int>(i);
            if (raw[i].parent_id) {
                auto it = remap.find(*raw[i].parent_id);
                // Unknown parents keep their original value and fail
                // validation as MissingParent.
                node.parent_id = it != remap.end() ? it->second : *raw[i].parent_id;
            }
        } else {
            node.id = raw[i].id;
            node.parent_id = raw[i].parent_id;
        }
        result.graph.nodes.push_back(std::move(node));
    }
    if (remapped)
        result.warnings.push_back("node ids were not dense; re-indexed to 0.." +
                                  std::to_string(raw.size() - 1));

    ensure_valid(result.graph);

    if (!result.graph.nodes.empty()) {
        const StateNode& first = result.graph.nodes.front();
        if (first.kind != NodeKind::Page || first.parent_id.has_value())
            result.warnings.push_back("node 0 is not a parentless PageNode");
    }
    return result;
}

// Collapses duplicate substates: same kind, same parent, same content
// after trimming and case folding. Survivors keep first-occurrence order
// and ids are re-packed to stay dense.
inline ParsedDecomposition collapse_duplicate_nodes(const SubstateGraph& graph) {
    ParsedDecomposition result;
    result.graph.task_id = graph.task_id;

    std::unordered_map<std::string, int> seen; // dedup key -> new id
    std::unordered_map<int, int> remap;        // old id -> new id
    for (const auto& node : graph.nodes) {
        std::string key = std::string(node_kind_name(node.kind)) + "|" +
                          (node.parent_id ? std::to_string(remap.at(*node.parent_id)) : "-") +
                          "|" + content_fold(node.content);
        auto it = seen.find(key);
        if (it != seen.end()) {
            remap[node.id] = it->second;
            result.warnings.push_back("collapsed duplicate substate " + std::to_string(node.id) +
                                      " into " + std::to_string(it->second) + " (\"" +
                                      node.content + "\")");
            continue;
        }
        StateNode kept = node;
        kept.id = static_cast<int>(result.graph.nodes.size());
        if (node.parent_id) kept.parent_id = remap.at(*node.parent_id);
        remap[node.id] = kept.id;
        seen.emplace(std::move(key), kept.id);
        result.graph.nodes.push_back(std::move(kept));
    }
    return result;
}

inline nlohmann::json graph_to_json(const SubstateGraph& graph) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : graph.nodes) {
        nlohmann::json j;
        j["content"] = node.content;
        j["id"] = node.id;
        j["kind"] = node_kind_name(node.kind);
        if (node.parent_id)
            j["parent_id"] = *node.parent_id;
        else
            j["parent_id"] = nullptr;
        nodes.push_back(std::move(j));
    }
    nlohmann::json doc;
    doc["nodes"] = std::move(nodes);
    doc["task_id"] = graph.task_id;
    return doc;
}

inline SubstateGraph graph_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("task_id") || !doc.contains("nodes") ||
        !doc["task_id"].is_string() || !doc["nodes"].is_array())
        throw DecodeError("canonical graph must be {task_id, nodes[]}");

    SubstateGraph graph;
    graph.task_id = doc["task_id"].get<std::string>();
    for (const auto& j : doc["nodes"]) {
        if (!j.is_object() || !j.contains("id") || !j.contains("kind") ||
            !j.contains("content") || !j.contains("parent_id") ||
            !j["id"].is_number_integer() || !j["kind"].is_string() || !j["content"].is_string())
            throw DecodeError("node entries must be {id, kind, content, parent_id}");
        StateNode node;
        node.id = j["id"].get<int>();
        const std::string kind = j["kind"].get<std::string>();
        if (kind == "PageNode")
            node.kind = NodeKind::Page;
        else if (kind == "UnitNode")
            node.kind = NodeKind::Unit;
        else
            throw DecodeError("unknown node kind `" + kind + "`");
        node.content = j["content"].get<std::string>();
        if (j["parent_id"].is_null())
            node.parent_id = std::nullopt;
        else if (j["parent_id"].is_number_integer())
            node.parent_id = j["parent_id"].get<int>();
        else
            throw DecodeError("parent_id must be an integer or null");
        graph.nodes.push_back(std::move(node));
    }
    return graph;
}

// Canonical on-disk form: JSON with alphabetically ordered keys, so equal
// graphs always serialize to identical bytes.
inline std::string to_canonical(const SubstateGraph& graph) {
    ensure_valid(graph);
    return graph_to_json(graph).dump(2) + "\n";
}

inline SubstateGraph from_canonical(const std::string& bytes) {
    nlohmann::json doc = nlohmann::json::parse(bytes, nullptr, false);
    if (doc.is_discarded()) throw DecodeError("canonical graph is not valid JSON");
    SubstateGraph graph = graph_from_json(doc);
    ensure_valid(graph);
    return graph;
}

} // namespace uijudge
