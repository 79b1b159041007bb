#include "uijudge/ssr.hpp"

#include "support/testutil.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace uijudge;
namespace tu = uijudge::testutil;

namespace {

bool has_rule(const std::vector<GraphViolation>& vs, GraphRule rule) {
    for (const auto& v : vs)
        if (v.rule == rule) return true;
    return false;
}

TEST(SsrParse, MrBeastExampleParsesToFiveNodes) {
    const ParsedDecomposition parsed = parse_decomposition(tu::mrbeast_decomposition);
    const SubstateGraph expected = tu::mrbeast_graph("");
    ASSERT_EQ(parsed.graph.nodes.size(), 5u);
    EXPECT_EQ(parsed.graph.nodes, expected.nodes);
    EXPECT_TRUE(parsed.warnings.empty());

    // Nested unescaped quotes survive as content.
    EXPECT_EQ(parsed.graph.nodes[2].content,
              "The search bar in youtube search page contains the text \"MrBeast\"");
    EXPECT_EQ(parsed.graph.nodes[2].kind, NodeKind::Unit);
    EXPECT_EQ(parsed.graph.nodes[2].parent_id, 1);
    EXPECT_EQ(parsed.graph.nodes[4].parent_id, 3);
}

TEST(SsrParse, IgnoresSurroundingProseAndFences) {
    const std::string text = "Here is the decomposition you asked for:\n```\n" +
                             tu::mrbeast_decomposition + "```\nLet me know if ok.\n";
    EXPECT_EQ(parse_decomposition(text).graph.nodes.size(), 5u);
}

TEST(SsrParse, AcceptsBulletedNodeLines) {
    const std::string text =
        "- 0. PageNode(content=\"Clock app is open\", parent_id=None)\n"
        "- 1. UnitNode(content=\"Alarm at 07:30 exists\", parent_id=0)\n";
    const auto parsed = parse_decomposition(text);
    ASSERT_EQ(parsed.graph.nodes.size(), 2u);
    EXPECT_EQ(parsed.graph.nodes[1].kind, NodeKind::Unit);
}

TEST(SsrParse, EmptyInputIsParseError) {
    EXPECT_THROW(parse_decomposition(""), ParseError);
    EXPECT_THROW(parse_decomposition("no nodes here at all"), ParseError);
}

TEST(SsrParse, MalformedNodeLineIsParseError) {
    EXPECT_THROW(parse_decomposition("0. PageNode(content=\"x\", parent=None)\n"), ParseError);
    EXPECT_THROW(parse_decomposition("0. PageNode(content=\"x\", parent_id=)\n"), ParseError);
    EXPECT_THROW(parse_decomposition("0. PageNode(content=\"x\", parent_id=None\n"), ParseError);
    EXPECT_THROW(parse_decomposition("0. PageNode(content=\"x\", parent_id=None) extra\n"),
                 ParseError);
}

TEST(SsrParse, UnitWithoutParentFailsValidation) {
    try {
        parse_decomposition("0. UnitNode(content=\"x\", parent_id=None)\n");
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        ASSERT_EQ(e.violations().size(), 1u);
        EXPECT_EQ(e.violations()[0].rule, GraphRule::UnitWithoutParent);
    }
}

TEST(SsrParse, GappedIdsAreReindexedWithWarning) {
    const std::string text =
        "1. PageNode(content=\"app open\", parent_id=None)\n"
        "3. PageNode(content=\"settings page\", parent_id=1)\n"
        "6. UnitNode(content=\"toggle enabled\", parent_id=3)\n";
    const auto parsed = parse_decomposition(text);
    ASSERT_EQ(parsed.graph.nodes.size(), 3u);
    EXPECT_EQ(parsed.graph.nodes[0].id, 0);
    EXPECT_EQ(parsed.graph.nodes[1].parent_id, 0);
    EXPECT_EQ(parsed.graph.nodes[2].parent_id, 1);
    ASSERT_EQ(parsed.warnings.size(), 1u);
    EXPECT_NE(parsed.warnings[0].find("re-indexed"), std::string::npos);
}

TEST(SsrParse, NonPageFirstNodeWarns) {
    const std::string text =
        "0. PageNode(content=\"page\", parent_id=None)\n"
        "1. UnitNode(content=\"unit\", parent_id=0)\n";
    EXPECT_TRUE(parse_decomposition(text).warnings.empty());

    const std::string second_root =
        "0. PageNode(content=\"a\", parent_id=None)\n"
        "1. PageNode(content=\"b\", parent_id=None)\n";
    EXPECT_TRUE(parse_decomposition(second_root).warnings.empty());
}

TEST(SsrValidate, ValidMrBeastGraphHasNoViolations) {
    EXPECT_TRUE(validate(tu::mrbeast_graph()).empty());
}

TEST(SsrValidate, ForwardParentDetected) {
    SubstateGraph g = tu::mrbeast_graph();
    g.nodes[2].parent_id = 3;
    const auto vs = validate(g);
    ASSERT_EQ(vs.size(), 1u);
    EXPECT_EQ(vs[0].rule, GraphRule::ForwardParent);
    EXPECT_EQ(vs[0].node_id, 2);
}

TEST(SsrValidate, MissingParentDetected) {
    SubstateGraph g = tu::mrbeast_graph();
    g.nodes[2].parent_id = 77;
    const auto vs = validate(g);
    ASSERT_EQ(vs.size(), 1u);
    EXPECT_EQ(vs[0].rule, GraphRule::MissingParent);
}

TEST(SsrValidate, EmptyContentDetected) {
    SubstateGraph g = tu::mrbeast_graph();
    g.nodes[1].content = "   ";
    EXPECT_TRUE(has_rule(validate(g), GraphRule::EmptyContent));
}

TEST(SsrValidate, NonDenseIdsDetected) {
    SubstateGraph g = tu::mrbeast_graph();
    g.nodes[3].id = 9;
    EXPECT_TRUE(has_rule(validate(g), GraphRule::NonDenseIds));
}

// Brute-force oracle over all two-node shapes: enumerate both kinds for
// both nodes and every parent choice for node 1, and confirm exactly the
// parent-is-a-unit cases are rejected as ParentNotPage.
TEST(SsrValidate, TwoNodeKindCombinationsMatchBruteForce) {
    const NodeKind kinds[] = {NodeKind::Page, NodeKind::Unit};
    int checked = 0;
    for (NodeKind k0 : kinds) {
        for (NodeKind k1 : kinds) {
            for (bool child_has_parent : {false, true}) {
                SubstateGraph g;
                g.task_id = "combo";
                g.nodes = {{0, k0, "root", std::nullopt},
                           {1, k1, "child", child_has_parent ? std::optional<int>(0)
                                                             : std::nullopt}};
                const auto vs = validate(g);

                const bool expect_unit_root = k0 == NodeKind::Unit; // UnitWithoutParent
                const bool expect_unit_child = k1 == NodeKind::Unit && !child_has_parent;
                const bool expect_parent_not_page =
                    child_has_parent && k0 == NodeKind::Unit;

                EXPECT_EQ(has_rule(vs, GraphRule::UnitWithoutParent),
                          expect_unit_root || expect_unit_child);
                EXPECT_EQ(has_rule(vs, GraphRule::ParentNotPage), expect_parent_not_page);
                const bool expect_valid =
                    !expect_unit_root && !expect_unit_child && !expect_parent_not_page;
                EXPECT_EQ(vs.empty(), expect_valid);
                ++checked;
            }
        }
    }
    EXPECT_EQ(checked, 8);
}

TEST(SsrValidate, DeterministicAndOrderStable) {
    SubstateGraph g = tu::mrbeast_graph();
    g.nodes[1].content = " ";
    g.nodes[2].parent_id = 3;
    const auto first = validate(g);
    const auto second = validate(g);
    ASSERT_EQ(first.size(), second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        EXPECT_EQ(first[i].rule, second[i].rule);
        EXPECT_EQ(first[i].node_id, second[i].node_id);
        EXPECT_EQ(first[i].message, second[i].message);
    }
}

// Acyclicity: every node's parent chain must end at a parentless page in
// at most N steps.
TEST(SsrValidate, ParentChainsTerminate) {
    std::mt19937 rng(411);
    for (int i = 0; i < 200; ++i) {
        const SubstateGraph g = tu::random_valid_graph(rng);
        ASSERT_TRUE(validate(g).empty());
        for (const auto& node : g.nodes) {
            const StateNode* cur = &node;
            std::size_t steps = 0;
            while (cur->parent_id) {
                cur = g.find(*cur->parent_id);
                ASSERT_NE(cur, nullptr);
                ASSERT_LE(++steps, g.nodes.size());
            }
            EXPECT_EQ(cur->kind, NodeKind::Page);
        }
    }
}

TEST(SsrRender, ParseAfterRenderIsIdentity) {
    std::mt19937 rng(97);
    for (int i = 0; i < 200; ++i) {
        const SubstateGraph g = tu::random_valid_graph(rng);
        const ParsedDecomposition reparsed = parse_decomposition(render_nodes(g));
        EXPECT_EQ(reparsed.graph.nodes, g.nodes);
    }
}

TEST(SsrCanonical, MrBeastRoundTrips) {
    const SubstateGraph g = tu::mrbeast_graph();
    EXPECT_EQ(from_canonical(to_canonical(g)), g);
}

TEST(SsrCanonical, SingleNodeRoundTrips) {
    SubstateGraph g;
    g.task_id = "single";
    g.nodes = {{0, NodeKind::Page, "only page", std::nullopt}};
    EXPECT_EQ(from_canonical(to_canonical(g)), g);
}

TEST(SsrCanonical, RandomGraphsRoundTripByteStable) {
    std::mt19937 rng(2024);
    for (int i = 0; i < 100; ++i) {
        const SubstateGraph g = tu::random_valid_graph(rng);
        const std::string bytes = to_canonical(g);
        const SubstateGraph back = from_canonical(bytes);
        EXPECT_EQ(back, g);
        EXPECT_EQ(to_canonical(back), bytes);
    }
}

TEST(SsrCanonical, RejectsMalformedBytes) {
    EXPECT_THROW(from_canonical("not json"), DecodeError);
    EXPECT_THROW(from_canonical("{\"task_id\": 3}"), DecodeError);
    EXPECT_THROW(from_canonical("{\"task_id\": \"x\", \"nodes\": [{}]}"), DecodeError);
}

TEST(SsrCanonical, RejectsInvalidDecodedGraph) {
    // Structurally fine JSON, but the unit has no parent.
    const std::string bytes = R"({"nodes": [{"content": "x", "id": 0,
        "kind": "UnitNode", "parent_id": null}], "task_id": "t"})";
    EXPECT_THROW(from_canonical(bytes), ValidationError);
}

TEST(SsrCanonical, ToCanonicalRequiresValidGraph) {
    SubstateGraph g = tu::mrbeast_graph();
    g.nodes[2].parent_id = 3;
    EXPECT_THROW(to_canonical(g), ValidationError);
}

TEST(SsrCollapse, DuplicatesMergeCaseInsensitively) {
    SubstateGraph g;
    g.task_id = "dup";
    g.nodes = {
        {0, NodeKind::Page, "App main page is visible", std::nullopt},
        {1, NodeKind::Unit, "Search bar contains \"cats\"", 0},
        {2, NodeKind::Unit, "  search BAR contains \"cats\"  ", 0},
        {3, NodeKind::Page, "Results page is visible", 0},
    };
    const ParsedDecomposition collapsed = collapse_duplicate_nodes(g);
    ASSERT_EQ(collapsed.graph.nodes.size(), 3u);
    EXPECT_EQ(collapsed.graph.nodes[2].content, "Results page is visible");
    EXPECT_EQ(collapsed.graph.nodes[2].id, 2);
    ASSERT_EQ(collapsed.warnings.size(), 1u);
    EXPECT_TRUE(validate(collapsed.graph).empty());
}

TEST(SsrCollapse, ChildrenOfCollapsedPageAreReparented) {
    SubstateGraph g;
    g.task_id = "dup-page";
    g.nodes = {
        {0, NodeKind::Page, "Contacts page", std::nullopt},
        {1, NodeKind::Page, "contacts page", std::nullopt},
        {2, NodeKind::Unit, "Contact John exists", 1},
    };
    const ParsedDecomposition collapsed = collapse_duplicate_nodes(g);
    ASSERT_EQ(collapsed.graph.nodes.size(), 2u);
    EXPECT_EQ(collapsed.graph.nodes[1].parent_id, 0);
    EXPECT_TRUE(validate(collapsed.graph).empty());
}

TEST(SsrCollapse, DistinctKindsAreNotMerged) {
    SubstateGraph g;
    g.task_id = "kinds";
    g.nodes = {
        {0, NodeKind::Page, "Alarm page", std::nullopt},
        {1, NodeKind::Unit, "Alarm page", 0},
    };
    EXPECT_EQ(collapse_duplicate_nodes(g).graph.nodes.size(), 2u);
}

} // namespace
