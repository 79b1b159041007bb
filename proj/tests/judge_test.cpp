#include "uijudge/judge.hpp"

#include "uijudge/digest.hpp"

#include "support/testutil.hpp"

#include <gtest/gtest.h>

using namespace uijudge;
namespace tu = uijudge::testutil;

namespace {

BackendConfig scripted_cfg(const std::string& provider = "scripted") {
    BackendConfig cfg;
    cfg.provider = provider;
    cfg.model = "scripted-model";
    cfg.requests_per_minute = 100000;
    cfg.max_retries = 0;
    return cfg;
}

TaskSpec mrbeast_task() {
    TaskSpec task;
    task.task_id = "youtube-001";
    task.description = "Search and subscribe to the \"MrBeast\" YouTube channel using the "
                       "YouTube app.";
    task.app_name = "YouTube app";
    return task;
}

// Three-screenshot walkthrough: home page, search page with the query
// typed, channel page subscribed.
struct MrBeastFixture {
    tu::TempDir dir{"mrbeast"};
    TraceManifest trace;
    std::shared_ptr<ScriptedBackend> backend = std::make_shared<ScriptedBackend>();

    MrBeastFixture() {
        const std::vector<std::string> images = {tu::fake_png("home"), tu::fake_png("search"),
                                                 tu::fake_png("channel")};
        trace = tu::write_trace(dir.path() / "trace", "youtube-001", images);

        backend->key_caption(sha256_hex(images[0]),
                             "The YouTube app main page is visible with a search icon on top.");
        backend->key_caption(sha256_hex(images[1]),
                             "The YouTube search page is visible; the search bar contains the "
                             "text \"MrBeast\".");
        backend->key_caption(sha256_hex(images[2]),
                             "The MrBeast channel page is visible and the Subscribed button is "
                             "shown.");

        backend->queue_completion(tu::mrbeast_reasoner_response);
        backend->queue_completion(tu::make_reasoner_response(
            {"true", "true", "uncertain", "uncertain"},
            "The query \"MrBeast\" was already submitted from the search page"));
        backend->queue_completion(tu::make_reasoner_response({"true", "true"}));
    }
};

TEST(Capture, ScriptedVisionBackendReturnsStoredCaption) {
    auto backend = std::make_shared<ScriptedBackend>();
    const std::string image = tu::fake_png("one");
    backend->key_caption(sha256_hex(image), "described");
    ModelGateway gateway;
    gateway.register_backend("scripted", backend);
    EXPECT_EQ(capture(gateway, scripted_cfg(), image, {"t", "capturer"}), "described");
}

TEST(Capture, CorruptImageFailsBeforeAnyBackendCall) {
    auto backend = std::make_shared<ScriptedBackend>();
    ModelGateway gateway;
    gateway.register_backend("scripted", backend);
    EXPECT_THROW(capture(gateway, scripted_cfg(), "definitely not an image", {"t", "capturer"}),
                 CaptureError);
    EXPECT_EQ(backend->caption_calls(), 0);
}

TEST(Capture, RepeatDigestHitsCache) {
    auto backend = std::make_shared<ScriptedBackend>();
    const std::string image = tu::fake_png("repeat");
    backend->key_caption(sha256_hex(image), "cached");
    ModelGateway gateway;
    gateway.register_backend("scripted", backend);
    capture(gateway, scripted_cfg(), image, {"t", "capturer"});
    capture(gateway, scripted_cfg(), image, {"t", "capturer"});
    EXPECT_EQ(backend->caption_calls(), 1);
}

TEST(DecodeReasoner, ExampleResponseDecodes) {
    const ReasonerOutput out = decode_reasoner_output(tu::mrbeast_reasoner_response, 5);
    EXPECT_FALSE(out.thought.empty());
    ASSERT_EQ(out.analysis.size(), 5u);
    const std::vector<Verdict> expected = {Verdict::Success, Verdict::Uncertain,
                                           Verdict::Uncertain, Verdict::Uncertain,
                                           Verdict::Uncertain};
    EXPECT_EQ(out.states, expected);
    EXPECT_FALSE(out.critical_info.has_value());
}

TEST(DecodeReasoner, ToleratesFencesAndProse) {
    const std::string raw = "Sure! Here is my judgement:\n```json\n" +
                            tu::make_reasoner_response({"true", "uncertain"}) + "\n```\nDone.";
    EXPECT_EQ(decode_reasoner_output(raw, 2).states.size(), 2u);
}

TEST(DecodeReasoner, RejectsOutOfVocabularyVerdict) {
    EXPECT_THROW(decode_reasoner_output(tu::make_reasoner_response({"true", "false"}), 2),
                 DecodeError);
}

TEST(DecodeReasoner, RejectsCountMismatch) {
    EXPECT_THROW(decode_reasoner_output(tu::make_reasoner_response({"true", "uncertain"}), 5),
                 DecodeError);

    // Four analyses against five states breaks the paired-count rule.
    nlohmann::json doc;
    doc["thought"] = "t";
    doc["analysis"] = {"a", "b", "c", "d"};
    doc["states"] = {"true", "uncertain", "uncertain", "uncertain", "uncertain"};
    EXPECT_THROW(decode_reasoner_output(doc.dump(), 5), DecodeError);
}

TEST(DecodeReasoner, RejectsMissingFieldsAndNonJson) {
    EXPECT_THROW(decode_reasoner_output("no object here", 1), DecodeError);
    EXPECT_THROW(decode_reasoner_output("{\"analysis\": [], \"states\": []}", 0), DecodeError);
    EXPECT_THROW(decode_reasoner_output("{\"thought\": \"x\", \"states\": []}", 0), DecodeError);
}

TEST(DecodeReasoner, CriticalInfoIsOptionalString) {
    const std::string with = tu::make_reasoner_response({"true"}, "remember the toggle");
    EXPECT_EQ(decode_reasoner_output(with, 1).critical_info, "remember the toggle");

    nlohmann::json doc;
    doc["thought"] = "t";
    doc["analysis"] = {"a"};
    doc["states"] = {"true"};
    doc["critical_info"] = 42;
    EXPECT_THROW(decode_reasoner_output(doc.dump(), 1), DecodeError);
}

TEST(Check, ParentAndChildSuccessInOneOutput) {
    const SubstateGraph g = tu::mrbeast_graph();
    std::vector<StateNode> pending = {g.nodes[1], g.nodes[2]};
    ReasonerOutput out;
    out.states = {Verdict::Success, Verdict::Success};
    out.analysis = {"a", "b"};
    Memory mem;
    const auto verdicts = check(out, pending, mem);
    EXPECT_EQ(verdicts[0].verdict, Verdict::Success);
    EXPECT_EQ(verdicts[1].verdict, Verdict::Success);
}

TEST(Check, UncertainParentBlocksUnitStrictAndDemote) {
    const SubstateGraph g = tu::mrbeast_graph();
    std::vector<StateNode> pending = {g.nodes[1], g.nodes[2]};
    ReasonerOutput out;
    out.states = {Verdict::Uncertain, Verdict::Success};
    out.analysis = {"a", "b"};
    Memory mem;
    EXPECT_THROW(check(out, pending, mem, GatePolicy::Strict), RuleViolation);
    const auto demoted = check(out, pending, mem, GatePolicy::Demote);
    EXPECT_EQ(demoted[1].verdict, Verdict::Uncertain);
}

TEST(Check, LatchedParentSatisfiesGate) {
    const SubstateGraph g = tu::mrbeast_graph();
    std::vector<StateNode> pending = {g.nodes[2]};
    ReasonerOutput out;
    out.states = {Verdict::Success};
    out.analysis = {"a"};
    Memory mem;
    mem.succeeded[1] = 0; // parent page satisfied two screenshots ago
    const auto verdicts = check(out, pending, mem);
    EXPECT_EQ(verdicts[0].verdict, Verdict::Success);
}

TEST(Check, CountMismatchIsMisuse) {
    const SubstateGraph g = tu::mrbeast_graph();
    std::vector<StateNode> pending = {g.nodes[0]};
    ReasonerOutput out;
    out.states = {Verdict::Success, Verdict::Success};
    out.analysis = {"a", "b"};
    Memory mem;
    EXPECT_THROW(check(out, pending, mem), std::invalid_argument);
}

TEST(JudgeTask, MrBeastWalkthroughSucceedsCompletely) {
    MrBeastFixture fx;
    ModelGateway gateway;
    gateway.register_backend("scripted", fx.backend);

    const TaskJudgement j = judge_task(mrbeast_task(), tu::mrbeast_graph("youtube-001"),
                                       fx.trace, {scripted_cfg(), scripted_cfg()}, gateway);

    ASSERT_EQ(j.final_status.size(), 5u);
    for (const auto& [id, verdict] : j.final_status) EXPECT_EQ(verdict, Verdict::Success);
    EXPECT_EQ(j.first_success_index.at(0), 0);
    EXPECT_EQ(j.first_success_index.at(1), 1);
    EXPECT_EQ(j.first_success_index.at(2), 1);
    EXPECT_EQ(j.first_success_index.at(3), 2);
    EXPECT_EQ(j.first_success_index.at(4), 2);
    EXPECT_TRUE(j.skipped.empty());
    ASSERT_EQ(j.records.size(), 3u);
    EXPECT_EQ(j.records[1].decoded->critical_info,
              "The query \"MrBeast\" was already submitted from the search page");

    // Pruning: each screenshot only queries what is still pending.
    EXPECT_EQ(j.records[0].verdicts.size(), 5u);
    EXPECT_EQ(j.records[1].verdicts.size(), 4u);
    EXPECT_EQ(j.records[2].verdicts.size(), 2u);
    EXPECT_EQ(gateway.transcript()->count("chat"), 3u);
    EXPECT_EQ(gateway.transcript()->count("vision"), 3u);
}

TEST(JudgeTask, JudgementIsDeterministicAcrossRuns) {
    std::string first_bytes, second_bytes;
    for (std::string* bytes : {&first_bytes, &second_bytes}) {
        MrBeastFixture fx;
        ModelGateway gateway;
        gateway.register_backend("scripted", fx.backend);
        const TaskJudgement j = judge_task(mrbeast_task(), tu::mrbeast_graph("youtube-001"),
                                           fx.trace, {scripted_cfg(), scripted_cfg()}, gateway);
        *bytes = judgement_to_json(j).dump(2);
    }
    EXPECT_EQ(first_bytes, second_bytes);
}

TEST(JudgeTask, TranscriptReplayReproducesJudgement) {
    MrBeastFixture fx;
    ModelGateway gateway;
    gateway.register_backend("scripted", fx.backend);
    const TaskJudgement original =
        judge_task(mrbeast_task(), tu::mrbeast_graph("youtube-001"), fx.trace,
                   {scripted_cfg(), scripted_cfg()}, gateway);

    ModelGateway replay;
    replay.register_backend("scripted",
                            ScriptedBackend::from_transcript(gateway.transcript()->records()));
    const TaskJudgement replayed =
        judge_task(mrbeast_task(), tu::mrbeast_graph("youtube-001"), fx.trace,
                   {scripted_cfg(), scripted_cfg()}, replay);
    EXPECT_EQ(original, replayed);
}

TEST(JudgeTask, AgentStuckOnHomeScreenOnlySatisfiesFirstSubstate) {
    tu::TempDir dir("stuck");
    const std::vector<std::string> images = {tu::fake_png("home"), tu::fake_png("home2")};
    const TraceManifest trace = tu::write_trace(dir.path() / "trace", "youtube-001", images);

    auto backend = std::make_shared<ScriptedBackend>();
    backend->key_caption(sha256_hex(images[0]), "The YouTube main page is visible.");
    backend->key_caption(sha256_hex(images[1]), "Still the YouTube main page.");
    backend->queue_completion(tu::mrbeast_reasoner_response);
    backend->queue_completion(tu::make_reasoner_response(
        {"uncertain", "uncertain", "uncertain", "uncertain"}));
    ModelGateway gateway;
    gateway.register_backend("scripted", backend);

    const TaskJudgement j = judge_task(mrbeast_task(), tu::mrbeast_graph("youtube-001"), trace,
                                       {scripted_cfg(), scripted_cfg()}, gateway);
    EXPECT_EQ(j.final_status.at(0), Verdict::Success);
    for (int id : {1, 2, 3, 4}) EXPECT_EQ(j.final_status.at(id), Verdict::Uncertain);
}

TEST(JudgeTask, LoopShortCircuitsWhenEverythingIsLatched) {
    tu::TempDir dir("short");
    SubstateGraph graph;
    graph.task_id = "single";
    graph.nodes = {{0, NodeKind::Page, "Settings page is visible", std::nullopt}};

    const std::vector<std::string> images = {tu::fake_png("a"), tu::fake_png("b"),
                                             tu::fake_png("c")};
    const TraceManifest trace = tu::write_trace(dir.path() / "trace", "single", images);

    auto backend = std::make_shared<ScriptedBackend>();
    backend->key_caption(sha256_hex(images[0]), "Settings page.");
    backend->queue_completion(tu::make_reasoner_response({"true"}));
    ModelGateway gateway;
    gateway.register_backend("scripted", backend);

    TaskSpec task;
    task.task_id = "single";
    task.description = "Open settings";
    const TaskJudgement j =
        judge_task(task, graph, trace, {scripted_cfg(), scripted_cfg()}, gateway);

    EXPECT_EQ(j.final_status.at(0), Verdict::Success);
    EXPECT_EQ(j.records.size(), 1u);
    EXPECT_EQ(gateway.transcript()->count("chat"), 1u);
    EXPECT_EQ(gateway.transcript()->count("vision"), 1u); // screenshots 1..2 never captured
}

TEST(JudgeTask, LatchedParentGatesChildTwoScreenshotsLater) {
    tu::TempDir dir("latch");
    SubstateGraph graph;
    graph.task_id = "latch";
    graph.nodes = {{0, NodeKind::Page, "Editor page is visible", std::nullopt},
                   {1, NodeKind::Unit, "Title field contains \"Plan\"", 0}};

    const std::vector<std::string> images = {tu::fake_png("p0"), tu::fake_png("p1"),
                                             tu::fake_png("p2")};
    const TraceManifest trace = tu::write_trace(dir.path() / "trace", "latch", images);

    auto backend = std::make_shared<ScriptedBackend>();
    backend->key_caption(sha256_hex(images[0]), "Editor page, empty title.");
    backend->key_caption(sha256_hex(images[1]), "Dialog covering the editor.");
    backend->key_caption(sha256_hex(images[2]), "Editor page, title says Plan.");
    backend->queue_completion(tu::make_reasoner_response({"true", "uncertain"}));
    backend->queue_completion(tu::make_reasoner_response({"uncertain"}));
    backend->queue_completion(tu::make_reasoner_response({"true"}));
    ModelGateway gateway;
    gateway.register_backend("scripted", backend);

    TaskSpec task;
    task.task_id = "latch";
    task.description = "Name the note Plan";
    const TaskJudgement j =
        judge_task(task, graph, trace, {scripted_cfg(), scripted_cfg()}, gateway);

    EXPECT_EQ(j.final_status.at(0), Verdict::Success);
    EXPECT_EQ(j.final_status.at(1), Verdict::Success);
    EXPECT_EQ(j.first_success_index.at(0), 0);
    EXPECT_EQ(j.first_success_index.at(1), 2);
}

TEST(JudgeTask, GateViolationRetriesOnceThenDemotes) {
    tu::TempDir dir("violate");
    SubstateGraph graph;
    graph.task_id = "violate";
    graph.nodes = {{0, NodeKind::Page, "Player page is visible", std::nullopt},
                   {1, NodeKind::Unit, "Song \"Hello\" is playing", 0}};

    const std::vector<std::string> images = {tu::fake_png("v0")};
    const TraceManifest trace = tu::write_trace(dir.path() / "trace", "violate", images);

    auto backend = std::make_shared<ScriptedBackend>();
    backend->key_caption(sha256_hex(images[0]), "Some page with a song playing.");
    // Both replies claim the unit succeeded under an uncertain parent.
    backend->queue_completion(tu::make_reasoner_response({"uncertain", "true"}));
    backend->queue_completion(tu::make_reasoner_response({"uncertain", "true"}));
    ModelGateway gateway;
    gateway.register_backend("scripted", backend);

    TaskSpec task;
    task.task_id = "violate";
    task.description = "Play Hello";
    const TaskJudgement j =
        judge_task(task, graph, trace, {scripted_cfg(), scripted_cfg()}, gateway);

    ASSERT_EQ(j.records.size(), 1u);
    EXPECT_EQ(j.records[0].disposition, "degraded");
    EXPECT_EQ(j.records[0].retries, 1);
    EXPECT_EQ(j.final_status.at(0), Verdict::Uncertain);
    EXPECT_EQ(j.final_status.at(1), Verdict::Uncertain);
    EXPECT_EQ(gateway.transcript()->count("chat"), 2u);
}

TEST(JudgeTask, UndecodableRepliesSkipTheScreenshot) {
    tu::TempDir dir("skipdecode");
    SubstateGraph graph;
    graph.task_id = "skipdecode";
    graph.nodes = {{0, NodeKind::Page, "Maps app is open", std::nullopt}};

    const std::vector<std::string> images = {tu::fake_png("s0"), tu::fake_png("s1")};
    const TraceManifest trace = tu::write_trace(dir.path() / "trace", "skipdecode", images);

    auto backend = std::make_shared<ScriptedBackend>();
    backend->key_caption(sha256_hex(images[0]), "Maps.");
    backend->key_caption(sha256_hex(images[1]), "Maps again.");
    backend->queue_completion("not json at all");
    backend->queue_completion("still not json");
    backend->queue_completion(tu::make_reasoner_response({"true"}));
    ModelGateway gateway;
    gateway.register_backend("scripted", backend);

    TaskSpec task;
    task.task_id = "skipdecode";
    task.description = "Open maps";
    const TaskJudgement j =
        judge_task(task, graph, trace, {scripted_cfg(), scripted_cfg()}, gateway);

    ASSERT_EQ(j.skipped.size(), 1u);
    EXPECT_EQ(j.skipped[0].index, 0);
    EXPECT_NE(j.skipped[0].reason.find("decode"), std::string::npos);
    EXPECT_EQ(j.final_status.at(0), Verdict::Success); // screenshot 1 recovered
}

TEST(JudgeTask, CaptureFailureSkipsScreenshotAndContinues) {
    tu::TempDir dir("skipcapture");
    SubstateGraph graph;
    graph.task_id = "skipcapture";
    graph.nodes = {{0, NodeKind::Page, "Zoom app is open", std::nullopt}};

    // First "screenshot" is not an image at all.
    const std::vector<std::string> images = {"corrupt bytes", tu::fake_png("ok")};
    const TraceManifest trace = tu::write_trace(dir.path() / "trace", "skipcapture", images);

    auto backend = std::make_shared<ScriptedBackend>();
    backend->key_caption(sha256_hex(images[1]), "Zoom app visible.");
    backend->queue_completion(tu::make_reasoner_response({"true"}));
    ModelGateway gateway;
    gateway.register_backend("scripted", backend);

    TaskSpec task;
    task.task_id = "skipcapture";
    task.description = "Open zoom";
    const TaskJudgement j =
        judge_task(task, graph, trace, {scripted_cfg(), scripted_cfg()}, gateway);
    ASSERT_EQ(j.skipped.size(), 1u);
    EXPECT_EQ(j.skipped[0].index, 0);
    EXPECT_EQ(j.final_status.at(0), Verdict::Success);
}

TEST(JudgeTask, AbortsWhenEveryScreenshotSkips) {
    tu::TempDir dir("allskip");
    SubstateGraph graph;
    graph.task_id = "allskip";
    graph.nodes = {{0, NodeKind::Page, "App open", std::nullopt}};

    const std::vector<std::string> images = {"junk one", "junk two"};
    const TraceManifest trace = tu::write_trace(dir.path() / "trace", "allskip", images);

    ModelGateway gateway;
    gateway.register_backend("scripted", std::make_shared<ScriptedBackend>());
    TaskSpec task;
    task.task_id = "allskip";
    task.description = "x";
    EXPECT_THROW(
        judge_task(task, graph, trace, {scripted_cfg(), scripted_cfg()}, gateway), JudgeError);
}

TEST(JudgeTask, EmptyTrajectoryAndInvalidGraphAreRejected) {
    ModelGateway gateway;
    TaskSpec task;
    task.task_id = "t";
    task.description = "d";
    TraceManifest empty_trace;
    empty_trace.task_id = "t";
    empty_trace.provenance = "human";
    EXPECT_THROW(judge_task(task, tu::mrbeast_graph(), empty_trace,
                            {scripted_cfg(), scripted_cfg()}, gateway),
                 JudgeError);

    SubstateGraph bad = tu::mrbeast_graph();
    bad.nodes[2].parent_id = 4;
    EXPECT_THROW(
        judge_task(task, bad, empty_trace, {scripted_cfg(), scripted_cfg()}, gateway),
        ValidationError);
}

TEST(Memory, NoteCapKeepsMostRecentEntries) {
    Memory mem;
    mem.note_cap = 3;
    for (int i = 0; i < 6; ++i) mem.add_note(i, "note " + std::to_string(i));
    ASSERT_EQ(mem.notes.size(), 3u);
    EXPECT_EQ(mem.notes.front().text, "note 3");
    EXPECT_EQ(mem.notes.back().text, "note 5");
}

TEST(JudgementIo, RoundTripsThroughJson) {
    MrBeastFixture fx;
    ModelGateway gateway;
    gateway.register_backend("scripted", fx.backend);
    const TaskJudgement j = judge_task(mrbeast_task(), tu::mrbeast_graph("youtube-001"),
                                       fx.trace, {scripted_cfg(), scripted_cfg()}, gateway);
    EXPECT_EQ(judgement_from_json(judgement_to_json(j)), j);
}

} // namespace
