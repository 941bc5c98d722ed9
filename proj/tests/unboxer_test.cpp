#include <gtest/gtest.h>

#include <json.hpp>

#include "oracles.hpp"
#include "support.hpp"
#include "ubx/machine.hpp"
#include "ubx/unboxer.hpp"

using namespace ubx;

namespace {

RemovalSet removalOf(const TypedProgram& tp, std::set<LabelId> nodes) {
  return RemovalSet::of(tp.program, nodes);
}

std::set<std::string> rulesOf(const std::vector<ConsistencyViolation>& v) {
  std::set<std::string> out;
  for (const auto& x : v) out.insert(x.rule);
  return out;
}

bool hasPin(const std::vector<Pin>& pins, LabelId label, PinReason reason) {
  return std::find(pins.begin(), pins.end(), Pin{label, reason}) != pins.end();
}

}  // namespace

TEST(Consistency, RemovingOnlyTheBoxViolatesC1) {
  TypedProgram tp = typecheckSource("(unbox (box 5))");
  FlowResult fr = analyze(tp);
  auto v = consistencyCheck(tp, fr, removalOf(tp, {1}));
  // The unbox is also tied to the box by its operand type.
  EXPECT_EQ(rulesOf(v), (std::set<std::string>{"C1", "C6"}));
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].rule, "C1");
  EXPECT_NE(std::find(v[0].labels.begin(), v[0].labels.end(), 0u), v[0].labels.end());
  EXPECT_NE(v[0].describe().find("#0"), std::string::npos);
}

TEST(Consistency, RemovingOnlyTheUnboxViolatesC2) {
  TypedProgram tp = typecheckSource("(unbox (box 5))");
  auto v = consistencyCheck(tp, analyze(tp), removalOf(tp, {0}));
  EXPECT_EQ(rulesOf(v), (std::set<std::string>{"C2", "C6"}));
}

TEST(Consistency, PairRemovalIsConsistent) {
  TypedProgram tp = typecheckSource("(unbox (box 5))");
  EXPECT_TRUE(consistencyCheck(tp, analyze(tp), removalOf(tp, {0, 1})).empty());
}

TEST(Consistency, TypePositionConditions) {
  TypedProgram tp = typecheckSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  FlowResult fr = analyze(tp);
  EXPECT_TRUE(rulesOf(consistencyCheck(tp, fr, removalOf(tp, {4, 6}))).count("C3"));
  EXPECT_TRUE(rulesOf(consistencyCheck(tp, fr, removalOf(tp, {3}))).count("C4"));
  EXPECT_TRUE(consistencyCheck(tp, fr, removalOf(tp, {3, 4, 6})).empty());
}

TEST(Consistency, PolymorphicBoxViolatesC5) {
  TypedProgram tp = typecheckSource(ubxtest::readFile(ubxtest::corpusDir() + "/id.ubx"));
  FlowResult fr = analyze(tp);
  std::set<LabelId> all;
  for (LabelId l : ubxtest::removableNodes(tp.program)) all.insert(l);
  EXPECT_TRUE(rulesOf(consistencyCheck(tp, fr, removalOf(tp, all))).count("C5"));
}

TEST(Consistency, WrongKindsAreReportedFirst) {
  TypedProgram tp = typecheckSource("(unbox (box 5))");
  RemovalSet rs;
  rs.boxes = {0};  // #0 is the unbox
  auto v = consistencyCheck(tp, analyze(tp), rs);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].rule, "kind");
}

TEST(Consistency, AgreesWithDirectEvaluationOnSmallPrograms) {
  for (const auto& c : ubxtest::allPrograms()) {
    TypedProgram tp = typecheckSource(c.source);
    FlowResult fr = analyze(tp);
    auto nodes = ubxtest::removableNodes(tp.program);
    if (nodes.size() > 8) continue;
    for (std::uint32_t mask = 0; mask < (1u << nodes.size()); ++mask) {
      std::set<LabelId> chosen;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (mask >> i & 1) chosen.insert(nodes[i]);
      }
      auto expected = ubxtest::oracleConsistency(tp, fr, chosen);
      auto actual = rulesOf(consistencyCheck(tp, fr, removalOf(tp, chosen)));
      ASSERT_EQ(actual, expected) << c.name << " mask " << mask;
    }
  }
}

TEST(RemovalSetOf, RejectsNonNodes) {
  TypedProgram tp = typecheckSource("(unbox (box 5))");
  EXPECT_THROW(RemovalSet::of(tp.program, {2}), Error);
}

TEST(Rewrite, ParameterExample) {
  TypedProgram tp = typecheckSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  EXPECT_EQ(metadataOf(tp).binders.at(2), Traceability::Ref);
  TypedProgram out = rewrite(tp, removalOf(tp, {3, 4, 6}));
  EXPECT_TRUE(alphaEqual(*out.program.root(), *parse("(app (lam (x : int) x) 3)")));
  EXPECT_EQ(metadataOf(out).binders.at(2), Traceability::Bits);
  EXPECT_EQ(run(out).observation, "3");
}

TEST(Rewrite, NestedBoxesOuterPairOnly) {
  // (unbox #0 (unbox #1 (box #2 (box #3 1))))
  TypedProgram tp = typecheckSource("(unbox (unbox (box (box 1))))");
  FlowResult fr = analyze(tp);
  RemovalSet rs = removalOf(tp, {1, 2});
  EXPECT_TRUE(consistencyCheck(tp, fr, rs).empty());
  TypedProgram out = rewrite(tp, rs);
  EXPECT_TRUE(alphaEqual(*out.program.root(), *parse("(unbox (box 1))")));
  EXPECT_EQ(run(out).observation, "1");
}

TEST(Rewrite, PreservesLabels) {
  TypedProgram tp = typecheckSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  TypedProgram out = rewrite(tp, removalOf(tp, {3, 4, 6}));
  EXPECT_EQ(printProgram(out.program, true), "(app #0 (lam #1 (x #2 : int) x) 3)");
}

TEST(Rewrite, RejectsIllTypedResult) {
  TypedProgram tp = typecheckSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  RewriteOptions o;
  o.skipTypePosition = 3;
  EXPECT_THROW(rewrite(tp, removalOf(tp, {3, 4, 6}), o), RewriteRejected);
}

TEST(Components, PairsAndOrdering) {
  TypedProgram tp = typecheckSource("(unbox (unbox (box (box 1))))");
  ComponentGraph g = ComponentGraph::build(tp, analyze(tp));
  EXPECT_EQ(g.nodes(), (std::vector<LabelId>{0, 1, 2, 3}));
  EXPECT_EQ(g.components(), (std::vector<std::vector<LabelId>>{{0, 3}, {1, 2}}));
  EXPECT_EQ(g.componentOf(2), 1u);
}

TEST(ChooseRemoval, IdentityAtBoxIsPinned) {
  TypedProgram tp = typecheckSource(ubxtest::readFile(ubxtest::corpusDir() + "/id.ubx"));
  Choice c = chooseRemoval(tp, analyze(tp));
  auto boxes = tp.program.labelsOfKind(LabelKind::BoxOp);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_TRUE(hasPin(c.pins, boxes[0], PinReason::ReachesTypeVariable));
  EXPECT_EQ(c.removal.size(), 0u);
}

TEST(ChooseRemoval, SharedUnboxRetainsBoth) {
  TypedProgram tp = typecheckSource(
      ubxtest::readFile(ubxtest::corpusDir() + "/poly/shared_unbox.ubx"));
  Choice c = chooseRemoval(tp, analyze(tp));
  EXPECT_TRUE(c.removal.boxes.empty());
  EXPECT_TRUE(c.removal.unboxes.empty());
}

TEST(ChooseRemoval, MonomorphicProgramLosesEveryBox) {
  TypedProgram tp = typecheckSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  Choice c = chooseRemoval(tp, analyze(tp));
  EXPECT_TRUE(c.pins.empty());
  EXPECT_EQ(c.removal.all(), (std::set<LabelId>{3, 4, 6}));
}

TEST(ChooseRemoval, KeepDirectivePinsItsComponent) {
  TypedProgram tp = typecheckSource("(let (a (box 1)) (let (b (box 2)) (prim + (unbox a) (unbox b))))");
  FlowResult fr = analyze(tp);
  auto boxes = tp.program.labelsOfKind(LabelKind::BoxOp);
  PinPolicy policy;
  policy.keep = {boxes[0]};
  Choice c = chooseRemoval(tp, fr, policy);
  EXPECT_TRUE(hasPin(c.pins, boxes[0], PinReason::ExplicitKeepDirective));
  EXPECT_EQ(c.removal.boxes, (std::set<LabelId>{boxes[1]}));
}

TEST(ChooseRemoval, BoundaryPinsAndIgnoresNonNodes) {
  TypedProgram tp = typecheckSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  PinPolicy policy;
  policy.boundary = {3, 0};  // #0 is an application, not a node
  Choice c = chooseRemoval(tp, analyze(tp), policy);
  EXPECT_EQ(c.pins, (std::vector<Pin>{{3, PinReason::ModuleBoundary}}));
  EXPECT_EQ(c.removal.size(), 0u);
}

TEST(ChooseRemoval, PinsAreSorted) {
  TypedProgram tp = typecheckSource(ubxtest::readFile(ubxtest::corpusDir() + "/poly/swap.ubx"));
  PinPolicy policy;
  for (LabelId l : ubxtest::removableNodes(tp.program)) policy.keep.insert(l);
  Choice c = chooseRemoval(tp, analyze(tp), policy);
  EXPECT_TRUE(std::is_sorted(c.pins.begin(), c.pins.end(), [](const Pin& a, const Pin& b) {
    return std::pair(a.label, a.reason) < std::pair(b.label, b.reason);
  }));
}

TEST(BruteForce, OnePinnedOneFree) {
  TypedProgram tp = typecheckSource(
      ubxtest::readFile(ubxtest::corpusDir() + "/poly/poly_and_mono.ubx"));
  FlowResult fr = analyze(tp);
  auto maximal = bruteForceMaximal(tp, fr);
  ASSERT_EQ(maximal.size(), 1u);
  Choice c = chooseRemoval(tp, fr);
  EXPECT_EQ(maximal[0], c.removal);
  EXPECT_EQ(c.removal.boxes.size(), 1u);
}

TEST(BruteForce, TooLarge) {
  TypedProgram tp = typecheckSource(ubxtest::readFile(ubxtest::corpusDir() + "/mono/compose.ubx"));
  EXPECT_THROW(bruteForceMaximal(tp, analyze(tp), {}, 2), TooLarge);
}

TEST(BruteForce, MatchesChoiceOnSmallCorpusPrograms) {
  std::size_t checked = 0;
  for (const auto& c : ubxtest::allPrograms()) {
    TypedProgram tp = typecheckSource(c.source);
    FlowResult fr = analyze(tp);
    if (ubxtest::removableNodes(tp.program).size() > 10) continue;
    auto maximal = bruteForceMaximal(tp, fr);
    ASSERT_EQ(maximal.size(), 1u) << c.name;
    EXPECT_EQ(maximal[0], chooseRemoval(tp, fr).removal) << c.name;
    ++checked;
  }
  EXPECT_GE(checked, 10u);
}

TEST(Optimize, ReportJson) {
  TypedProgram tp = typecheckSource(ubxtest::readFile(ubxtest::corpusDir() + "/mono.ubx"));
  Optimized o = optimize(tp);
  auto j = nlohmann::json::parse(o.report.toJson());
  EXPECT_EQ(j["boxesTotal"], j["boxesRemoved"]);
  EXPECT_GT(j["boxesTotal"].get<int>(), 0);
  EXPECT_TRUE(j["pins"].empty());
  EXPECT_TRUE(j.contains("components"));
  EXPECT_TRUE(j["removed"].contains("typePositions"));
}

TEST(Optimize, IsIdempotent) {
  for (const auto& c : ubxtest::allPrograms()) {
    Optimized once = optimize(typecheckSource(c.source));
    Optimized twice = optimize(once.program);
    EXPECT_EQ(twice.report.boxesRemoved, 0u) << c.name;
  }
}

TEST(Optimize, PreservesOutcomeOnCorpus) {
  for (const auto& c : ubxtest::allPrograms()) {
    TypedProgram tp = typecheckSource(c.source);
    Optimized o = optimize(tp);
    EXPECT_TRUE(run(tp).sameAs(run(o.program))) << c.name;
    EXPECT_EQ(printType(*tp.resultType), printType(*o.program.resultType)) << c.name;
  }
}
