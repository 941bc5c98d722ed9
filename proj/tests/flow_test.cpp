#include <gtest/gtest.h>

#include <json.hpp>

#include "oracles.hpp"
#include "support.hpp"
#include "ubx/flow.hpp"
#include "ubx/generator.hpp"

using namespace ubx;

namespace {

struct Analyzed {
  TypedProgram tp;
  FlowResult fr;
};

Analyzed analyzeSource(const std::string& src) {
  TypedProgram tp = typecheckSource(src);
  FlowResult fr = analyze(tp);
  return {std::move(tp), std::move(fr)};
}

}  // namespace

TEST(Analyze, BoxReachesUnboxThroughParameter) {
  // (app #0 (lam #1 (x #2 : (box #3 int)) (unbox #4 x#5)) (box #6 3#7))
  Analyzed a = analyzeSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  EXPECT_EQ(a.fr.binderOf(2), (LabelSet{6}));
  EXPECT_EQ(a.fr.cacheOf(5), (LabelSet{6}));
  EXPECT_EQ(a.fr.typePosOf(3), (LabelSet{6}));
  EXPECT_EQ(a.fr.cacheOf(4), (LabelSet{7}));
  EXPECT_EQ(a.fr.cacheOf(0), (LabelSet{7}));
  EXPECT_TRUE(flowsTo(a.fr, a.tp, 6, 4));
  EXPECT_TRUE(flowsTo(a.fr, a.tp, 6, 3));
  EXPECT_TRUE(flowsTo(a.fr, a.tp, 6, 2));
}

TEST(Analyze, MonovariantMergesCallSites) {
  Analyzed a = analyzeSource(
      "(let (get (lam (b : (box int)) (unbox b)))"
      "  (prim - (app get (box 9)) (app get (box 4))))");
  auto ops = a.tp.program.labelsOfKind(LabelKind::BoxOp);
  LabelSet boxes(ops.begin(), ops.end());
  ASSERT_EQ(boxes.size(), 2u);
  LabelId param = a.tp.program.root()->kid(0).binder;
  EXPECT_EQ(a.fr.binderOf(param), boxes);
}

TEST(Analyze, TypeVariableSlots) {
  Analyzed a = analyzeSource(
      "(let (id (tylam (a) (lam (x : a) x))) (unbox (app (tyapp id (box int)) (box 7))))");
  auto boxes = a.tp.program.labelsOfKind(LabelKind::BoxOp);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxesAtTypeVariables(a.fr, a.tp), (LabelSet{boxes[0]}));
  EXPECT_EQ(ubxtest::oracleBoxesAtTypeVariables(a.tp, a.fr), (LabelSet{boxes[0]}));
}

TEST(Analyze, BoxInsideTupleDoesNotOccupyTheVariable) {
  Analyzed a = analyzeSource(
      "(let (id (tylam (a) (lam (x : a) x)))"
      "  (proj 1 (app (tyapp id (tuple int (box int))) (tuple 4 (box 9)))))");
  EXPECT_TRUE(boxesAtTypeVariables(a.fr, a.tp).empty());
}

TEST(Analyze, UnknownLabels) {
  Analyzed a = analyzeSource("(unbox (box 5))");
  EXPECT_THROW(flowsTo(a.fr, a.tp, 1, 99), UnknownLabel);
  EXPECT_TRUE(a.fr.cacheOf(99).empty());
}

TEST(Analyze, OrderDoesNotChangeTheSolution) {
  for (const auto& c : ubxtest::allPrograms()) {
    TypedProgram tp = typecheckSource(c.source);
    FlowResult base = analyze(tp);
    for (std::uint64_t seed : {1u, 7u, 12345u}) {
      FlowResult shuffled = analyze(tp, {seed});
      EXPECT_EQ(base.cache, shuffled.cache) << c.name;
      EXPECT_EQ(base.binderFlow, shuffled.binderFlow) << c.name;
      EXPECT_EQ(base.typePosFlow, shuffled.typePosFlow) << c.name;
    }
  }
}

TEST(Acceptability, AnalysisResultIsClosed) {
  for (const auto& c : ubxtest::allPrograms()) {
    Analyzed a = analyzeSource(c.source);
    EXPECT_TRUE(checkAcceptability(a.fr, a.tp).empty()) << c.name;
  }
}

TEST(Acceptability, DetectsMissingMember) {
  Analyzed a = analyzeSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  a.fr.binderFlow[2].clear();
  auto v = checkAcceptability(a.fr, a.tp);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v.front().rule, "app-argument");
  EXPECT_EQ(v.front().shape, 6u);
}

TEST(Acceptability, OverApproximationPasses) {
  Analyzed a = analyzeSource("(let (b (box 1)) (unbox b))");
  // Adding a shape everywhere keeps the result closed.
  for (auto& [l, s] : a.fr.cache) s.insert(0);
  for (auto& [l, s] : a.fr.binderFlow) s.insert(0);
  EXPECT_TRUE(checkAcceptability(a.fr, a.tp).empty());
}

TEST(Oracle, RecordsDynamicFlows) {
  Analyzed a = analyzeSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  DynamicFlows d = collectingOracle(a.tp);
  EXPECT_EQ(d.boxToUnbox, (std::set<std::pair<LabelId, LabelId>>{{6, 4}}));
  EXPECT_EQ(d.boxToTypePos, (std::set<std::pair<LabelId, LabelId>>{{6, 3}}));
  EXPECT_EQ(d.observedShapes.at(2), (LabelSet{6}));
}

TEST(Oracle, FunctionTypedParameterPositions) {
  Analyzed a = analyzeSource(
      "(let (apply (lam (f : (-> (box int) int)) (app f (box 41))))"
      "  (app apply (lam (y : (box int)) (prim + (unbox y) 1))))");
  DynamicFlows d = collectingOracle(a.tp);
  // The domain position of f's annotation sees box 41.
  bool found = false;
  for (const auto& [b, pos] : d.boxToTypePos) {
    found |= a.tp.program.info(pos).path == std::vector<int>{1};
  }
  EXPECT_TRUE(found);
  EXPECT_TRUE(soundnessGaps(d, a.fr, a.tp).empty());
}

TEST(Oracle, SoundOnCorpus) {
  for (const auto& c : ubxtest::allPrograms()) {
    Analyzed a = analyzeSource(c.source);
    DynamicFlows d = collectingOracle(a.tp);
    EXPECT_TRUE(soundnessGaps(d, a.fr, a.tp).empty()) << c.name;
  }
}

TEST(Oracle, GapsAreReportedForAnUnderApproximation) {
  Analyzed a = analyzeSource("(app (lam (x : (box int)) (unbox x)) (box 3))");
  DynamicFlows d = collectingOracle(a.tp);
  a.fr.cache[5].clear();
  EXPECT_FALSE(soundnessGaps(d, a.fr, a.tp).empty());
}

TEST(Oracle, OutOfFuelIsAnError) {
  Analyzed a = analyzeSource("(prim + (prim + 1 2) (prim + 3 4))");
  EXPECT_THROW(collectingOracle(a.tp, 2), Error);
}

TEST(Oracle, SoundOnGeneratedPrograms) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    GenConfig cfg;
    cfg.seed = seed;
    TypedProgram tp = generate(cfg);
    FlowResult fr = analyze(tp);
    auto gaps = soundnessGaps(collectingOracle(tp), fr, tp);
    EXPECT_TRUE(gaps.empty()) << "seed " << seed << ": " << (gaps.empty() ? "" : gaps.front());
  }
}

TEST(FlowJson, Sections) {
  Analyzed a = analyzeSource("(unbox (box 5))");
  auto j = nlohmann::json::parse(flowToJson(a.fr));
  EXPECT_TRUE(j.contains("cache"));
  EXPECT_TRUE(j.contains("binderFlow"));
  EXPECT_TRUE(j.contains("typePosFlow"));
  EXPECT_EQ(j["cache"]["0"], nlohmann::json::array({2}));
  EXPECT_EQ(j["cache"]["1"], nlohmann::json::array({1}));
}
