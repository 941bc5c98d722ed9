#include <gtest/gtest.h>

#include "support.hpp"
#include "ubx/machine.hpp"
#include "ubx/modules.hpp"

using namespace ubx;

namespace {

const char* kOne = "(module one (def (one (box 1))) (export (one (box int))))";

TermPtr mainTerm(const std::string& src, const std::vector<ModuleUnit>& units) {
  std::set<std::string> names;
  for (const auto& u : units) {
    for (const auto& [n, t] : u.exports) names.insert(n);
  }
  return parseOpen(src, names);
}

std::string runLinked(const std::vector<ModuleUnit>& units, const std::string& main,
                      const std::map<std::string, InterfaceDescriptor>& d = {}) {
  Outcome out = run(linkUnits(units, mainTerm(main, units), d));
  EXPECT_EQ(out.kind, Outcome::Kind::Final);
  return out.observation;
}

}  // namespace

TEST(ParseModule, ProviderOfABox) {
  ModuleUnit u = parseModule(kOne);
  EXPECT_EQ(u.name, "one");
  ASSERT_EQ(u.definitions.size(), 1u);
  ASSERT_NE(u.exportType("one"), nullptr);
  EXPECT_EQ(printType(**u.exportType("one")), "(box int)");
  EXPECT_EQ(u.exportType("two"), nullptr);
}

TEST(ParseModule, UndefinedExport) {
  EXPECT_THROW(parseModule("(module m (def (a 1)) (export (b int)))"), UndefinedExport);
}

TEST(ParseModule, ImportDefinitionCollision) {
  EXPECT_THROW(parseModule("(module m (import (a int)) (def (a 1)) (export (a int)))"),
               DuplicateName);
  EXPECT_THROW(parseModule("(module m (def (a 1)) (def (a 2)))"), DuplicateName);
}

TEST(ParseModule, DefinitionsSeeEarlierNames) {
  ModuleUnit u = parseModule("(module m (import (x int)) (def (y (prim + x 1))) (def (z (prim + x y))))");
  EXPECT_EQ(u.definitions.size(), 2u);
  EXPECT_THROW(parseModule("(module m (def (y z)) (def (z 1)))"), ParseError);
}

TEST(ParseModule, ClauseOrderAndSyntax) {
  EXPECT_THROW(parseModule("(module m (export (a int)) (def (a 1)))"), ParseError);
  EXPECT_THROW(parseModule("(mod m)"), ParseError);
  EXPECT_THROW(parseModule("(module (def (a 1)))"), ParseError);
}

TEST(ParseModule, PrintRoundTrip) {
  for (const char* name : {"counter", "pairs", "poly", "user"}) {
    ModuleUnit u = ubxtest::loadModule(name);
    ModuleUnit back = parseModule(printModule(u));
    EXPECT_EQ(printModule(back), printModule(u)) << name;
  }
}

TEST(TypecheckModule, ExportTypesAreChecked) {
  EXPECT_NO_THROW(typecheckModule(parseModule(kOne)));
  EXPECT_THROW(typecheckModule(parseModule("(module m (def (a 1)) (export (a (box int))))")),
               TypeError);
}

TEST(Link, ProviderAndClient) {
  ModuleUnit one = parseModule(kOne);
  EXPECT_EQ(runLinked({one}, "(unbox one)"), "1");
  ModuleUnit user = ubxtest::loadModule("user");
  EXPECT_EQ(runLinked({one, user}, "two"), "2");
}

TEST(Link, ImportTypeMismatch) {
  ModuleUnit one = parseModule(kOne);
  ModuleUnit client = parseModule("(module c (import (one int)) (def (v one)) (export (v int)))");
  try {
    linkUnits({one, client}, mainTerm("v", {one, client}));
    FAIL();
  } catch (const LinkError& e) {
    EXPECT_EQ(e.name(), "one");
    EXPECT_EQ(printType(*e.expected()), "int");
    EXPECT_EQ(printType(*e.found()), "(box int)");
  }
}

TEST(Link, MissingImport) {
  ModuleUnit user = ubxtest::loadModule("user");
  EXPECT_THROW(linkUnits({user}, mainTerm("two", {user})), MissingImport);
}

TEST(Link, MostRecentExportWins) {
  ModuleUnit a = parseModule("(module a (def (v 1)) (export (v int)))");
  ModuleUnit b = parseModule("(module b (def (v 2)) (export (v int)))");
  EXPECT_EQ(runLinked({a, b}, "v"), "2");
}

TEST(Descriptor, JsonRoundTrip) {
  ModuleOptimization opt = optimizeModule(ubxtest::loadModule("counter"), BoundaryMode::Descriptor);
  std::string text = writeDescriptor(opt.descriptor);
  InterfaceDescriptor back = readDescriptor(text);
  EXPECT_EQ(back, opt.descriptor);
  EXPECT_EQ(writeDescriptor(back), text);
}

TEST(Descriptor, MalformedInput) {
  EXPECT_THROW(readDescriptor("{"), Error);
  EXPECT_THROW(readDescriptor("{\"module\": 3}"), Error);
}

TEST(Descriptor, RoundTripLinks) {
  ModuleOptimization opt = optimizeModule(parseModule(kOne), BoundaryMode::Descriptor);
  InterfaceDescriptor d = readDescriptor(writeDescriptor(opt.descriptor));
  ModuleUnit user = ubxtest::loadModule("user");
  EXPECT_EQ(runLinked({opt.unit, user}, "two", {{"one", d}}), "2");
  // Without the descriptor the rewritten interface no longer matches.
  EXPECT_THROW(linkUnits({opt.unit, user}, mainTerm("two", {opt.unit, user})), LinkError);
}

TEST(Descriptor, IsDeterministic) {
  for (const auto& name : ubxtest::standaloneModules()) {
    ModuleUnit u = ubxtest::loadModule(name);
    auto a = optimizeModule(u, BoundaryMode::Descriptor);
    auto b = optimizeModule(u, BoundaryMode::Descriptor);
    EXPECT_EQ(writeDescriptor(a.descriptor), writeDescriptor(b.descriptor)) << name;
    EXPECT_EQ(printModule(a.unit), printModule(b.unit)) << name;
  }
}

TEST(OptimizeModule, PinnedKeepsExportedBox) {
  ModuleOptimization opt = optimizeModule(parseModule(kOne), BoundaryMode::Pinned);
  EXPECT_EQ(printType(**opt.unit.exportType("one")), "(box int)");
  EXPECT_EQ(opt.report.boxesRemoved, 0u);
  for (const auto& d : opt.descriptor.decisions) EXPECT_FALSE(d.removed);
}

TEST(OptimizeModule, DescriptorModeRewritesExport) {
  ModuleOptimization opt = optimizeModule(parseModule(kOne), BoundaryMode::Descriptor);
  EXPECT_EQ(printType(**opt.unit.exportType("one")), "int");
  ASSERT_EQ(opt.descriptor.decisions.size(), 1u);
  EXPECT_EQ(opt.descriptor.decisions[0], (BoundaryDecision{"one", {}, true}));
  EXPECT_EQ(printType(*opt.descriptor.rewrittenTypes.at("one")), "int");
}

TEST(OptimizeModule, NoBoundaryBoxesBothModesAgree) {
  ModuleUnit u = ubxtest::loadModule("internal");
  auto pinned = optimizeModule(u, BoundaryMode::Pinned);
  auto desc = optimizeModule(u, BoundaryMode::Descriptor);
  EXPECT_EQ(printModule(pinned.unit), printModule(desc.unit));
  EXPECT_EQ(pinned.report.boxesRemoved, 1u);
}

TEST(OptimizeModule, PolymorphicExportStaysBoxed) {
  auto opt = optimizeModule(ubxtest::loadModule("poly"), BoundaryMode::Descriptor);
  EXPECT_EQ(printType(**opt.unit.exportType("boxed")), "int");
  EXPECT_EQ(printType(**opt.unit.exportType("id")), "(forall (a) (-> a a))");
  EXPECT_EQ(opt.report.boxesRemoved, 1u);
}

TEST(OptimizeModule, ImportsStayPinnedInBothModes) {
  ModuleUnit user = ubxtest::loadModule("user");
  for (BoundaryMode m : {BoundaryMode::Pinned, BoundaryMode::Descriptor}) {
    auto opt = optimizeModule(user, m);
    EXPECT_EQ(printType(*opt.unit.imports[0].second), "(box int)");
  }
}

TEST(Coercion, RoundTripThroughRemovedBoxes) {
  TypePtr t = parseType("(tuple (box int) (-> (box int) (box int)))");
  RemovedAt all = [](const std::vector<int>&) { return true; };
  // value of the rewritten type (tuple int (-> int int))
  TermPtr v = parse("(tuple 4 (lam (n : int) (prim + n 1)))");
  TermPtr up = coerceUp(t, all, v);
  TermPtr use = Term::prim(PrimOp::Add, Term::unbox(Term::proj(1, Term::var("p"))),
                           Term::unbox(Term::app(Term::proj(2, Term::var("p")),
                                                 Term::box(Term::intLit(10)))));
  TermPtr program = Term::let("p", up, use);
  EXPECT_EQ(run(typecheck(assignLabels(uniquifyBinders(program)))).observation, "15");

  TermPtr down = coerceDown(t, all, parse("(tuple (box 2) (lam (b : (box int)) b))"));
  TermPtr program2 = Term::let(
      "q", down,
      Term::prim(PrimOp::Add, Term::proj(1, Term::var("q")),
                 Term::app(Term::proj(2, Term::var("q")), Term::intLit(5))));
  EXPECT_EQ(run(typecheck(assignLabels(uniquifyBinders(program2)))).observation, "7");
}

TEST(Coercion, NothingRemovedIsIdentity) {
  TypePtr t = parseType("(box int)");
  RemovedAt none = [](const std::vector<int>&) { return false; };
  TermPtr v = parse("(box 1)");
  EXPECT_TRUE(alphaEqual(*coerceUp(t, none, v), *v));
}

TEST(Harness, ZeroTrialsIsVacuous) {
  ModuleUnit u = ubxtest::loadModule("counter");
  HarnessVerdict v = contextualHarness(u, u, std::nullopt, 0, 1);
  EXPECT_TRUE(v.pass);
  EXPECT_EQ(v.trials, 0u);
}

TEST(Harness, BothModesPass) {
  for (const auto& name : ubxtest::standaloneModules()) {
    ModuleUnit u = ubxtest::loadModule(name);
    auto pinned = optimizeModule(u, BoundaryMode::Pinned);
    auto desc = optimizeModule(u, BoundaryMode::Descriptor);
    HarnessVerdict a = contextualHarness(u, pinned.unit, std::nullopt, 25, 3);
    HarnessVerdict b = contextualHarness(u, desc.unit, desc.descriptor, 25, 3);
    EXPECT_TRUE(a.pass) << name << ": " << a.detail;
    EXPECT_TRUE(b.pass) << name << ": " << b.detail;
    EXPECT_EQ(a.trials, 25u);
  }
}

TEST(Harness, WithProviders) {
  ModuleUnit one = parseModule(kOne);
  ModuleUnit user = ubxtest::loadModule("user");
  auto desc = optimizeModule(user, BoundaryMode::Descriptor);
  HarnessVerdict v = contextualHarness(user, desc.unit, desc.descriptor, 20, 5, {one});
  EXPECT_TRUE(v.pass) << v.detail;
}

TEST(Harness, CorruptedModuleIsCaught) {
  ModuleUnit u = ubxtest::loadModule("counter");
  auto desc = optimizeModule(u, BoundaryMode::Descriptor);
  ModuleUnit broken = desc.unit;
  for (auto& [name, def] : broken.definitions) {
    if (name == "start") def = Term::intLit(1);
  }
  HarnessVerdict v = contextualHarness(u, broken, desc.descriptor, 50, 11);
  ASSERT_FALSE(v.pass);
  ASSERT_TRUE(v.firstFailure.has_value());
  EXPECT_FALSE(v.detail.empty());
  // No earlier client tells the two apart.
  EXPECT_TRUE(contextualHarness(u, broken, desc.descriptor, *v.firstFailure, 11).pass);
}

TEST(Harness, IsDeterministic) {
  ModuleUnit u = ubxtest::loadModule("pairs");
  auto desc = optimizeModule(u, BoundaryMode::Descriptor);
  ModuleUnit broken = desc.unit;
  for (auto& [name, def] : broken.definitions) {
    if (name == "mk") def = parse("(lam (x : int) (tuple x x))");
  }
  HarnessVerdict a = contextualHarness(u, broken, desc.descriptor, 40, 2);
  HarnessVerdict b = contextualHarness(u, broken, desc.descriptor, 40, 2);
  EXPECT_EQ(a.pass, b.pass);
  EXPECT_EQ(a.firstFailure, b.firstFailure);
  EXPECT_EQ(a.failureSeed, b.failureSeed);
}
