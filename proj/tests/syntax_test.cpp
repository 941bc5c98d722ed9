#include <gtest/gtest.h>

#include "support.hpp"
#include "ubx/syntax.hpp"

using namespace ubx;

TEST(Parse, IntegerLiteral) {
  TermPtr t = parse("42");
  EXPECT_EQ(t->kind, TermKind::IntLit);
  EXPECT_EQ(t->intValue, 42);
}

TEST(Parse, NegativeAndExtremeIntegers) {
  EXPECT_EQ(parse("-7")->intValue, -7);
  EXPECT_EQ(parse("9223372036854775807")->intValue, INT64_MAX);
  EXPECT_EQ(parse("-9223372036854775808")->intValue, INT64_MIN);
}

TEST(Parse, FloatLiteral) {
  TermPtr t = parse("2.5");
  EXPECT_EQ(t->kind, TermKind::FloatLit);
  EXPECT_DOUBLE_EQ(t->floatValue, 2.5);
}

TEST(Parse, AllForms) {
  TermPtr t = parse(
      "(let (f (tylam (a) (lam (x : a) x)))"
      "  (ifz 0 (prim + (proj 1 (tuple 1 2)) (unbox (box 3)))"
      "         (app (tyapp f (box int)) (box 4))))");
  EXPECT_EQ(t->kind, TermKind::Let);
  EXPECT_EQ(t->kid(0).kind, TermKind::TyLam);
  EXPECT_EQ(t->kid(1).kind, TermKind::Ifz);
}

TEST(Parse, LambdaAnnotation) {
  TermPtr t = parse("(lam (x : (-> (box int) (tuple int float))) 0)");
  ASSERT_EQ(t->kind, TermKind::Lam);
  EXPECT_EQ(printType(*t->type), "(-> (box int) (tuple int float))");
}

TEST(Parse, CommentsAndWhitespace) {
  TermPtr t = parse("; leading comment\n(prim +\n  1 ; inline\n  2)\n");
  EXPECT_EQ(t->kind, TermKind::Prim);
}

TEST(ParseError, UnbalancedParenReportsPosition) {
  try {
    parse("(prim + 1\n  2");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.code(), "parse");
    EXPECT_GE(e.line(), 1);
    EXPECT_FALSE(e.expected().empty());
  }
}

TEST(ParseError, TrailingInput) {
  EXPECT_THROW(parse("1 2"), ParseError);
}

TEST(ParseError, UnknownForm) {
  EXPECT_THROW(parse("(frobnicate 1)"), ParseError);
}

TEST(ParseError, BadProjectionIndex) {
  EXPECT_THROW(parse("(proj 0 (tuple 1 2))"), ParseError);
}

TEST(ParseError, UnboundVariable) {
  try {
    parse("(lam (x : int) y)");
    FAIL() << "expected UnboundVariable";
  } catch (const UnboundVariable& e) {
    EXPECT_EQ(e.name(), "y");
  }
}

TEST(ParseError, UnboundTypeVariable) {
  EXPECT_THROW(parse("(lam (x : a) x)"), ParseError);
}

TEST(ParseOpen, AllowsListedFreeNames) {
  TermPtr t = parseOpen("(prim + one two)", {"one", "two"});
  EXPECT_EQ(freeVars(*t), (std::set<std::string>{"one", "two"}));
  EXPECT_THROW(parseOpen("three", {"one"}), UnboundVariable);
}

TEST(Uniquify, ShadowedBindersGetDistinctNames) {
  TermPtr t = parse("(let (x 1) (let (x 2) x))");
  EXPECT_NE(t->name, t->kid(1).name);
  // The inner use refers to the inner binder.
  EXPECT_EQ(t->kid(1).kid(1).name, t->kid(1).name);
}

TEST(Uniquify, PreservesMeaning) {
  TermPtr original = parse("(let (x 1) (let (y (lam (x : int) x)) (app y x)))");
  TermPtr again = uniquifyBinders(original);
  EXPECT_TRUE(alphaEqual(*original, *again));
}

TEST(Print, RoundTripsThroughParse) {
  const char* programs[] = {
      "(app (lam (x : (box int)) (unbox x)) (box 3))",
      "(let (id (tylam (a) (lam (x : a) x))) (unbox (app (tyapp id (box int)) (box 7))))",
      "(proj 2 (tuple 1 2.5 (box 3)))",
      "(ifz (prim - 1 1) (prim *. 1.5 2.0) 0.25)",
  };
  for (const char* src : programs) {
    TermPtr t = parse(src);
    TermPtr back = parse(printTerm(*t));
    EXPECT_TRUE(alphaEqual(*t, *back)) << src;
  }
}

TEST(Print, CorpusRoundTrips) {
  for (const auto& c : ubxtest::allPrograms()) {
    TermPtr t = parse(c.source);
    EXPECT_TRUE(alphaEqual(*t, *parse(printTerm(*t)))) << c.name;
  }
}

TEST(FormatFloat, AlwaysLooksLikeAFloat) {
  EXPECT_EQ(formatFloat(5.0), "5.0");
  EXPECT_EQ(formatFloat(0.75), "0.75");
  EXPECT_EQ(formatFloat(-1.5), "-1.5");
  EXPECT_EQ(std::stod(formatFloat(0.1)), 0.1);
}

TEST(Types, EqualityIsUpToBinderRenaming) {
  EXPECT_TRUE(typeEqual(*parseType("(forall (a) (-> a a))"), *parseType("(forall (b) (-> b b))")));
  EXPECT_FALSE(typeEqual(*parseType("(box int)"), *parseType("int")));
  EXPECT_FALSE(typeEqual(*parseType("(tuple int int)"), *parseType("(tuple int int int)")));
}

TEST(Types, SubstitutionAvoidsCapture) {
  TypePtr t = Type::forall("b", Type::arrow(Type::var("a"), Type::var("b")));
  TypePtr s = substitute(t, "a", Type::var("b"));
  // The free b must not be captured by the binder.
  EXPECT_EQ(freeTypeVars(*s), (std::set<std::string>{"b"}));
}

TEST(Labels, PreorderNumbering) {
  LabeledProgram p = assignLabels(parse("(app (lam (x : (box int)) (unbox x)) (box 3))"));
  EXPECT_EQ(p.kind(0), LabelKind::Use);
  EXPECT_EQ(p.kind(1), LabelKind::Lambda);
  EXPECT_EQ(p.kind(2), LabelKind::Binder);
  EXPECT_EQ(p.kind(3), LabelKind::TypePos);
  EXPECT_EQ(p.kind(4), LabelKind::UnboxOp);
  EXPECT_EQ(p.kind(5), LabelKind::Use);
  EXPECT_EQ(p.kind(6), LabelKind::BoxOp);
  EXPECT_EQ(p.kind(7), LabelKind::Literal);
  EXPECT_EQ(p.info(3).owner, 2u);
  EXPECT_TRUE(p.info(3).path.empty());
}

TEST(Labels, PrintedForm) {
  LabeledProgram p = assignLabels(parse("(app (lam (x : (box int)) (unbox x)) (box 3))"));
  EXPECT_EQ(printProgram(p, true),
            "(app #0 (lam #1 (x #2 : (box #3 int)) (unbox #4 x)) (box #6 3))");
}

TEST(Labels, NestedTypePositionPaths) {
  LabeledProgram p = assignLabels(parse("(lam (f : (-> (box int) (tuple int (box (box float))))) 0)"));
  std::vector<std::vector<int>> paths;
  for (LabelId pos : p.labelsOfKind(LabelKind::TypePos)) paths.push_back(p.info(pos).path);
  EXPECT_EQ(paths, (std::vector<std::vector<int>>{{1}, {2, 2}, {2, 2, 0}}));
}

TEST(Labels, RelabelingIsIdempotent) {
  TermPtr t = parse("(let (b (box 1)) (unbox b))");
  LabeledProgram a = assignLabels(t);
  LabeledProgram b = assignLabels(a.root());
  EXPECT_EQ(printProgram(a, true), printProgram(b, true));
}

TEST(Labels, IndexKeepsExistingLabels) {
  LabeledProgram a = assignLabels(parse("(unbox (box 5))"));
  LabeledProgram b = LabeledProgram::index(a.root());
  EXPECT_EQ(printProgram(a, true), printProgram(b, true));
}

TEST(Labels, UnknownLabelThrows) {
  LabeledProgram p = assignLabels(parse("1"));
  EXPECT_FALSE(p.hasLabel(5));
  EXPECT_THROW(p.info(5), LabeledError);
}
