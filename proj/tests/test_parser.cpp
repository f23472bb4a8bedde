#include "ast_gen.hpp"

#include <hpcheck/models.hpp>
#include <hpcheck/parser.hpp>

#include <gtest/gtest.h>

using namespace hpcheck;

TEST(Parser, ComparisonAtom) {
  EXPECT_TRUE(parse_formula("x <= xc") == compare(CmpOp::Le, var("x"), var("xc")));
}

TEST(Parser, BoxOfSequence) {
  Formula expected = box(seq(random_assign("a"), test(f_true())), f_true());
  EXPECT_TRUE(parse_formula("[a := *; ?true] true") == expected);
}

TEST(Parser, ImplicationIsRightAssociative) {
  Formula p = compare(CmpOp::Gt, var("p"), num(0));
  Formula q = compare(CmpOp::Gt, var("q"), num(0));
  Formula r = compare(CmpOp::Gt, var("r"), num(0));
  EXPECT_TRUE(parse_formula("p > 0 -> q > 0 -> r > 0") == f_implies(p, f_implies(q, r)));
}

TEST(Parser, ConnectivePrecedence) {
  Formula a = compare(CmpOp::Gt, var("a"), num(0));
  Formula b = compare(CmpOp::Gt, var("b"), num(0));
  Formula c = compare(CmpOp::Gt, var("c"), num(0));
  Formula d = compare(CmpOp::Gt, var("d"), num(0));
  // ! > & > | > -> > <->
  Formula expected = f_iff(f_implies(f_or(f_and(f_not(a), b), c), d), a);
  EXPECT_TRUE(parse_formula("!a > 0 & b > 0 | c > 0 -> d > 0 <-> a > 0") == expected);
}

TEST(Parser, QuantifierExtendsRight) {
  Formula f = parse_formula("forall y. y >= 0 & y <= 1");
  auto* q = std::get_if<fml::Forall>(&f.node().v);
  ASSERT_NE(q, nullptr);
  EXPECT_NE(std::get_if<fml::And>(&q->body.node().v), nullptr);
}

TEST(Parser, TermPrecedence) {
  Term expected = var("x") + var("v") * var("T") + num(1, 2) * var("a") * pow(var("T"), 2);
  EXPECT_TRUE(parse_term("x + v*T + 0.5*a*T^2") == expected);
}

TEST(Parser, OdeWithDomain) {
  Program p = parse_program("{x' = v, v' = a & v >= 0}");
  auto* o = std::get_if<hp::Ode>(&p.node().v);
  ASSERT_NE(o, nullptr);
  ASSERT_EQ(o->equations.size(), 2u);
  EXPECT_EQ(o->equations[1].var, Symbol("v"));
  EXPECT_TRUE(o->domain == compare(CmpOp::Ge, var("v"), num(0)));
}

TEST(Parser, LoopIsPostfix) {
  Program q = parse_program("{x := x + 1}*");
  EXPECT_NE(std::get_if<hp::Loop>(&q.node().v), nullptr);
}

TEST(Parser, ErrorCarriesSpanInsideInput) {
  std::string text = "x <= \n  (v + ";
  try {
    parse_formula(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.span().line, 2u);
    EXPECT_LE(e.span().start, e.span().end);
    EXPECT_LE(e.span().end, text.size());
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Parser, TrailingInputIsAnError) {
  EXPECT_THROW(parse_formula("x <= 1 1"), ParseError);
  EXPECT_THROW(parse_formula("[x := ] true"), ParseError);
  EXPECT_THROW(parse_program("{x' = 1, x' = 2}"), ParseError);
}

TEST(Parser, ModelErrorsCarrySpans) {
  std::string src(builtin_source("m2"));
  std::string broken = src;
  auto at = broken.find("GUARANTEE");
  ASSERT_NE(at, std::string::npos);
  broken.insert(broken.find('\n', at) + 1, "x <=\n");
  try {
    parse_model(broken);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_LE(e.span().end, broken.size());
    EXPECT_GT(e.span().line, 1u);
  }
}

TEST(Parser, DuplicateSectionRejected) {
  std::string src(builtin_source("m2"));
  auto at = src.find("GUARANTEE");
  std::string dup = src + "\n" + src.substr(at, src.find('\n', src.find('\n', at) + 1) - at) + "\n";
  EXPECT_THROW(parse_model(dup), ParseError);
}

TEST(Parser, PrettyPrintUsesMinimalParentheses) {
  Formula f = box(seq(assign("x", var("x") + num(1)), seq(random_assign("a"), test(f_true()))),
                  compare(CmpOp::Le, var("x"), var("xc")));
  std::string text = pretty_print(f);
  EXPECT_EQ(text.find("(("), std::string::npos) << text;
  EXPECT_TRUE(parse_formula(text) == f);
}

TEST(Parser, BuiltinsRoundTrip) {
  for (const auto& id : builtin_ids()) {
    Model m = parse_model(builtin_source(id), id);
    EXPECT_FALSE(m.nonstandard_shape) << id;
    Model again = parse_model(pretty_print(m), id);
    EXPECT_TRUE(again.env == m.env) << id;
    EXPECT_TRUE(again.aux == m.aux) << id;
    EXPECT_TRUE(again.ctrl == m.ctrl) << id;
    EXPECT_TRUE(again.plant == m.plant) << id;
    EXPECT_TRUE(again.init == m.init) << id;
    EXPECT_TRUE(again.guarantee == m.guarantee) << id;
    EXPECT_EQ(pretty_print(again), pretty_print(m)) << id;
  }
}

TEST(Parser, Model3AuxKeepsBothConjuncts) {
  Model m = builtin("m3");
  std::string text = pretty_print(m.aux);
  EXPECT_NE(text.find("anmax"), std::string::npos) << text;
  EXPECT_NE(text.find("&"), std::string::npos) << text;
}

TEST(Parser, GeneratedAstsRoundTrip) {
  std::string first;
  int failed = hpcheck::testing::round_trip_failures(2000, 8, 20240611, &first);
  EXPECT_EQ(failed, 0) << first;
}

TEST(Parser, LeadingZeroDecimalsAreDecimal) {
  EXPECT_TRUE(parse_term("0.75") == num(3, 4));
  EXPECT_TRUE(parse_term("0.09") == num(9, 100));
  EXPECT_TRUE(parse_term("007") == num(7));
}

TEST(Parser, ShadowedBindersKeptVerbatim) {
  Formula f = parse_formula("forall y. y > 0 & exists y. y < 0");
  auto* q = std::get_if<fml::Forall>(&f.node().v);
  ASSERT_NE(q, nullptr);
  auto* conj = std::get_if<fml::And>(&q->body.node().v);
  ASSERT_NE(conj, nullptr);
  auto* inner = std::get_if<fml::Exists>(&conj->rhs.node().v);
  ASSERT_NE(inner, nullptr);
  EXPECT_EQ(inner->var, Symbol("y"));
}

TEST(Parser, DiamondAfterParenthesisedTest) {
  Formula f = parse_formula("<?(x = 1)> x > 0");
  EXPECT_TRUE(f == diamond(test(compare(CmpOp::Eq, var("x"), num(1))), compare(CmpOp::Gt, var("x"), num(0))));
  EXPECT_TRUE(parse_formula("(x + 1) * 2 > 3") ==
              compare(CmpOp::Gt, (var("x") + num(1)) * num(2), num(3)));
}

TEST(Parser, LoopOfAssignmentPrintsBraced) {
  Program p = loop(assign("a", num(3)));
  EXPECT_EQ(pretty_print(p), "{a := 3}*");
  EXPECT_TRUE(parse_program(pretty_print(p)) == p);
}
