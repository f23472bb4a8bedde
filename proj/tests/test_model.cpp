#include <hpcheck/models.hpp>
#include <hpcheck/parser.hpp>

#include <gtest/gtest.h>

using namespace hpcheck;

namespace {

std::string replace(std::string text, const std::string& from, const std::string& to) {
  auto at = text.find(from);
  EXPECT_NE(at, std::string::npos) << from;
  if (at != std::string::npos) text.replace(at, from.size(), to);
  return text;
}

std::string m2_text() { return std::string(builtin_source("m2")); }

Rational q(long n, long d = 1) { return make_rational(n, d); }

}  // namespace

TEST(Models, BuiltinsHaveStandardShape) {
  for (const auto& id : builtin_ids()) {
    Model m = builtin(id);
    EXPECT_FALSE(m.nonstandard_shape) << id;
    EXPECT_EQ(m.env_var, Symbol("xc")) << id;
    EXPECT_EQ(m.action_var, Symbol("a")) << id;
    EXPECT_EQ(m.clock, Symbol("tau")) << id;
    EXPECT_TRUE(m.relation.has_value()) << id;
    for (const char* inv : {"zeta1", "zeta2", "zeta_iter"}) EXPECT_NE(m.invariant(inv), nullptr) << id << inv;
  }
  EXPECT_THROW(builtin("m9"), std::invalid_argument);
}

TEST(Models, ConstantSamples) {
  Model m = builtin("m2");
  State<Rational> c = m.constant_state();
  EXPECT_EQ(c.get("T"), q(1));
  EXPECT_EQ(c.get("anmax"), q(2));
  EXPECT_EQ(c.get("anmin"), q(3));
  EXPECT_EQ(c.get("asmin"), q(4));
}

// Hand-built ASTs for model 2.
TEST(Models, Model2GoldenAst) {
  Model m = builtin("m2");
  Term x = var("x"), v = var("v"), xc = var("xc"), a = var("a"), T = var("T");
  Term anmin = var("anmin"), anmax = var("anmax"), asmin = var("asmin");
  Formula env_test = compare(CmpOp::Ge, xc - x, pow(v, 2) / (num(2) * anmin));
  EXPECT_TRUE(m.env == seq(random_assign("xc"), test(env_test)));
  EXPECT_TRUE(*m.env_test == env_test);

  Formula aux_test = f_and(compare(CmpOp::Le, -anmin, a), compare(CmpOp::Le, a, anmax));
  EXPECT_TRUE(m.aux == seq(random_assign("a"), test(aux_test)));

  Formula safe = compare(CmpOp::Ge, xc - x, v * T + anmax * pow(T, 2) / num(2));
  Program brake = seq(random_assign("a"), test(compare(CmpOp::Eq, a, -asmin)));
  EXPECT_TRUE(m.ctrl == desugar_if(f_not(safe), brake));
  EXPECT_TRUE(*m.safe == safe);

  Formula domain = f_and(compare(CmpOp::Ge, v, num(0)), compare(CmpOp::Le, var("tau"), T));
  Program flow = ode({{Symbol("x"), v}, {Symbol("v"), a}, {Symbol("tau"), num(1)}}, domain);
  EXPECT_TRUE(m.plant == seq(assign("tau", num(0)), flow));
  EXPECT_TRUE(m.guarantee == compare(CmpOp::Le, x, xc));
}

TEST(Models, ModelsDifferOnlyWhereIntended) {
  Model m2 = builtin("m2"), m3 = builtin("m3"), m4 = builtin("m4");
  EXPECT_FALSE(m3.aux == m2.aux);
  EXPECT_TRUE(m3.env == m2.env && m3.ctrl == m2.ctrl && m3.plant == m2.plant && m3.init == m2.init);
  EXPECT_FALSE(m4.ctrl == m2.ctrl);
  EXPECT_TRUE(m4.env == m2.env && m4.aux == m2.aux && m4.plant == m2.plant && m4.init == m2.init);
}

TEST(Models, Model3RequirementConjuncts) {
  Model m = builtin("m3");
  Term v = var("v"), a = var("a"), T = var("T"), anmin = var("anmin");
  Formula req1 = f_implies(compare(CmpOp::Ge, v + a * T, num(0)),
                           compare(CmpOp::Le, v * T + a * pow(T, 2) / num(2), pow(v, 2) / (num(2) * anmin)));
  Formula req2 = f_implies(compare(CmpOp::Lt, v + a * T, num(0)), compare(CmpOp::Le, a, -anmin));
  std::vector<Formula> parts;
  conjuncts(*m.aux_test, parts);
  EXPECT_NE(std::find(parts.begin(), parts.end(), req1), parts.end());
  EXPECT_NE(std::find(parts.begin(), parts.end(), req2), parts.end());
}

TEST(Models, Model4SafeHasLookahead) {
  Model m = builtin("m4");
  Term x = var("x"), v = var("v"), xc = var("xc"), T = var("T"), anmin = var("anmin"), anmax = var("anmax");
  Formula safe = compare(CmpOp::Ge, xc - x,
                         v * T + anmax * pow(T, 2) / num(2) + pow(v + anmax * T, 2) / (num(2) * anmin));
  EXPECT_TRUE(*m.safe == safe);
}

TEST(Models, Zeta2OnWalkthroughStates) {
  Model m = builtin("m2");
  State<Rational> s = m.constant_state();
  s.set("x", q(0));
  s.set("v", q(0));
  s.set("xc", q(1));
  EXPECT_TRUE(eval_fol(s, *m.invariant("zeta2")));
  s.set("x", q(9, 10));
  s.set("v", q(9, 5));
  EXPECT_FALSE(eval_fol(s, *m.invariant("zeta2")));
  EXPECT_EQ(eval_term(s, parse_term("v^2")), q(81, 25));
  EXPECT_EQ(eval_term(s, parse_term("2 * anmin * (xc - x)")), q(3, 5));
}

TEST(Models, TrivialControllerIsNonstandard) {
  std::string text = m2_text();
  auto start = text.find("CTRL\n");
  auto end = text.find("PLANT");
  text.replace(start, end - start, "CTRL\n?true\n\n");
  Model m = parse_model(text);
  EXPECT_TRUE(m.nonstandard_shape);
  EXPECT_TRUE(m.ctrl == test(f_true()));
}

TEST(Models, UnconstrainedDivisorRejected) {
  std::string text = replace(m2_text(), "T = 1\n", "T = 1\nb = 2\n");
  text = replace(text, "?(-anmin <= a & a <= anmax)", "?(a / b <= 1)");
  try {
    parse_model(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("unconstrained divisor b"), std::string::npos) << e.what();
  }
  // The same divisor is fine once INIT constrains its sign.
  text = replace(text, "T > 0", "T > 0 & b > 0");
  EXPECT_NO_THROW(parse_model(text));
}

TEST(Models, UnknownDomainVariableRejected) {
  std::string text = replace(m2_text(), "x in [-1, 5]", "x in [-1, 5]\nzz in [0, 1]");
  EXPECT_THROW(parse_model(text), ParseError);
}

TEST(Models, Table2SuiteRows) {
  auto rows = table2_suite();
  ASSERT_EQ(rows.size(), 8u);
  const std::optional<bool> expected[] = {true, false, false, true, false, true, false, true};
  const char* models[] = {"m2", "m2", "m2", "m3", "m3", "m4", "m4", "m4"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].row, static_cast<int>(i + 1));
    EXPECT_EQ(rows[i].expected, expected[i]) << i;
    EXPECT_EQ(rows[i].model, models[i]) << i;
  }
  EXPECT_EQ(rows[1].reason, "Invariant not strong enough");
  EXPECT_EQ(rows[3].reason, "Unchallenged controller");
  EXPECT_EQ(rows[2].entry.invariant, "zeta2");
  EXPECT_EQ(rows[7].entry.conjuncts.size(), 2u);
}
