#include <hpcheck/models.hpp>
#include <hpcheck/obligations.hpp>
#include <hpcheck/parser.hpp>

#include <gtest/gtest.h>

using namespace hpcheck;

namespace {

std::set<std::string> box_names(const Obligation& ob) {
  std::set<std::string> out;
  for (const auto& v : ob.box) out.insert(v.name.name());
  return out;
}

Rational q(long n, long d = 1) { return make_rational(n, d); }

}  // namespace

TEST(Obligations, LoopBranches) {
  Model m = builtin("m2");
  Formula zeta = *m.invariant("zeta1");
  auto obs = loop_obligations(m, zeta);
  ASSERT_EQ(obs.size(), 3u);
  for (const auto& ob : obs) EXPECT_EQ(ob.kind, ObligationKind::FalsifyUniversal);
  EXPECT_TRUE(obs[0].matrix == f_implies(m.init, zeta));
  EXPECT_TRUE(obs[1].matrix == f_implies(zeta, box(m.loop_body(), zeta)));
  EXPECT_TRUE(obs[2].matrix == f_implies(zeta, zeta));
  EXPECT_TRUE(obs[1].matrix == gamma_obligation(m, zeta).matrix);
}

TEST(Obligations, ClosureQuantifiesReadVariablesOnly) {
  Model m = builtin("m2");
  Obligation ob = gamma_obligation(m, *m.invariant("zeta1"));
  EXPECT_EQ(box_names(ob), (std::set<std::string>{"v", "x", "xc"}));
  auto* x = ob.search_var("x");
  ASSERT_NE(x, nullptr);
  EXPECT_EQ(x->lo, q(-1));
  EXPECT_EQ(x->hi, q(5));
  // Prefix is universal over the box, in order.
  const Formula* f = &ob.formula;
  for (const auto& v : ob.box) {
    auto* all = std::get_if<fml::Forall>(&f->node().v);
    ASSERT_NE(all, nullptr);
    EXPECT_EQ(all->var, v.name);
    f = &all->body;
  }
  EXPECT_TRUE(*f == ob.matrix);
  EXPECT_EQ(ob.constants.size(), 4u);
}

TEST(Obligations, ConstantsCanBeSearched) {
  Model m = builtin("m2");
  ObligationOptions opt;
  opt.search_constants = true;
  Obligation ob = gamma_obligation(m, *m.invariant("zeta1"), opt);
  EXPECT_TRUE(ob.constants.empty());
  EXPECT_TRUE(box_names(ob).count("anmin"));
  EXPECT_NE(std::get_if<fml::Implies>(&ob.matrix.node().v), nullptr);
}

TEST(Obligations, BoxOverridesAndSteps) {
  Model m = builtin("m2");
  ObligationOptions opt;
  opt.boxes[Symbol("x")] = {q(0), q(1)};
  opt.steps[Symbol("x")] = q(1, 4);
  Obligation ob = rho_obligation(m, *m.invariant("zeta1"), opt);
  auto* x = ob.search_var("x");
  ASSERT_NE(x, nullptr);
  EXPECT_EQ(x->hi, q(1));
  EXPECT_EQ(x->lattice_points(), 5u);
  opt.steps[Symbol("x")] = q(3, 10);
  Obligation bad = rho_obligation(m, *m.invariant("zeta1"), opt);
  EXPECT_THROW(bad.search_var("x")->lattice_points(), std::invalid_argument);
}

TEST(Obligations, RhoShape) {
  Model m = builtin("m2");
  Formula zeta = *m.invariant("zeta1");
  Obligation ob = rho_obligation(m, zeta);
  EXPECT_EQ(ob.kind, ObligationKind::FalsifyUniversal);
  Formula expected = f_implies(f_and(zeta, m.relation->formula),
                               diamond(m.env, compare(CmpOp::Eq, var("xc"), var("xcp"))));
  EXPECT_TRUE(ob.matrix == expected);
  EXPECT_TRUE(box_names(ob).count("xcp"));
}

TEST(Obligations, MissingRelationIsAnError) {
  Model m = builtin("m2");
  m.relation.reset();
  EXPECT_THROW(rho_obligation(m, *m.invariant("zeta1")), ObligationError);
  EXPECT_THROW(exploit_witness_formula(m, *m.invariant("zeta1")), ObligationError);
  EXPECT_THROW(friendliness_probe(m), ObligationError);
}

TEST(Obligations, UndeclaredInvariantVariable) {
  Model m = builtin("m2");
  EXPECT_THROW(loop_obligations(m, parse_formula("y <= xc")), ObligationError);
}

TEST(Obligations, ExploitUsesFreshPreviousEnvValue) {
  Model m = builtin("m2");
  Obligation ob = exploit_witness_formula(m, *m.invariant("zeta1"));
  EXPECT_EQ(ob.kind, ObligationKind::FindWitness);
  auto names = box_names(ob);
  EXPECT_TRUE(names.count("xc"));
  EXPECT_EQ(names.size(), 4u);  // x, v, xc and the fresh copy of xc
  for (const auto& v : ob.box)
    if (!m.is_declared(v.name)) {
      EXPECT_EQ(v.lo, q(-1));
      EXPECT_EQ(v.hi, q(10));
    }
}

TEST(Obligations, ChiAndItsNegation) {
  Model m = builtin("m3");
  Formula zeta = *m.invariant("zeta1");
  auto [chi, not_chi] = chi_obligation(m, zeta);
  EXPECT_EQ(chi.kind, ObligationKind::FalsifyUniversal);
  EXPECT_EQ(not_chi.kind, ObligationKind::FindWitness);
  Program no_ctrl = seq({m.env, m.aux, m.plant});
  EXPECT_TRUE(chi.matrix == f_implies(zeta, box(no_ctrl, zeta)));
  EXPECT_TRUE(not_chi.matrix == f_and(zeta, diamond(no_ctrl, f_not(zeta))));
  EXPECT_NE(std::get_if<fml::Exists>(&not_chi.formula.node().v), nullptr);
}

TEST(Obligations, PsiShape) {
  Model m = builtin("m4");
  Formula general = *m.invariant("zeta_iter");
  Obligation ob = psi_obligation(m, general, "a", -var("anmin"));
  EXPECT_EQ(ob.kind, ObligationKind::FindWitness);
  Formula zeta1 = substitute(general, "a", -var("anmin"));
  Formula expected =
      f_and(zeta1, diamond(seq(m.env, m.aux), f_and(f_not(general), diamond(m.plant, f_not(zeta1)))));
  EXPECT_TRUE(ob.matrix == expected);
  EXPECT_THROW(psi_obligation(m, *m.invariant("zeta1"), "a", num(0)), ObligationError);
}

TEST(Obligations, JsonSummary) {
  Model m = builtin("m2");
  auto j = to_json(rho_obligation(m, *m.invariant("zeta1")));
  EXPECT_EQ(j["name"], "rho");
  EXPECT_EQ(j["kind"], "falsify-universal");
  EXPECT_EQ(j["constants"]["anmin"], "3");
}
