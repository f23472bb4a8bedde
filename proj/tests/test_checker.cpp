#include "oracle.hpp"

#include <hpcheck/checker.hpp>
#include <hpcheck/models.hpp>
#include <hpcheck/parser.hpp>

#include <gtest/gtest.h>

using namespace hpcheck;

namespace {

Rational q(long n, long d = 1) { return make_rational(n, d); }

SearchConfig small(std::uint64_t budget = 20000, std::uint64_t seed = 1) {
  SearchConfig cfg;
  cfg.budget = budget;
  cfg.seed = seed;
  return cfg;
}

std::string dump(const Verdict& v) { return to_json(v).dump(); }

}  // namespace

TEST(Checker, Fig2RhoCounterexampleCertifiesExactly) {
  Model m = builtin("m2");
  Obligation ob = rho_obligation(m, *m.invariant("zeta1"));
  Counterexample cex;
  cex.assignment = {{Symbol("x"), q(9, 10)}, {Symbol("v"), q(9, 5)}, {Symbol("xc"), q(1)}, {Symbol("xcp"), q(1)}};
  CertifyResult r = certify(ob, cex);
  EXPECT_TRUE(r.ok) << r.failure;
  EXPECT_TRUE(r.exact);
  EXPECT_FALSE(cex.decisive_value);

  // Far from the obstacle the env can keep xc.
  Counterexample far = cex;
  far.assignment[0].second = q(0);
  far.assignment[1].second = q(0);
  EXPECT_FALSE(certify(ob, far).ok);
}

TEST(Checker, RhoFalsifiedForModel2Zeta1) {
  Model m = builtin("m2");
  Verdict v = check(rho_obligation(m, *m.invariant("zeta1")), small());
  ASSERT_EQ(v.verdict, VerdictKind::Falsified);
  ASSERT_TRUE(v.certificate);
  EXPECT_TRUE(v.certificate->exact);
}

TEST(Checker, LoopBranchFalsifiedForModel2Zeta2) {
  Model m = builtin("m2");
  Obligation ob = loop_obligations(m, *m.invariant("zeta2"))[1];
  Verdict v = check(ob, small());
  ASSERT_EQ(v.verdict, VerdictKind::Falsified);
  Counterexample cex = *v.certificate;
  EXPECT_TRUE(certify(ob, cex).ok);

  // Flip every branch decision: the if-statement's other arm aborts.
  bool flipped = false;
  for (auto& [idx, script] : cex.scripts)
    for (auto& d : script)
      if (auto* b = std::get_if<decision::Branch>(&d)) {
        b->side = b->side == Side::Left ? Side::Right : Side::Left;
        flipped = true;
      }
  ASSERT_TRUE(flipped);
  EXPECT_FALSE(certify(ob, cex).ok);
}

TEST(Checker, TruncatedScriptFailsCertification) {
  Model m = builtin("m2");
  Obligation ob = chi_obligation(m, *m.invariant("zeta1")).not_chi;
  Verdict v = check(ob, small());
  ASSERT_EQ(v.verdict, VerdictKind::WitnessFound);
  Counterexample cex = *v.certificate;
  ASSERT_FALSE(cex.scripts.empty());
  cex.scripts.begin()->second.pop_back();
  CertifyResult r = certify(ob, cex);
  EXPECT_FALSE(r.ok);
  EXPECT_FALSE(r.failure.empty());
}

// x' = x^2 has no closed form here, so replay is numeric.
TEST(Checker, NonTemplateOdeIsNumericOnly) {
  Obligation ob;
  ob.name = "blowup";
  ob.kind = ObligationKind::FindWitness;
  ob.box = {SearchVar{Symbol("x"), q(0), q(1)}};
  ob.choices = ob.box;
  ob.matrix = parse_formula("x <= 0.5 & <{x' = x^2 & x <= 10}> x > 0.9");
  ob.formula = make_formula(fml::Exists{Symbol("x"), ob.matrix});

  Counterexample cex;
  cex.assignment = {{Symbol("x"), q(1, 2)}};
  cex.scripts[0] = {decision::Duration{q(1)}};
  CertifyResult r = certify(ob, cex);
  EXPECT_TRUE(r.ok) << r.failure;
  EXPECT_FALSE(r.exact);

  Verdict v = check(ob, small(5000));
  ASSERT_EQ(v.verdict, VerdictKind::WitnessFound);
  EXPECT_FALSE(v.certificate->exact);
}

TEST(Checker, TrueMatrixIsNotFalsified) {
  Obligation ob;
  ob.name = "trivial";
  ob.box = {SearchVar{Symbol("x"), q(-1), q(1)}};
  ob.matrix = f_true();
  ob.formula = make_formula(fml::Forall{Symbol("x"), ob.matrix});
  Verdict v = check(ob, small(3000));
  EXPECT_EQ(v.verdict, VerdictKind::NotFalsified);
  EXPECT_FALSE(v.found());
  EXPECT_GT(v.stats.evaluations, 0u);
  EXPECT_LE(v.stats.evaluations, 3000u);
}

TEST(Checker, FalseInvariantHasNoExploitWitness) {
  Model m = builtin("m2");
  Verdict v = check(exploit_witness_formula(m, f_false()), small(2000));
  EXPECT_EQ(v.verdict, VerdictKind::NoWitnessFound);
  Verdict w = check(exploit_witness_formula(m, f_true()), small(2000));
  EXPECT_EQ(w.verdict, VerdictKind::NoWitnessFound);
}

TEST(Checker, DeterministicAcrossRunsAndWorkers) {
  Model m = builtin("m2");
  Obligation ob = loop_obligations(m, *m.invariant("zeta2"))[1];
  SearchConfig one = small(20000, 7);
  one.threads = 1;
  SearchConfig three = one;
  three.threads = 3;
  std::string a = dump(check(ob, one));
  EXPECT_EQ(a, dump(check(ob, one)));
  EXPECT_EQ(a, dump(check(ob, three)));

  Model m4 = builtin("m4");
  Obligation held = loop_obligations(m4, *m4.invariant("zeta2"))[1];
  one.budget = three.budget = 5000;
  Verdict v1 = check(held, one);
  EXPECT_EQ(v1.verdict, VerdictKind::NotFalsified);
  EXPECT_EQ(dump(v1), dump(check(held, three)));
}

TEST(Checker, LargerBudgetKeepsFindings) {
  Model m = builtin("m2");
  Obligation ob = rho_obligation(m, *m.invariant("zeta1"));
  for (std::uint64_t budget : {500u, 5000u, 50000u, 200000u})
    EXPECT_EQ(check(ob, small(budget)).verdict, VerdictKind::Falsified) << budget;
}

// A universal obligation and its structural negation must agree: the
// universal is falsified exactly when the negation has a witness.
TEST(Checker, NegationAgrees) {
  Model m = builtin("m2");
  auto [chi, not_chi] = chi_obligation(m, *m.invariant("zeta1"));
  Verdict a = check(chi, small());
  Verdict b = check(not_chi, small());
  EXPECT_EQ(a.verdict, VerdictKind::Falsified);
  EXPECT_EQ(b.verdict, VerdictKind::WitnessFound);
  // The falsifying state of chi is a witness for not-chi with the same schedule.
  Counterexample cex = *a.certificate;
  EXPECT_TRUE(certify(not_chi, cex).ok);
}

TEST(Checker, FindingsRecertify) {
  hpcheck::testing::ObligationGen gen(17);
  int found = 0;
  for (int i = 0; i < 20; ++i) {
    Obligation ob = gen.next();
    Verdict v = check(ob, hpcheck::testing::oracle_config(3));
    if (!v.found()) continue;
    ++found;
    Counterexample cex = *v.certificate;
    EXPECT_TRUE(certify(ob, cex).ok) << pretty_print(ob.formula);
  }
  EXPECT_GT(found, 0);
}

TEST(Checker, AgreesWithBruteForce) {
  auto r = hpcheck::testing::compare_with_oracle(50, 5);
  EXPECT_EQ(r.agreed, r.instances) << r.first_disagreement;
  EXPECT_GT(r.found, 0);
  EXPECT_LT(r.found, r.instances);
}

TEST(Checker, VerdictJson) {
  Model m = builtin("m2");
  Verdict v = check(rho_obligation(m, *m.invariant("zeta1")), small());
  auto j = to_json(v);
  EXPECT_EQ(j["verdict"], "falsified");
  EXPECT_EQ(j["kind"], "falsify-universal");
  EXPECT_TRUE(j.contains("certificate"));
  EXPECT_TRUE(j["certificate"]["exact"].get<bool>());
  EXPECT_EQ(j["certificate"]["assignment"].size(), 4u);
  EXPECT_NE(describe(v).find("decisive"), std::string::npos);
}
