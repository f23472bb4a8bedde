#include <hpcheck/models.hpp>
#include <hpcheck/parser.hpp>
#include <hpcheck/semantics.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace hpcheck;

namespace {

State<Rational> rstate(std::initializer_list<std::pair<const char*, Rational>> values) {
  State<Rational> s;
  for (const auto& [n, v] : values) s.set(Symbol(n), v);
  return s;
}

Rational q(long n, long d = 1) { return make_rational(n, d); }

const hp::Ode& plant_ode(const Model& m) {
  const Program* p = &m.plant;
  while (auto* s = std::get_if<hp::Seq>(&p->node().v)) p = &s->second;
  return std::get<hp::Ode>(p->node().v);
}

State<Rational> omega0(const Model& m) {
  State<Rational> s = m.constant_state();
  s.set("x", q(0));
  s.set("v", q(0));
  s.set("xc", q(1));
  s.set("a", q(9, 5));
  s.set("tau", q(0));
  return s;
}

}  // namespace

TEST(Semantics, BrakingDistanceIsExact) {
  auto s = rstate({{"v", q(9, 5)}, {"anmin", q(3)}});
  EXPECT_EQ(eval_term(s, parse_term("v^2 / (2 * anmin)")), q(27, 50));
}

TEST(Semantics, ConstantAndZeroTerms) {
  EXPECT_EQ(eval_term(State<Rational>{}, num(7, 2)), q(7, 2));
  EXPECT_EQ(eval_term(rstate({{"x", q(0)}, {"v", q(0)}, {"T", q(1)}}), parse_term("x + v*T")), q(0));
}

TEST(Semantics, UndeclaredVariableIsAnError) {
  EXPECT_THROW(eval_term(State<Rational>{}, var("nope")), EvalError);
  EXPECT_THROW(eval_fol(State<Rational>{}, parse_formula("forall y. y > 0")), EvalError);
  EXPECT_THROW(eval_term(rstate({{"x", q(0)}}), parse_term("1 / x")), EvalError);
}

TEST(Semantics, SafeAndEnvTestsOnWalkthroughStates) {
  Model m = builtin("m2");
  State<Rational> w0 = omega0(m);
  ASSERT_TRUE(m.safe);
  EXPECT_TRUE(eval_fol(w0, *m.safe));
  State<Rational> w1 = w0;
  w1.set("x", q(9, 10));
  w1.set("v", q(9, 5));
  ASSERT_TRUE(m.env_test);
  EXPECT_FALSE(eval_fol(w1, *m.env_test));
  EXPECT_TRUE(eval_fol(w1, f_true()));
}

TEST(Semantics, ViolationMargins) {
  State<double> s;
  s.set("x", 0.9);
  s.set("v", 1.8);
  s.set("xc", 1.0);
  s.set("anmin", 3.0);
  EXPECT_NEAR(violation_margin(s, parse_formula("xc - x >= v^2 / (2 * anmin)")), -0.44, 1e-12);
  EXPECT_NEAR(violation_margin(s, parse_formula("x <= 0.9")), 0.0, 1e-12);
}

TEST(Semantics, PlantRunsForOneSecond) {
  Model m = builtin("m2");
  auto out = evolve_plant(omega0(m), plant_ode(m), q(1));
  ASSERT_TRUE(std::holds_alternative<Final<Rational>>(out));
  const auto& s = std::get<Final<Rational>>(out).state;
  EXPECT_EQ(s.get("x"), q(9, 10));
  EXPECT_EQ(s.get("v"), q(9, 5));
  EXPECT_EQ(s.get("tau"), q(1));
  EXPECT_TRUE(s.all_exact());
}

TEST(Semantics, ZeroDurationKeepsState) {
  Model m = builtin("m2");
  auto out = evolve_plant(omega0(m), plant_ode(m), q(0));
  ASSERT_TRUE(std::holds_alternative<Final<Rational>>(out));
  EXPECT_TRUE(std::get<Final<Rational>>(out).state == omega0(m));
}

TEST(Semantics, BrakingStopsAtHalfSecond) {
  Model m = builtin("m2");
  auto s = rstate({{"x", q(0)}, {"v", q(2)}, {"a", q(-4)}, {"T", q(1)}, {"tau", q(0)}});
  EXPECT_TRUE(std::holds_alternative<Aborted<Rational>>(evolve_plant(s, plant_ode(m), q(3, 4))));
  auto out = evolve_plant(s, plant_ode(m), q(1, 2));
  ASSERT_TRUE(std::holds_alternative<Final<Rational>>(out));
  EXPECT_EQ(std::get<Final<Rational>>(out).state.get("x"), q(1, 2));
  EXPECT_EQ(std::get<Final<Rational>>(out).state.get("v"), q(0));
  EXPECT_THROW(evolve_plant(s, plant_ode(m), q(-1)), EvalError);
}

TEST(Semantics, MaxAdmissibleDuration) {
  Model m = builtin("m2");
  EXPECT_EQ(max_admissible_duration(omega0(m), plant_ode(m)), q(1));
  auto clock_done = omega0(m);
  clock_done.set("tau", q(1));
  EXPECT_EQ(max_admissible_duration(clock_done, plant_ode(m)), q(0));
  auto braking = rstate({{"v", q(2)}, {"a", q(-4)}, {"tau", q(0)}, {"T", q(1)}, {"x", q(0)}});
  EXPECT_EQ(max_admissible_duration(braking, plant_ode(m)), q(1, 2));
}

TEST(Semantics, WalkthroughLoopBody) {
  Model m = builtin("m2");
  ChoiceScript script = {decision::RandomValue{q(1)}, decision::RandomValue{q(9, 5)},
                         decision::Branch{Side::Right}, decision::Duration{q(1)}};
  auto r = run(omega0(m), m.loop_body(), script);
  ASSERT_TRUE(std::holds_alternative<Final<Rational>>(r.outcome));
  const auto& w1 = std::get<Final<Rational>>(r.outcome).state;
  EXPECT_EQ(w1.get("x"), q(9, 10));
  EXPECT_EQ(w1.get("v"), q(9, 5));

  auto again = run(w1, m.env, {decision::RandomValue{q(1)}});
  ASSERT_TRUE(std::holds_alternative<Aborted<Rational>>(again.outcome));
  EXPECT_TRUE(std::get<Aborted<Rational>>(again.outcome).failed_test == *m.env_test);
}

TEST(Semantics, BundledScriptReplaysOnSystem) {
  Model m = builtin("m2");
  ScriptFile file = parse_script_file(fig2_script_source());
  State<Rational> s = m.constant_state();
  for (const auto& [v, value] : file.initial) s.set(v, value);
  auto r = run(s, m.system(), file.script);
  ASSERT_TRUE(std::holds_alternative<Aborted<Rational>>(r.outcome));
  bool seen = false;
  for (const auto& e : r.trace)
    if (e.construct == "ode") {
      seen = true;
      EXPECT_EQ(e.state.get("x"), q(9, 10));
      EXPECT_EQ(e.state.get("v"), q(9, 5));
      EXPECT_EQ(e.time, q(1));
    }
  EXPECT_TRUE(seen);
}

TEST(Semantics, LoopCountZeroIsSkip) {
  auto s = rstate({{"x", q(4)}});
  auto r = run(s, loop(assign("x", var("x") + num(1))), {decision::LoopCount{0}});
  ASSERT_TRUE(std::holds_alternative<Final<Rational>>(r.outcome));
  EXPECT_EQ(std::get<Final<Rational>>(r.outcome).state.get("x"), q(4));
}

TEST(Semantics, ScriptMismatchesAreErrors) {
  auto s = rstate({{"x", q(0)}});
  Program p = random_assign("x");
  EXPECT_THROW(run(s, p, {}), ScriptError);
  EXPECT_THROW(run(s, p, {decision::RandomValue{q(1)}, decision::RandomValue{q(2)}}), ScriptError);
  EXPECT_THROW(run(s, p, {decision::Branch{Side::Left}}), ScriptError);
}

TEST(Semantics, ScriptFileRoundTrip) {
  ScriptFile file = parse_script_file(fig2_script_source());
  EXPECT_EQ(file.initial.size(), 5u);
  EXPECT_EQ(parse_script(format_script(file.script)), file.script);
  EXPECT_THROW(parse_script("jump 3"), ScriptError);
}

// Closed form against fixed-step RK4 for the braking plant.
TEST(Semantics, ClosedFormMatchesIntegration) {
  Model m = builtin("m2");
  const hp::Ode& ode = plant_ode(m);
  auto form = closed_form(ode);
  ASSERT_TRUE(form);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> x(-1, 5), v(0, 5), a(-4, 2), t(0, 1);
  SemanticsConfig cfg;
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    State<double> s;
    s.set("x", x(rng));
    s.set("v", v(rng));
    s.set("a", a(rng));
    s.set("tau", 0.0);
    s.set("T", 1.0);
    double d = t(rng);
    State<double> exact = detail::flow_closed_form(s, *form, d);
    State<double> numeric = detail::integrate(s, ode.equations, d, cfg);
    for (const char* n : {"x", "v", "tau"}) worst = std::max(worst, std::abs(exact.get(n) - numeric.get(n)));
  }
  EXPECT_LT(worst, 1e-6);
}
