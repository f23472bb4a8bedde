#pragma once

// Small random obligations over x, y on the lattice {0, ..., 4} and an
// exhaustive evaluator for them. The evaluator shares only the AST types with
// the library: terms, formulas and programs are interpreted here from scratch.
//
// Finite semantics (the same restriction the checker's enumeration uses):
//   x := *          the lattice points of x plus the current value
//   loops           0..3 iterations
//   {x' = c & x <= b} (or >= b when c < 0)
//                   durations k/8 of the largest admissible one, k = 0..8

#include <hpcheck/checker.hpp>

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace hpcheck::testing {

using Valuation = std::map<std::string, Rational>;

inline constexpr long kLatticeHi = 4;
inline constexpr unsigned kLoopBound = 3;
inline constexpr unsigned kDurationSteps = 8;

inline Rational oracle_term(const Valuation& s, const Term& t) {
  const auto& v = t.node().v;
  if (auto* p = std::get_if<term::Var>(&v)) return s.at(p->name.name());
  if (auto* p = std::get_if<term::Const>(&v)) return p->value;
  if (auto* p = std::get_if<term::Neg>(&v)) return -oracle_term(s, p->inner);
  if (auto* p = std::get_if<term::Add>(&v)) return oracle_term(s, p->lhs) + oracle_term(s, p->rhs);
  if (auto* p = std::get_if<term::Sub>(&v)) return oracle_term(s, p->lhs) - oracle_term(s, p->rhs);
  if (auto* p = std::get_if<term::Mul>(&v)) return oracle_term(s, p->lhs) * oracle_term(s, p->rhs);
  throw std::logic_error("oracle: unsupported term");
}

inline bool oracle_formula(const Valuation& s, const Formula& f);

inline std::vector<Valuation> reach(const Valuation& s, const Program& p) {
  const auto& v = p.node().v;
  if (auto* a = std::get_if<hp::Assign>(&v)) {
    Valuation t = s;
    t[a->var.name()] = oracle_term(s, a->value);
    return {t};
  }
  if (auto* a = std::get_if<hp::RandomAssign>(&v)) {
    std::vector<Valuation> out;
    Valuation t = s;
    out.push_back(t);
    for (long k = 0; k <= kLatticeHi; ++k) {
      t[a->var.name()] = Rational(k);
      out.push_back(t);
    }
    return out;
  }
  if (auto* a = std::get_if<hp::Test>(&v)) {
    if (oracle_formula(s, a->cond)) return {s};
    return {};
  }
  if (auto* a = std::get_if<hp::Choice>(&v)) {
    auto l = reach(s, a->lhs), r = reach(s, a->rhs);
    l.insert(l.end(), r.begin(), r.end());
    return l;
  }
  if (auto* a = std::get_if<hp::Seq>(&v)) {
    std::vector<Valuation> out;
    for (const auto& mid : reach(s, a->first)) {
      auto more = reach(mid, a->second);
      out.insert(out.end(), more.begin(), more.end());
    }
    return out;
  }
  if (auto* a = std::get_if<hp::Loop>(&v)) {
    std::vector<Valuation> out, frontier{s};
    for (unsigned n = 0; n <= kLoopBound; ++n) {
      out.insert(out.end(), frontier.begin(), frontier.end());
      if (n == kLoopBound) break;
      std::vector<Valuation> next;
      for (const auto& f : frontier) {
        auto more = reach(f, a->body);
        next.insert(next.end(), more.begin(), more.end());
      }
      frontier = std::move(next);
    }
    return out;
  }
  if (auto* a = std::get_if<hp::Ode>(&v)) {
    // single equation x' = c with domain x <= b (c > 0) or x >= b (c < 0)
    const auto& eq = a->equations.at(0);
    Rational c = oracle_term(s, eq.rhs);
    const auto& dom = std::get<fml::Compare>(a->domain.node().v);
    Rational b = oracle_term(s, dom.rhs);
    Rational x = s.at(eq.var.name());
    if (!oracle_formula(s, a->domain)) return {};
    Rational t_max = (b - x) / c;
    std::vector<Valuation> out;
    for (unsigned k = 0; k <= kDurationSteps; ++k) {
      Valuation t = s;
      t[eq.var.name()] = x + c * t_max * Rational(k) / Rational(kDurationSteps);
      out.push_back(t);
    }
    return out;
  }
  throw std::logic_error("oracle: unsupported program");
}

inline bool oracle_formula(const Valuation& s, const Formula& f) {
  const auto& v = f.node().v;
  if (auto* p = std::get_if<fml::Compare>(&v)) {
    Rational l = oracle_term(s, p->lhs), r = oracle_term(s, p->rhs);
    switch (p->op) {
      case CmpOp::Eq: return l == r;
      case CmpOp::Ne: return l != r;
      case CmpOp::Lt: return l < r;
      case CmpOp::Le: return l <= r;
      case CmpOp::Gt: return l > r;
      case CmpOp::Ge: return l >= r;
    }
  }
  if (std::holds_alternative<fml::True>(v)) return true;
  if (std::holds_alternative<fml::False>(v)) return false;
  if (auto* p = std::get_if<fml::Not>(&v)) return !oracle_formula(s, p->inner);
  if (auto* p = std::get_if<fml::And>(&v)) return oracle_formula(s, p->lhs) && oracle_formula(s, p->rhs);
  if (auto* p = std::get_if<fml::Or>(&v)) return oracle_formula(s, p->lhs) || oracle_formula(s, p->rhs);
  if (auto* p = std::get_if<fml::Implies>(&v)) return !oracle_formula(s, p->lhs) || oracle_formula(s, p->rhs);
  if (auto* p = std::get_if<fml::Box>(&v)) {
    for (const auto& t : reach(s, p->program))
      if (!oracle_formula(t, p->post)) return false;
    return true;
  }
  if (auto* p = std::get_if<fml::Diamond>(&v)) {
    for (const auto& t : reach(s, p->program))
      if (oracle_formula(t, p->post)) return true;
    return false;
  }
  throw std::logic_error("oracle: unsupported formula");
}

// true: falsified (FalsifyUniversal) or witnessed (FindWitness) somewhere on the lattice.
inline bool oracle_found(const Obligation& ob) {
  bool witness = ob.kind == ObligationKind::FindWitness;
  for (long x = 0; x <= kLatticeHi; ++x)
    for (long y = 0; y <= kLatticeHi; ++y) {
      Valuation s{{"x", Rational(x)}, {"y", Rational(y)}};
      if (oracle_formula(s, ob.matrix) == witness) return true;
    }
  return false;
}

class ObligationGen {
 public:
  explicit ObligationGen(std::uint64_t seed) : rng_(seed) {}

  Obligation next() {
    Obligation ob;
    ob.kind = pick(2) ? ObligationKind::FindWitness : ObligationKind::FalsifyUniversal;
    bool witness = ob.kind == ObligationKind::FindWitness;
    loops_ = 0;
    odes_ = 0;
    // Modalities only in the polarity the search explores, except for the
    // deterministic ones, which the goal-directed decider settles.
    switch (pick(4)) {
      case 0:
        ob.matrix = witness ? f_and(atom(), diamond(program(3), atom())) : f_implies(atom(), box(program(3), atom()));
        break;
      case 1:
        ob.matrix = witness ? diamond(program(2), f_and(atom(), diamond(program(2), atom())))
                            : box(program(2), f_or(atom(), box(program(2), atom())));
        break;
      case 2:
        ob.matrix = witness ? f_not(box(program(3), atom())) : f_or(atom(), f_not(diamond(program(3), atom())));
        break;
      default:
        ob.matrix = witness ? f_and(diamond(program(3), atom()), box(simple_program(3), atom()))
                            : f_implies(atom(), diamond(simple_program(3), atom()));
        break;
    }
    ob.name = "oracle";
    for (const char* n : {"x", "y"}) {
      SearchVar v{Symbol(n), Rational(0), Rational(kLatticeHi), Rational(1)};
      ob.box.push_back(v);
      ob.choices.push_back(v);
    }
    Formula closed = ob.matrix;
    for (auto it = ob.box.rbegin(); it != ob.box.rend(); ++it)
      closed = witness ? make_formula(fml::Exists{it->name, closed}) : make_formula(fml::Forall{it->name, closed});
    ob.formula = closed;
    return ob;
  }

 private:
  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
  Symbol variable() { return Symbol(pick(2) ? "x" : "y"); }

  Term linear() {
    Term x = var("x"), y = var("y");
    switch (pick(6)) {
      case 0: return x;
      case 1: return y;
      case 2: return x + y;
      case 3: return x - y;
      case 4: return num(2) * x - y;
      default: return y - num(1);
    }
  }

  Formula atom() {
    static const CmpOp ops[] = {CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge};
    return compare(ops[pick(6)], linear(), num(pick(7) - 1));
  }

  Program assignment() {
    Symbol v = variable();
    switch (pick(4)) {
      case 0: return assign(v, var(v) + num(1));
      case 1: return assign(v, var(v) - num(1));
      case 2: return assign(v, linear());
      default: return assign(v, num(pick(5)));
    }
  }

  Program simple_program(int depth) {
    if (depth <= 1 || pick(3) == 0) return pick(3) ? assignment() : test(atom());
    switch (pick(2)) {
      case 0: return choice(simple_program(depth - 1), simple_program(depth - 1));
      default: return seq(simple_program(depth - 1), simple_program(depth - 1));
    }
  }

  Program program(int depth) {
    if (depth <= 1 || pick(3) == 0) {
      switch (pick(5)) {
        case 0: return assignment();
        case 1: return random_assign(variable());
        case 2: return test(atom());
        case 3:
          if (odes_++ < 1) {
            Symbol v = variable();
            long c = pick(2) ? 1 + pick(2) : -1 - pick(2);
            Formula dom = compare(c > 0 ? CmpOp::Le : CmpOp::Ge, var(v), num(pick(6)));
            return ode({{v, num(c)}}, dom);
          }
          return random_assign(variable());
        default: return assignment();
      }
    }
    switch (pick(4)) {
      case 0: return choice(program(depth - 1), program(depth - 1));
      case 1:
        if (loops_++ < 1) return loop(program(depth - 1));
        [[fallthrough]];
      default: return seq(program(depth - 1), program(depth - 1));
    }
  }

  std::mt19937_64 rng_;
  int loops_ = 0;
  int odes_ = 0;
};

inline SearchConfig oracle_config(std::uint64_t seed = 1) {
  SearchConfig cfg;
  cfg.budget = 50000;
  cfg.seed = seed;
  cfg.enumerate_cap = 1000000;
  cfg.max_loop_count = kLoopBound;
  cfg.duration_samples_per_ODE = kDurationSteps + 1;
  return cfg;
}

struct OracleComparison {
  int instances = 0;
  int agreed = 0;
  int found = 0;
  std::string first_disagreement;
};

inline OracleComparison compare_with_oracle(int n, std::uint64_t seed) {
  ObligationGen gen(seed);
  OracleComparison out;
  for (int i = 0; i < n; ++i) {
    Obligation ob = gen.next();
    bool expected = oracle_found(ob);
    Verdict v = check(ob, oracle_config());
    ++out.instances;
    out.found += expected;
    if (v.found() == expected) {
      ++out.agreed;
    } else if (out.first_disagreement.empty()) {
      out.first_disagreement = pretty_print(ob.formula) + ": oracle " + (expected ? "found" : "none") +
                               ", checker " + to_string(v.verdict);
    }
  }
  return out;
}

}  // namespace hpcheck::testing
