#pragma once

// Transition semantics of hybrid programs with explicitly resolved
// nondeterminism. One interpreter serves exact replay (Rational), fast
// search (double), and script replay; the difference is the Resolver that
// answers "which branch / which value / how long / how many iterations".

#include <hpcheck/ast.hpp>
#include <hpcheck/parser.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace hpcheck {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScriptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------- scalars

template <class S>
struct ScalarOps;

template <>
struct ScalarOps<double> {
  static double from_rational(const Rational& r) { return r.get_d(); }
  static double to_double(double d) { return d; }
  static Rational to_rational(double d) { return rational_from_double(d); }
  static constexpr bool exact = false;
};

template <>
struct ScalarOps<Rational> {
  static Rational from_rational(const Rational& r) { return r; }
  static double to_double(const Rational& r) { return r.get_d(); }
  static Rational to_rational(const Rational& r) { return r; }
  static constexpr bool exact = true;
};

template <class S>
S scalar(const Rational& r) {
  return ScalarOps<S>::from_rational(r);
}

template <class S>
S scalar(long n) {
  return ScalarOps<S>::from_rational(make_rational(n));
}

// ------------------------------------------------------------------- state

// Total valuation over a fixed set of variables. Entries remember whether
// their value is exact; numeric ODE integration clears the flag.
template <class S>
class State {
 public:
  struct Entry {
    Symbol name;
    S value;
    bool exact = true;
  };

  State() = default;

  bool has(Symbol v) const { return find(v) != nullptr; }

  const S& get(Symbol v) const {
    if (auto* e = find(v)) return e->value;
    throw EvalError("undeclared variable " + v.name());
  }

  bool is_exact(Symbol v) const {
    auto* e = find(v);
    return e && e->exact;
  }

  // Declares v if needed.
  void set(Symbol v, S value, bool exact = true) {
    if (auto* e = find_mut(v)) {
      e->value = std::move(value);
      e->exact = exact;
      return;
    }
    entries_.push_back({v, std::move(value), exact});
  }

  // Updates an existing entry only (Table-1 assignment frame).
  void update(Symbol v, S value, bool exact = true) {
    auto* e = find_mut(v);
    if (!e) throw EvalError("assignment to undeclared variable " + v.name());
    e->value = std::move(value);
    e->exact = exact;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool all_exact() const {
    return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.exact; });
  }

  friend bool operator==(const State& a, const State& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (const auto& e : a.entries_) {
      auto* o = b.find(e.name);
      if (!o || !(o->value == e.value)) return false;
    }
    return true;
  }

 private:
  const Entry* find(Symbol v) const {
    for (const auto& e : entries_)
      if (e.name == v) return &e;
    return nullptr;
  }
  Entry* find_mut(Symbol v) {
    for (auto& e : entries_)
      if (e.name == v) return &e;
    return nullptr;
  }

  std::vector<Entry> entries_;
};

template <class To, class From>
State<To> convert_state(const State<From>& s) {
  State<To> out;
  for (const auto& e : s.entries()) {
    if constexpr (std::is_same_v<To, From>) {
      out.set(e.name, e.value, e.exact);
    } else if constexpr (std::is_same_v<To, double>) {
      out.set(e.name, ScalarOps<From>::to_double(e.value), e.exact);
    } else {
      out.set(e.name, ScalarOps<From>::to_rational(e.value), e.exact);
    }
  }
  return out;
}

// ------------------------------------------------------------- evaluation

template <class S>
S eval_term(const State<S>& state, const Term& t) {
  return std::visit(
      overloaded{
          [&](const term::Var& p) -> S { return state.get(p.name); },
          [&](const term::Const& p) -> S { return scalar<S>(p.value); },
          [&](const term::Neg& p) -> S { return S(-eval_term(state, p.inner)); },
          [&](const term::Add& p) -> S { return S(eval_term(state, p.lhs) + eval_term(state, p.rhs)); },
          [&](const term::Sub& p) -> S { return S(eval_term(state, p.lhs) - eval_term(state, p.rhs)); },
          [&](const term::Mul& p) -> S { return S(eval_term(state, p.lhs) * eval_term(state, p.rhs)); },
          [&](const term::Div& p) -> S {
            S den = eval_term(state, p.den);
            if (den == S(0)) throw EvalError("division by zero in " + pretty_print(t));
            return S(eval_term(state, p.num) / den);
          },
          [&](const term::Pow& p) -> S {
            S base = eval_term(state, p.base);
            S out = scalar<S>(1);
            for (unsigned i = 0; i < p.exponent; ++i) out = S(out * base);
            return out;
          },
      },
      t.node().v);
}

template <class S>
bool compare_values(CmpOp op, const S& l, const S& r) {
  switch (op) {
    case CmpOp::Ge: return l >= r;
    case CmpOp::Gt: return l > r;
    case CmpOp::Le: return l <= r;
    case CmpOp::Lt: return l < r;
    case CmpOp::Eq: return l == r;
    case CmpOp::Ne: return l != r;
  }
  return false;
}

// Quantifier-free first-order formulas only.
template <class S>
bool eval_fol(const State<S>& state, const Formula& f) {
  return std::visit(overloaded{
                        [&](const fml::Compare& p) {
                          return compare_values(p.op, eval_term(state, p.lhs), eval_term(state, p.rhs));
                        },
                        [&](const fml::True&) { return true; },
                        [&](const fml::False&) { return false; },
                        [&](const fml::Not& p) { return !eval_fol(state, p.inner); },
                        [&](const fml::And& p) { return eval_fol(state, p.lhs) && eval_fol(state, p.rhs); },
                        [&](const fml::Or& p) { return eval_fol(state, p.lhs) || eval_fol(state, p.rhs); },
                        [&](const fml::Implies& p) { return !eval_fol(state, p.lhs) || eval_fol(state, p.rhs); },
                        [&](const fml::Iff& p) { return eval_fol(state, p.lhs) == eval_fol(state, p.rhs); },
                        [&](const fml::Forall&) -> bool { throw EvalError("quantifier encountered in eval_fol"); },
                        [&](const fml::Exists&) -> bool { throw EvalError("quantifier encountered in eval_fol"); },
                        [&](const fml::Box&) -> bool { throw EvalError("modality encountered in eval_fol"); },
                        [&](const fml::Diamond&) -> bool { throw EvalError("modality encountered in eval_fol"); },
                    },
                    f.node().v);
}

inline constexpr double kStrictEpsilon = 1e-12;

// Signed robustness: > 0 means true, < 0 means false. Equalities are never
// positive, so they must be decided by evaluation rather than by margin.
inline double violation_margin(const State<double>& state, const Formula& f) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return std::visit(
      overloaded{
          [&](const fml::Compare& p) {
            double l = eval_term(state, p.lhs), r = eval_term(state, p.rhs);
            switch (p.op) {
              case CmpOp::Ge: return l - r;
              case CmpOp::Gt: return l - r - kStrictEpsilon;
              case CmpOp::Le: return r - l;
              case CmpOp::Lt: return r - l - kStrictEpsilon;
              case CmpOp::Eq: return -std::abs(l - r);
              case CmpOp::Ne: return std::abs(l - r) - kStrictEpsilon;
            }
            return 0.0;
          },
          [&](const fml::True&) { return inf; },
          [&](const fml::False&) { return -inf; },
          [&](const fml::Not& p) { return -violation_margin(state, p.inner); },
          [&](const fml::And& p) { return std::min(violation_margin(state, p.lhs), violation_margin(state, p.rhs)); },
          [&](const fml::Or& p) { return std::max(violation_margin(state, p.lhs), violation_margin(state, p.rhs)); },
          [&](const fml::Implies& p) {
            return std::max(-violation_margin(state, p.lhs), violation_margin(state, p.rhs));
          },
          [&](const fml::Iff& p) {
            double a = violation_margin(state, p.lhs), b = violation_margin(state, p.rhs);
            return std::max(std::min(a, b), std::min(-a, -b));
          },
          [&](const fml::Forall&) -> double { throw EvalError("quantifier encountered in violation_margin"); },
          [&](const fml::Exists&) -> double { throw EvalError("quantifier encountered in violation_margin"); },
          [&](const fml::Box&) -> double { throw EvalError("modality encountered in violation_margin"); },
          [&](const fml::Diamond&) -> double { throw EvalError("modality encountered in violation_margin"); },
      },
      f.node().v);
}

// ------------------------------------------------------------------ scripts

enum class Side { Left, Right };

namespace decision {
struct Branch { Side side; };
struct RandomValue { Rational value; };
struct Duration { Rational value; };
struct LoopCount { unsigned count; };
}  // namespace decision

using Decision = std::variant<decision::Branch, decision::RandomValue, decision::Duration, decision::LoopCount>;
using ChoiceScript = std::vector<Decision>;

namespace decision {
inline bool operator==(const Branch& a, const Branch& b) { return a.side == b.side; }
inline bool operator==(const RandomValue& a, const RandomValue& b) { return a.value == b.value; }
inline bool operator==(const Duration& a, const Duration& b) { return a.value == b.value; }
inline bool operator==(const LoopCount& a, const LoopCount& b) { return a.count == b.count; }
}  // namespace decision

inline std::string to_string(const Decision& d) {
  return std::visit(overloaded{
                        [](const decision::Branch& b) {
                          return std::string("branch ") + (b.side == Side::Left ? "left" : "right");
                        },
                        [](const decision::RandomValue& r) { return "random " + to_string(r.value); },
                        [](const decision::Duration& r) { return "duration " + to_string(r.value); },
                        [](const decision::LoopCount& l) { return "loop " + std::to_string(l.count); },
                    },
                    d);
}

// Script files hold one decision per line: "branch left|right",
// "random V", "duration V", "loop N". Lines "init NAME = V" give the
// initial value of a variable and must precede the decisions.
struct ScriptFile {
  std::vector<std::pair<Symbol, Rational>> initial;
  ChoiceScript script;
};

inline ScriptFile parse_script_file(std::string_view text) {
  ScriptFile out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::vector<std::string> words;
    std::istringstream in(line);
    for (std::string w; in >> w;) words.push_back(w);
    if (words.empty()) continue;
    auto bad = [&](const std::string& why) {
      return ScriptError("script line " + std::to_string(line_no) + ": " + why);
    };
    auto value = [&](const std::string& w) {
      auto r = parse_rational(w);
      if (!r) throw bad("malformed number '" + w + "'");
      return *r;
    };
    const std::string& kw = words[0];
    if (kw == "init" && words.size() == 4 && words[2] == "=") {
      if (!out.script.empty()) throw bad("init lines must precede decisions");
      out.initial.emplace_back(Symbol(words[1]), value(words[3]));
    } else if (kw == "branch" && words.size() == 2 && (words[1] == "left" || words[1] == "right")) {
      out.script.push_back(decision::Branch{words[1] == "left" ? Side::Left : Side::Right});
    } else if (kw == "random" && words.size() == 2) {
      out.script.push_back(decision::RandomValue{value(words[1])});
    } else if (kw == "duration" && words.size() == 2) {
      Rational r = value(words[1]);
      if (sgn(r) < 0) throw bad("negative duration");
      out.script.push_back(decision::Duration{r});
    } else if (kw == "loop" && words.size() == 2) {
      Rational r = value(words[1]);
      if (r.get_den() != 1 || sgn(r) < 0 || !r.get_num().fits_uint_p()) throw bad("loop count must be a natural number");
      out.script.push_back(decision::LoopCount{static_cast<unsigned>(r.get_num().get_ui())});
    } else {
      throw bad("cannot parse '" + line + "'");
    }
  }
  return out;
}

inline ChoiceScript parse_script(std::string_view text) { return parse_script_file(text).script; }

inline std::string format_script(const ChoiceScript& script) {
  std::string out;
  for (const auto& d : script) out += to_string(d) + "\n";
  return out;
}

// ------------------------------------------------------------------ outcomes

template <class S>
struct Final {
  State<S> state;
};

template <class S>
struct Aborted {
  Formula failed_test;
  State<S> state;
};

template <class S>
using Outcome = std::variant<Final<S>, Aborted<S>>;

template <class S>
struct TraceEntry {
  S time;
  std::string construct;
  State<S> state;
};

template <class S>
using Trace = std::vector<TraceEntry<S>>;

struct SemanticsConfig {
  double ode_step = 1e-3;           // RK4 step for non-template ODEs
  unsigned domain_grid = 64;        // interior points for non-template domain checks
  double duration_horizon = 1e6;    // search cap for unbounded evolutions
  double bisection_tolerance = 1e-9;
};

// --------------------------------------------------------------------- ODEs

// Closed form of chains x' = y, y' = c with c constant along the flow.
struct OdeForm {
  enum class Kind { Affine, Quadratic };
  struct Component {
    Symbol var;
    Kind kind;
    Term rate;        // Affine: the constant rate. Quadratic: unused.
    Symbol velocity;  // Quadratic: the affine variable it follows.
  };
  std::vector<Component> components;
};

inline std::optional<OdeForm> closed_form(const hp::Ode& ode) {
  SymbolSet evolving;
  for (const auto& eq : ode.equations) evolving.insert(eq.var);
  auto flow_constant = [&](const Term& t) {
    for (auto s : free_variables(t))
      if (evolving.count(s)) return false;
    return true;
  };
  OdeForm form;
  SymbolSet affine;
  for (const auto& eq : ode.equations)
    if (flow_constant(eq.rhs)) affine.insert(eq.var);
  for (const auto& eq : ode.equations) {
    if (affine.count(eq.var)) {
      form.components.push_back({eq.var, OdeForm::Kind::Affine, eq.rhs, eq.var});
    } else if (auto* v = std::get_if<term::Var>(&eq.rhs.node().v); v && affine.count(v->name)) {
      form.components.push_back({eq.var, OdeForm::Kind::Quadratic, eq.rhs, v->name});
    } else {
      return std::nullopt;
    }
  }
  return form;
}

namespace detail {

// Polynomial degree of a term in the flow time; nullopt when not polynomial.
inline std::optional<unsigned> time_degree(const Term& t, const OdeForm& form) {
  return std::visit(
      overloaded{
          [&](const term::Var& p) -> std::optional<unsigned> {
            for (const auto& c : form.components)
              if (c.var == p.name) return c.kind == OdeForm::Kind::Affine ? 1u : 2u;
            return 0u;
          },
          [&](const term::Const&) -> std::optional<unsigned> { return 0u; },
          [&](const term::Neg& p) { return time_degree(p.inner, form); },
          [&](const term::Pow& p) -> std::optional<unsigned> {
            auto d = time_degree(p.base, form);
            if (!d) return std::nullopt;
            return *d * p.exponent;
          },
          [&](const term::Div& p) -> std::optional<unsigned> {
            auto d = time_degree(p.den, form);
            if (!d || *d != 0) return std::nullopt;
            return time_degree(p.num, form);
          },
          [&](const term::Mul& p) -> std::optional<unsigned> {
            auto a = time_degree(p.lhs, form), b = time_degree(p.rhs, form);
            if (!a || !b) return std::nullopt;
            return *a + *b;
          },
          [&](const auto& p) -> std::optional<unsigned> {
            auto a = time_degree(p.lhs, form), b = time_degree(p.rhs, form);
            if (!a || !b) return std::nullopt;
            return std::max(*a, *b);
          },
      },
      t.node().v);
}

// Domain conjuncts that are affine along the closed-form flow, or nullopt
// when some part of the domain needs grid checking.
inline std::optional<std::vector<fml::Compare>> affine_domain(const Formula& domain, const OdeForm& form) {
  std::vector<Formula> parts;
  conjuncts(domain, parts);
  std::vector<fml::Compare> out;
  for (const auto& part : parts) {
    if (std::holds_alternative<fml::True>(part.node().v)) continue;
    auto* c = std::get_if<fml::Compare>(&part.node().v);
    if (!c) return std::nullopt;
    auto dl = time_degree(c->lhs, form), dr = time_degree(c->rhs, form);
    if (!dl || !dr || *dl > 1 || *dr > 1) return std::nullopt;
    out.push_back(*c);
  }
  return out;
}

template <class S>
State<S> flow_closed_form(const State<S>& start, const OdeForm& form, const S& t) {
  State<S> out = start;
  S half_t2 = S(t * t / scalar<S>(2));
  for (const auto& c : form.components) {
    if (c.kind == OdeForm::Kind::Affine) {
      S rate = eval_term(start, c.rate);
      out.update(c.var, S(start.get(c.var) + rate * t), start.is_exact(c.var));
    } else {
      auto vel = std::find_if(form.components.begin(), form.components.end(),
                                     [&](const auto& k) { return k.var == c.velocity; });
      S accel = eval_term(start, vel->rate);
      out.update(c.var, S(start.get(c.var) + start.get(c.velocity) * t + accel * half_t2), start.is_exact(c.var));
    }
  }
  return out;
}

inline void rk4_step(State<double>& s, const std::vector<OdeEquation>& eqs, double h) {
  const std::size_t n = eqs.size();
  std::vector<double> y0(n), k1(n), k2(n), k3(n), k4(n);
  for (std::size_t i = 0; i < n; ++i) y0[i] = s.get(eqs[i].var);
  auto deriv = [&](std::vector<double>& k) {
    for (std::size_t i = 0; i < n; ++i) k[i] = eval_term(s, eqs[i].rhs);
  };
  auto place = [&](const std::vector<double>& k, double c) {
    for (std::size_t i = 0; i < n; ++i) s.update(eqs[i].var, y0[i] + c * k[i], false);
  };
  deriv(k1);
  place(k1, h / 2);
  deriv(k2);
  place(k2, h / 2);
  deriv(k3);
  place(k3, h);
  deriv(k4);
  for (std::size_t i = 0; i < n; ++i) {
    double v = y0[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    if (!std::isfinite(v)) throw EvalError("numeric blow-up integrating " + eqs[i].var.name() + "'");
    s.update(eqs[i].var, v, false);
  }
}

inline State<double> integrate(State<double> s, const std::vector<OdeEquation>& eqs, double duration,
                               const SemanticsConfig& cfg) {
  if (duration <= 0) return s;
  auto steps = static_cast<std::size_t>(std::ceil(duration / cfg.ode_step));
  if (steps == 0) steps = 1;
  double h = duration / static_cast<double>(steps);
  for (std::size_t i = 0; i < steps; ++i) rk4_step(s, eqs, h);
  return s;
}

// Numeric evolution with the domain checked on a grid of K+2 points.
inline std::optional<State<double>> evolve_numeric(const State<double>& start, const hp::Ode& ode, double duration,
                                                   const SemanticsConfig& cfg) {
  if (!eval_fol(start, ode.domain)) return std::nullopt;
  if (duration == 0) return start;
  State<double> s = start;
  const unsigned segments = cfg.domain_grid + 1;
  for (unsigned k = 0; k < segments; ++k) {
    s = integrate(std::move(s), ode.equations, duration / segments, cfg);
    if (!eval_fol(s, ode.domain)) return std::nullopt;
  }
  return s;
}

}  // namespace detail

template <class S>
Outcome<S> evolve_plant(const State<S>& state, const hp::Ode& ode, const S& duration,
                        const SemanticsConfig& cfg = {}) {
  if (duration < S(0)) throw EvalError("negative duration");
  if (auto form = closed_form(ode)) {
    if (auto affine = detail::affine_domain(ode.domain, *form)) {
      S zero = scalar<S>(0);
      State<S> end = detail::flow_closed_form(state, *form, duration);
      for (const auto& c : *affine) {
        S g0 = S(eval_term(state, c.lhs) - eval_term(state, c.rhs));
        S g1 = S(eval_term(end, c.lhs) - eval_term(end, c.rhs));
        bool ok = compare_values(c.op, g0, zero) && compare_values(c.op, g1, zero);
        if (ok && c.op == CmpOp::Ne && g0 != g1) {
          // affine g vanishes inside iff the endpoint values differ in sign
          ok = (g0 > zero) == (g1 > zero);
        }
        if (!ok) return Aborted<S>{ode.domain, state};
      }
      return Final<S>{std::move(end)};
    }
  }
  if constexpr (ScalarOps<S>::exact) {
    auto numeric = detail::evolve_numeric(convert_state<double>(state), ode, ScalarOps<S>::to_double(duration), cfg);
    if (!numeric) return Aborted<S>{ode.domain, state};
    State<S> out = state;
    for (const auto& eq : ode.equations) out.update(eq.var, rational_from_double(numeric->get(eq.var)), false);
    return Final<S>{std::move(out)};
  } else {
    auto numeric = detail::evolve_numeric(state, ode, duration, cfg);
    if (!numeric) return Aborted<S>{ode.domain, state};
    return Final<S>{std::move(*numeric)};
  }
}

// Supremum of admissible durations; 0 when the domain fails at the start.
template <class S>
S max_admissible_duration(const State<S>& state, const hp::Ode& ode, const SemanticsConfig& cfg = {}) {
  S zero = scalar<S>(0);
  if (!eval_fol(state, ode.domain)) return zero;
  if (auto form = closed_form(ode)) {
    if (auto affine = detail::affine_domain(ode.domain, *form)) {
      State<S> at_one = detail::flow_closed_form(state, *form, scalar<S>(1));
      std::optional<S> best;
      auto bound = [&](S b) {
        if (b < zero) b = zero;
        if (!best || b < *best) best = b;
      };
      for (const auto& c : *affine) {
        S g0 = S(eval_term(state, c.lhs) - eval_term(state, c.rhs));
        S g1 = S(S(eval_term(at_one, c.lhs) - eval_term(at_one, c.rhs)) - g0);
        if (g1 == zero) continue;
        S root = S(-g0 / g1);
        switch (c.op) {
          case CmpOp::Ge:
          case CmpOp::Gt:
            if (g1 < zero) bound(root);
            break;
          case CmpOp::Le:
          case CmpOp::Lt:
            if (g1 > zero) bound(root);
            break;
          case CmpOp::Eq: bound(zero); break;
          case CmpOp::Ne:
            if (root > zero) bound(root);
            break;
        }
      }
      if (best) return *best;
      return scalar<S>(make_rational(static_cast<long>(cfg.duration_horizon)));
    }
  }
  // Bisection on the grid-checked predicate.
  State<double> start = convert_state<double>(state);
  auto admissible = [&](double r) { return detail::evolve_numeric(start, ode, r, cfg).has_value(); };
  double lo = 0, hi = 1;
  while (admissible(hi)) {
    lo = hi;
    hi *= 2;
    if (hi > cfg.duration_horizon) return scalar<S>(rational_from_double(cfg.duration_horizon));
  }
  while (hi - lo > cfg.bisection_tolerance) {
    double mid = 0.5 * (lo + hi);
    (admissible(mid) ? lo : hi) = mid;
  }
  if constexpr (ScalarOps<S>::exact) return rational_from_double(lo);
  else return lo;
}

// ------------------------------------------------------------- interpreter

// Resolver contract (duck-typed):
//   Side branch(const State<S>&)
//   S random_value(Symbol var, const State<S>&)
//   S duration(const State<S>&, const hp::Ode&, MaxFn max_admissible)
//   unsigned loop_count(const State<S>&)
// Resolvers may throw ScriptError.

template <class S>
struct RunResult {
  Outcome<S> outcome;
  Trace<S> trace;
};

namespace detail {

template <class S, class Resolver>
class Interpreter {
 public:
  Interpreter(Resolver& resolver, const SemanticsConfig& cfg, Trace<S>* trace)
      : resolver_(resolver), cfg_(cfg), trace_(trace) {}

  Outcome<S> exec(State<S> state, const Program& p) {
    return std::visit(
        overloaded{
            [&](const hp::Assign& a) -> Outcome<S> {
              S value = eval_term(state, a.value);
              bool exact = true;
              if constexpr (ScalarOps<S>::exact)
                if (!state.all_exact())
                  for (auto v : free_variables(a.value)) exact = exact && state.is_exact(v);
              state.update(a.var, std::move(value), exact);
              if (trace_) record(state, a.var.name() + " := " + pretty_print(a.value));
              return Final<S>{std::move(state)};
            },
            [&](const hp::RandomAssign& a) -> Outcome<S> {
              if (!state.has(a.var)) throw EvalError("assignment to undeclared variable " + a.var.name());
              S value = resolver_.random_value(a.var, state);
              state.update(a.var, std::move(value), true);
              if (trace_) record(state, a.var.name() + " := *");
              return Final<S>{std::move(state)};
            },
            [&](const hp::Test& a) -> Outcome<S> {
              if (!eval_fol(state, a.cond)) return Aborted<S>{a.cond, std::move(state)};
              if (trace_) record(state, "?(" + pretty_print(a.cond) + ")");
              return Final<S>{std::move(state)};
            },
            [&](const hp::Ode& a) -> Outcome<S> {
              auto max_fn = [&]() { return max_admissible_duration(state, a, cfg_); };
              S r = resolver_.duration(state, a, max_fn);
              if (r < S(0)) throw ScriptError("negative duration");
              auto out = evolve_plant(state, a, r, cfg_);
              if (auto* f = std::get_if<Final<S>>(&out)) {
                time_ = S(time_ + r);
                record(f->state, "ode");
              }
              return out;
            },
            [&](const hp::Choice& a) -> Outcome<S> {
              Side side = resolver_.branch(state);
              return exec(std::move(state), side == Side::Left ? a.lhs : a.rhs);
            },
            [&](const hp::Seq& a) -> Outcome<S> {
              auto first = exec(std::move(state), a.first);
              if (auto* f = std::get_if<Final<S>>(&first)) return exec(std::move(f->state), a.second);
              return first;
            },
            [&](const hp::Loop& a) -> Outcome<S> {
              unsigned n = resolver_.loop_count(state);
              Outcome<S> cur = Final<S>{std::move(state)};
              for (unsigned i = 0; i < n; ++i) {
                auto* f = std::get_if<Final<S>>(&cur);
                if (!f) break;
                cur = exec(std::move(f->state), a.body);
              }
              return cur;
            },
        },
        p.node().v);
  }

  void record(const State<S>& s, std::string label) {
    if (trace_) trace_->push_back({time_, std::move(label), s});
  }

 private:
  Resolver& resolver_;
  const SemanticsConfig& cfg_;
  Trace<S>* trace_;
  S time_ = scalar<S>(0);
};

}  // namespace detail

template <class S, class Resolver>
Outcome<S> run_with(const State<S>& state, const Program& program, Resolver& resolver, const SemanticsConfig& cfg = {},
                    Trace<S>* trace = nullptr) {
  detail::Interpreter<S, Resolver> interp(resolver, cfg, trace);
  if (trace) interp.record(state, "start");
  return interp.exec(state, program);
}

// Replays a ChoiceScript left to right.
template <class S>
class ScriptResolver {
 public:
  explicit ScriptResolver(const ChoiceScript& script) : script_(script) {}

  Side branch(const State<S>&) { return take<decision::Branch>("branch").side; }
  S random_value(Symbol, const State<S>&) { return scalar<S>(take<decision::RandomValue>("random value").value); }
  template <class MaxFn>
  S duration(const State<S>&, const hp::Ode&, MaxFn&&) {
    return scalar<S>(take<decision::Duration>("duration").value);
  }
  unsigned loop_count(const State<S>&) { return take<decision::LoopCount>("loop count").count; }

  void finish() const {
    if (next_ != script_.size())
      throw ScriptError("surplus decisions: " + std::to_string(script_.size() - next_) + " unused");
  }

 private:
  template <class D>
  const D& take(const char* what) {
    if (next_ >= script_.size()) throw ScriptError(std::string("script exhausted: ") + what + " required");
    const auto* d = std::get_if<D>(&script_[next_]);
    if (!d)
      throw ScriptError(std::string("script mismatch at decision ") + std::to_string(next_ + 1) + ": " + what +
                        " required, found '" + to_string(script_[next_]) + "'");
    ++next_;
    return *d;
  }

  const ChoiceScript& script_;
  std::size_t next_ = 0;
};

// Deterministic replay of a script. Aborted runs stop consuming decisions;
// decisions left over after a completed (non-aborted) run are an error.
template <class S>
RunResult<S> run(const State<S>& state, const Program& program, const ChoiceScript& script,
                 const SemanticsConfig& cfg = {}) {
  ScriptResolver<S> resolver(script);
  RunResult<S> result{Final<S>{state}, {}};
  result.outcome = run_with(state, program, resolver, cfg, &result.trace);
  if (std::holds_alternative<Final<S>>(result.outcome)) resolver.finish();
  return result;
}

}  // namespace hpcheck
