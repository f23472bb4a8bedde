#pragma once

// Proof obligations over a model: loop-rule branches, the exploiting-
// controller conditions (rho, gamma, exploit witness), the unchallenged-
// controller conditions (chi, not chi, psi) and the friendliness probe.

#include <hpcheck/ast.hpp>
#include <hpcheck/model.hpp>
#include <hpcheck/parser.hpp>

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpcheck {

class ObligationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ObligationKind { FalsifyUniversal, FindWitness };

inline const char* to_string(ObligationKind k) {
  return k == ObligationKind::FalsifyUniversal ? "falsify-universal" : "find-witness";
}

struct SearchVar {
  Symbol name;
  Rational lo;
  Rational hi;
  Rational step = 0;  // > 0 restricts the variable to lo, lo + step, ..., hi

  std::uint64_t lattice_points() const {
    if (sgn(step) <= 0) return 0;
    Rational n = (hi - lo) / step;
    if (n.get_den() != 1) throw std::invalid_argument("step does not divide the box of " + name.name());
    return n.get_num().get_ui() + 1;
  }
};

struct Obligation {
  std::string name;
  Formula formula = f_true();  // closed: quantifier prefix over `box`, then the matrix
  Formula matrix = f_true();
  ObligationKind kind = ObligationKind::FalsifyUniversal;
  std::vector<SearchVar> box;                             // quantified variables in prefix order
  std::vector<std::pair<Symbol, Rational>> constants;     // fixed values
  std::vector<Symbol> scratch;                            // declared but overwritten before use; start at 0
  std::vector<SearchVar> choices;                         // value ranges for x := * inside programs
  std::vector<std::string> warnings;

  const SearchVar* search_var(Symbol s) const {
    for (const auto& v : box)
      if (v.name == s) return &v;
    return nullptr;
  }
};

struct ObligationOptions {
  bool search_constants = false;
  std::map<Symbol, Rational> constant_values;                  // overrides of sample values
  std::map<Symbol, std::pair<Rational, Rational>> boxes;       // overrides of DOMAINS
  std::map<Symbol, Rational> steps;                            // lattice restriction per variable
};

namespace detail {

inline Rational constant_value(const ConstantDecl& c, const ObligationOptions& opt) {
  if (auto it = opt.constant_values.find(c.name); it != opt.constant_values.end()) return it->second;
  return c.sample;
}

inline State<Rational> constant_values(const Model& m, const ObligationOptions& opt) {
  State<Rational> s;
  for (const auto& c : m.constants) s.set(c.name, constant_value(c, opt));
  return s;
}

inline void require_declared(const Model& m, const Formula& f, const char* what) {
  for (auto v : free_variables(f))
    if (!m.is_declared(v)) throw ObligationError(std::string("undeclared variable ") + v.name() + " in " + what);
}

inline Rational step_of(const ObligationOptions& opt, Symbol v, Symbol source) {
  if (auto it = opt.steps.find(v); it != opt.steps.end()) return it->second;
  if (auto it = opt.steps.find(source); it != opt.steps.end()) return it->second;
  return 0;
}

// Closes `matrix` over the variables it reads. `domain_of` maps fresh
// copies (e.g. e0) back to the variable whose search box they share.
inline Obligation close(const Model& m, std::string name, Formula matrix, ObligationKind kind,
                        const ObligationOptions& opt, const std::map<Symbol, Symbol>& domain_of = {}) {
  Obligation ob;
  ob.name = std::move(name);
  ob.kind = kind;
  State<Rational> consts = constant_values(m, opt);

  SymbolSet reads = read_variables(matrix);
  std::vector<Symbol> quantified;
  for (auto v : m.declared)
    if (reads.count(v) && !m.is_constant(v)) quantified.push_back(v);
  for (auto v : reads)
    if (!m.is_declared(v) && std::find(quantified.begin(), quantified.end(), v) == quantified.end()) {
      if (!domain_of.count(v)) throw ObligationError("undeclared variable " + v.name() + " in " + ob.name);
      quantified.push_back(v);
    }

  for (auto v : quantified) {
    Symbol source = domain_of.count(v) ? domain_of.at(v) : v;
    std::pair<Rational, Rational> bounds;
    if (auto it = opt.boxes.find(v); it != opt.boxes.end()) {
      bounds = it->second;
    } else if (auto it2 = opt.boxes.find(source); it2 != opt.boxes.end()) {
      bounds = it2->second;
    } else {
      if (!m.domain(source)) ob.warnings.push_back("no domain for " + v.name() + ", using [-100, 100]");
      bounds = domain_bounds(m, source, consts);
    }
    if (bounds.first > bounds.second) throw ObligationError("empty search box for " + v.name());
    ob.box.push_back({v, bounds.first, bounds.second, step_of(opt, v, source)});
  }

  if (opt.search_constants) {
    std::vector<Formula> constraints;
    for (const auto& c : m.constants) {
      std::pair<Rational, Rational> bounds;
      if (auto it = opt.boxes.find(c.name); it != opt.boxes.end()) {
        bounds = it->second;
      } else {
        Rational v = constant_value(c, opt);
        bounds = sgn(v) >= 0 ? std::make_pair(Rational(0), Rational(2 * v)) : std::make_pair(Rational(2 * v), Rational(0));
      }
      ob.box.push_back({c.name, bounds.first, bounds.second});
      if (!std::holds_alternative<fml::True>(c.constraint.node().v)) {
        bool seen = false;
        for (const auto& k : constraints) seen = seen || k == c.constraint;
        if (!seen) constraints.push_back(c.constraint);
      }
    }
    if (!constraints.empty()) {
      Formula pre = conjunction(constraints);
      matrix = kind == ObligationKind::FalsifyUniversal ? f_implies(pre, matrix) : f_and(pre, matrix);
    }
  } else {
    for (const auto& c : m.constants) ob.constants.emplace_back(c.name, constant_value(c, opt));
  }

  for (auto v : m.declared) {
    bool bound = ob.search_var(v) != nullptr;
    bool constant = false;
    for (const auto& [c, value] : ob.constants) constant = constant || c == v;
    if (!bound && !constant) ob.scratch.push_back(v);
  }

  for (auto v : m.declared) {
    if (m.is_constant(v)) continue;
    std::pair<Rational, Rational> bounds;
    if (auto it = opt.boxes.find(v); it != opt.boxes.end()) bounds = it->second;
    else bounds = domain_bounds(m, v, consts);
    ob.choices.push_back({v, bounds.first, bounds.second, step_of(opt, v, v)});
  }

  ob.matrix = matrix;
  Formula closed = matrix;
  for (auto it = ob.box.rbegin(); it != ob.box.rend(); ++it)
    closed = kind == ObligationKind::FalsifyUniversal ? make_formula(fml::Forall{it->name, closed})
                                                      : make_formula(fml::Exists{it->name, closed});
  ob.formula = closed;
  return ob;
}

inline const Relation& require_relation(const Model& m) {
  if (!m.relation) throw ObligationError("model has no RELATION section");
  return *m.relation;
}

inline Symbol env_var(const Model& m) {
  if (!m.env_var) throw ObligationError("env does not have the shape 'e := *; ?P'");
  return *m.env_var;
}

}  // namespace detail

// (i) init -> zeta, (ii) zeta -> [env; aux; ctrl; plant] zeta, (iii) zeta -> guarantee
inline std::vector<Obligation> loop_obligations(const Model& m, const Formula& zeta, const ObligationOptions& opt = {}) {
  detail::require_declared(m, zeta, "invariant");
  using K = ObligationKind;
  return {
      detail::close(m, "loop (i)", f_implies(m.init, zeta), K::FalsifyUniversal, opt),
      detail::close(m, "loop (ii)", f_implies(zeta, box(m.loop_body(), zeta)), K::FalsifyUniversal, opt),
      detail::close(m, "loop (iii)", f_implies(zeta, m.guarantee), K::FalsifyUniversal, opt),
  };
}

// Loop branch (ii) under its own name.
inline Obligation gamma_obligation(const Model& m, const Formula& zeta, const ObligationOptions& opt = {}) {
  detail::require_declared(m, zeta, "invariant");
  return detail::close(m, "gamma", f_implies(zeta, box(m.loop_body(), zeta)), ObligationKind::FalsifyUniversal, opt);
}

// forall s e e1. zeta & R(e, e1) -> <env>(e = e1)
inline Obligation rho_obligation(const Model& m, const Formula& zeta, const ObligationOptions& opt = {}) {
  const Relation& r = detail::require_relation(m);
  detail::require_declared(m, zeta, "invariant");
  Symbol e = detail::env_var(m);
  if (!(r.from == e)) throw ObligationError("relation must range over the env variable " + e.name());
  Formula matrix = f_implies(f_and(zeta, r.formula), diamond(m.env, compare(CmpOp::Eq, var(e), var(r.to))));
  return detail::close(m, "rho", matrix, ObligationKind::FalsifyUniversal, opt, {{r.to, e}});
}

// exists s e e0. zeta(s, e0) & R(e0, e) & <aux; ctrl; plant> !zeta(s, e)
inline Obligation exploit_witness_formula(const Model& m, const Formula& zeta, const ObligationOptions& opt = {}) {
  const Relation& r = detail::require_relation(m);
  detail::require_declared(m, zeta, "invariant");
  Symbol e = detail::env_var(m);
  SymbolSet avoid;
  collect_all_symbols(zeta, avoid);
  collect_all_symbols(r.formula, avoid);
  for (auto s : m.declared) avoid.insert(s);
  Symbol e0 = fresh_symbol(e, avoid);
  Formula zeta_e0 = substitute(zeta, e, var(e0));
  Formula r_e0_e = substitute(substitute(r.formula, e, var(e0)), r.to, var(e));
  Formula matrix = f_and(f_and(zeta_e0, r_e0_e), diamond(seq({m.aux, m.ctrl, m.plant}), f_not(zeta)));
  return detail::close(m, "exploit", matrix, ObligationKind::FindWitness, opt, {{e0, e}});
}

// Structural negation: flips the quantifier kind and pushes the negation
// one level into the matrix.
inline Obligation negate(const Obligation& ob, std::string name) {
  Obligation out = ob;
  out.name = std::move(name);
  out.kind = ob.kind == ObligationKind::FalsifyUniversal ? ObligationKind::FindWitness : ObligationKind::FalsifyUniversal;
  out.matrix = push_negation(ob.matrix);
  Formula closed = out.matrix;
  for (auto it = out.box.rbegin(); it != out.box.rend(); ++it)
    closed = out.kind == ObligationKind::FalsifyUniversal ? make_formula(fml::Forall{it->name, closed})
                                                          : make_formula(fml::Exists{it->name, closed});
  out.formula = closed;
  return out;
}

struct ChiPair {
  Obligation chi;
  Obligation not_chi;
};

// chi: zeta -> [env; aux; plant] zeta, and its negation
// not chi: zeta & <env; aux; plant> !zeta
inline ChiPair chi_obligation(const Model& m, const Formula& zeta, const ObligationOptions& opt = {}) {
  detail::require_declared(m, zeta, "invariant");
  Obligation chi = detail::close(m, "chi", f_implies(zeta, box(seq({m.env, m.aux, m.plant}), zeta)),
                                 ObligationKind::FalsifyUniversal, opt);
  return {chi, negate(chi, "not-chi")};
}

// exists s e. zeta(a1) & <env; aux>(!zeta(a) & <plant> !zeta(a1)),
// where zeta(a1) instantiates `var` by `term` in the general invariant.
inline Obligation psi_obligation(const Model& m, const Formula& zeta_general, Symbol instantiation_var,
                                 const Term& instantiation_term, const ObligationOptions& opt = {}) {
  detail::require_declared(m, zeta_general, "invariant");
  if (!free_variables(zeta_general).count(instantiation_var))
    throw ObligationError(instantiation_var.name() + " is not free in the general invariant");
  Formula zeta1 = substitute(zeta_general, instantiation_var, instantiation_term);
  Formula matrix =
      f_and(zeta1, diamond(seq(m.env, m.aux), f_and(f_not(zeta_general), diamond(m.plant, f_not(zeta1)))));
  return detail::close(m, "psi", matrix, ObligationKind::FindWitness, opt);
}

// exists s e e1. R(e, e1) & !<env>(e = e1)
inline Obligation friendliness_probe(const Model& m, const ObligationOptions& opt = {}) {
  const Relation& r = detail::require_relation(m);
  Symbol e = detail::env_var(m);
  Formula matrix = f_and(r.formula, f_not(diamond(m.env, compare(CmpOp::Eq, var(e), var(r.to)))));
  return detail::close(m, "friendly", matrix, ObligationKind::FindWitness, opt, {{r.to, e}});
}

inline nlohmann::ordered_json to_json(const Obligation& ob) {
  nlohmann::ordered_json j;
  j["name"] = ob.name;
  j["formula"] = pretty_print(ob.formula);
  j["kind"] = to_string(ob.kind);
  auto& box = j["box"] = nlohmann::ordered_json::object();
  for (const auto& v : ob.box) box[v.name.name()] = {to_string(v.lo), to_string(v.hi)};
  auto& consts = j["constants"] = nlohmann::ordered_json::object();
  for (const auto& [c, value] : ob.constants) consts[c.name()] = to_string(value);
  return j;
}

}  // namespace hpcheck
