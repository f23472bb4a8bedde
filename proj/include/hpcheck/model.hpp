#pragma once

// The .hpmodel document format.
//
//   # comment
//   CONSTANTS
//   T = 1                      sample value; constraints come from INIT
//   DOMAINS
//   x in [-1, 5]               search interval, bounds may use constants
//   INIT / GUARANTEE           formula
//   ENV / AUX / CTRL / PLANT   hybrid program
//   INVARIANT zeta1            formula (repeatable, distinct names)
//   RELATION xc -> xcp         formula over xc and xcp (optional)
//
// Section keywords are uppercase and start at column 0.

#include <hpcheck/ast.hpp>
#include <hpcheck/parser.hpp>
#include <hpcheck/semantics.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hpcheck {

struct ConstantDecl {
  Symbol name;
  Rational sample;
  Formula constraint;  // conjunction of the INIT conjuncts over constants only
};

struct Interval {
  Term lo;
  Term hi;
};

struct NamedFormula {
  std::string name;
  Formula formula;
};

struct Relation {
  Symbol from;  // e
  Symbol to;    // e+
  Formula formula;
};

struct Model {
  std::string name;
  std::vector<ConstantDecl> constants;
  std::vector<std::pair<Symbol, Interval>> domains;
  Formula init = f_true();
  Formula guarantee = f_true();
  Program env = test(f_true());
  Program aux = test(f_true());
  Program ctrl = test(f_true());
  Program plant = test(f_true());
  std::vector<NamedFormula> invariants;
  std::optional<Relation> relation;

  // Derived by shape analysis.
  std::vector<Symbol> declared;  // variables then constants, first-appearance order
  std::vector<Symbol> state_vars;
  std::optional<Symbol> env_var;
  std::optional<Symbol> action_var;
  std::optional<Symbol> clock;
  std::optional<Formula> env_test;
  std::optional<Formula> aux_test;
  std::optional<Formula> safe;
  std::optional<Formula> control_law;
  bool nonstandard_shape = false;
  std::vector<std::string> warnings;

  bool is_constant(Symbol s) const {
    return std::any_of(constants.begin(), constants.end(), [&](const auto& c) { return c.name == s; });
  }

  const ConstantDecl* constant(Symbol s) const {
    for (const auto& c : constants)
      if (c.name == s) return &c;
    return nullptr;
  }

  const Formula* invariant(std::string_view n) const {
    for (const auto& i : invariants)
      if (i.name == n) return &i.formula;
    return nullptr;
  }

  const Interval* domain(Symbol s) const {
    for (const auto& [v, iv] : domains)
      if (v == s) return &iv;
    return nullptr;
  }

  bool is_declared(Symbol s) const { return std::find(declared.begin(), declared.end(), s) != declared.end(); }

  Program loop_body() const { return seq({env, aux, ctrl, plant}); }
  Program system() const { return loop(loop_body()); }

  // Sample values of all constants.
  State<Rational> constant_state() const {
    State<Rational> s;
    for (const auto& c : constants) s.set(c.name, c.sample);
    return s;
  }
};

inline constexpr long kDefaultDomainBound = 100;

// Search interval of a variable at the given constant values. Variables
// without a DOMAINS entry get [-100, 100].
inline std::pair<Rational, Rational> domain_bounds(const Model& m, Symbol v, const State<Rational>& constants) {
  if (auto* iv = m.domain(v)) return {eval_term(constants, iv->lo), eval_term(constants, iv->hi)};
  return {make_rational(-kDefaultDomainBound), make_rational(kDefaultDomainBound)};
}

namespace detail {

inline const char* const kSectionNames[] = {"CONSTANTS", "DOMAINS", "INIT",      "GUARANTEE", "ENV",
                                             "AUX",       "CTRL",    "PLANT",     "INVARIANT", "RELATION"};

struct Section {
  std::string keyword;
  std::string argument;  // text after the keyword on the header line
  SourceSpan header;
  std::string body;
  SourceSpan body_origin;
};

inline std::vector<Section> split_sections(std::string_view text) {
  std::vector<Section> out;
  std::size_t offset = 0, line = 1;
  bool preamble = true;
  while (offset <= text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string_view::npos) end = text.size();
    std::string_view row = text.substr(offset, end - offset);
    std::size_t word_end = 0;
    while (word_end < row.size() && std::isupper(static_cast<unsigned char>(row[word_end]))) ++word_end;
    std::string word(row.substr(0, word_end));
    bool is_header = (word_end == row.size() || !std::isalnum(static_cast<unsigned char>(row[word_end]))) &&
                     std::find(std::begin(kSectionNames), std::end(kSectionNames), word) != std::end(kSectionNames);
    if (is_header) {
      std::string arg(row.substr(word_end));
      if (auto hash = arg.find('#'); hash != std::string::npos) arg.resize(hash);
      arg.erase(0, arg.find_first_not_of(" \t\r"));
      arg.erase(arg.find_last_not_of(" \t\r") + 1);
      SourceSpan body_origin{end + 1, end + 1, line + 1, 1};
      out.push_back({word, arg, {offset, offset + word_end, line, 1}, "", body_origin});
      preamble = false;
    } else if (!preamble) {
      out.back().body += std::string(row) + "\n";
    } else {
      // only comments and blank lines may precede the first section
      auto first = row.find_first_not_of(" \t\r");
      if (first != std::string_view::npos && row[first] != '#')
        throw ParseError("text before first section", {offset + first, end, line, first + 1});
    }
    if (end == text.size()) break;
    offset = end + 1;
    ++line;
  }
  return out;
}

inline bool blank_body(const std::string& body) {
  std::istringstream in(body);
  std::string row;
  while (std::getline(in, row)) {
    if (auto hash = row.find('#'); hash != std::string::npos) row.resize(hash);
    if (row.find_first_not_of(" \t\r") != std::string::npos) return false;
  }
  return true;
}

// Calls f(text, origin) for each non-blank, non-comment line of a body.
template <class F>
void for_each_line(const Section& s, F&& f) {
  std::size_t offset = s.body_origin.start, line = s.body_origin.line;
  std::istringstream in(s.body);
  std::string row;
  while (std::getline(in, row)) {
    std::string content = row;
    if (auto hash = content.find('#'); hash != std::string::npos) content.resize(hash);
    auto first = content.find_first_not_of(" \t\r");
    if (first != std::string::npos) {
      auto last = content.find_last_not_of(" \t\r");
      f(content.substr(first, last - first + 1), SourceSpan{offset + first, offset + last + 1, line, first + 1});
    }
    offset += row.size() + 1;
    ++line;
  }
}

inline bool sign_constrained(Symbol c, const std::vector<Formula>& init_conjuncts) {
  for (const auto& f : init_conjuncts) {
    auto* cmp = std::get_if<fml::Compare>(&f.node().v);
    // c > 0, c < 0, c != 0 and their mirror images
    if (!cmp || cmp->op == CmpOp::Eq || cmp->op == CmpOp::Ge || cmp->op == CmpOp::Le) continue;
    auto is_var = [&](const Term& t) {
      auto* v = std::get_if<term::Var>(&t.node().v);
      return v && v->name == c;
    };
    auto is_zero = [](const Term& t) {
      auto* k = std::get_if<term::Const>(&t.node().v);
      return k && sgn(k->value) == 0;
    };
    if ((is_var(cmp->lhs) && is_zero(cmp->rhs)) || (is_zero(cmp->lhs) && is_var(cmp->rhs))) return true;
  }
  return false;
}

// Returns an error message when the divisor might vanish.
inline std::optional<std::string> divisor_problem(const Term& den, const std::vector<Formula>& init_conjuncts) {
  return std::visit(
      overloaded{
          [&](const term::Const& k) -> std::optional<std::string> {
            if (sgn(k.value) == 0) return std::string("division by zero");
            return std::nullopt;
          },
          [&](const term::Var& v) -> std::optional<std::string> {
            if (sign_constrained(v.name, init_conjuncts)) return std::nullopt;
            return "unconstrained divisor " + v.name.name();
          },
          [&](const term::Neg& n) { return divisor_problem(n.inner, init_conjuncts); },
          [&](const term::Pow& p) { return divisor_problem(p.base, init_conjuncts); },
          [&](const term::Mul& m) {
            auto l = divisor_problem(m.lhs, init_conjuncts);
            return l ? l : divisor_problem(m.rhs, init_conjuncts);
          },
          [&](const term::Div& d) {
            auto l = divisor_problem(d.num, init_conjuncts);
            return l ? l : divisor_problem(d.den, init_conjuncts);
          },
          [&](const auto&) -> std::optional<std::string> {
            for (auto v : free_variables(den))
              if (!sign_constrained(v, init_conjuncts)) return "unconstrained divisor " + v.name();
            return "unconstrained divisor " + pretty_print(den);
          },
      },
      den.node().v);
}

inline void collect_divisors(const Term& t, std::vector<Term>& out) {
  std::visit(overloaded{
                 [&](const term::Var&) {},
                 [&](const term::Const&) {},
                 [&](const term::Neg& p) { collect_divisors(p.inner, out); },
                 [&](const term::Pow& p) { collect_divisors(p.base, out); },
                 [&](const term::Div& p) {
                   out.push_back(p.den);
                   collect_divisors(p.num, out);
                   collect_divisors(p.den, out);
                 },
                 [&](const auto& p) {
                   collect_divisors(p.lhs, out);
                   collect_divisors(p.rhs, out);
                 },
             },
             t.node().v);
}

inline void collect_divisors(const Formula& f, std::vector<Term>& out);

inline void collect_divisors(const Program& p, std::vector<Term>& out) {
  std::visit(overloaded{
                 [&](const hp::Assign& a) { collect_divisors(a.value, out); },
                 [&](const hp::RandomAssign&) {},
                 [&](const hp::Test& a) { collect_divisors(a.cond, out); },
                 [&](const hp::Ode& a) {
                   for (const auto& eq : a.equations) collect_divisors(eq.rhs, out);
                   collect_divisors(a.domain, out);
                 },
                 [&](const hp::Choice& a) {
                   collect_divisors(a.lhs, out);
                   collect_divisors(a.rhs, out);
                 },
                 [&](const hp::Seq& a) {
                   collect_divisors(a.first, out);
                   collect_divisors(a.second, out);
                 },
                 [&](const hp::Loop& a) { collect_divisors(a.body, out); },
             },
             p.node().v);
}

inline void collect_divisors(const Formula& f, std::vector<Term>& out) {
  std::visit(overloaded{
                 [&](const fml::Compare& p) {
                   collect_divisors(p.lhs, out);
                   collect_divisors(p.rhs, out);
                 },
                 [&](const fml::True&) {},
                 [&](const fml::False&) {},
                 [&](const fml::Not& p) { collect_divisors(p.inner, out); },
                 [&](const fml::Forall& p) { collect_divisors(p.body, out); },
                 [&](const fml::Exists& p) { collect_divisors(p.body, out); },
                 [&](const fml::Box& p) {
                   collect_divisors(p.program, out);
                   collect_divisors(p.post, out);
                 },
                 [&](const fml::Diamond& p) {
                   collect_divisors(p.program, out);
                   collect_divisors(p.post, out);
                 },
                 [&](const auto& p) {
                   collect_divisors(p.lhs, out);
                   collect_divisors(p.rhs, out);
                 },
             },
             f.node().v);
}

inline void note_order(std::vector<Symbol>& order, const SymbolSet& vars, const Model& m) {
  for (auto v : vars)
    if (!m.is_constant(v) && std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
}

// Variables in order of first textual appearance.
inline void appearance_order(const Formula& f, std::vector<Symbol>& out);
inline void appearance_order(const Term& t, std::vector<Symbol>& out) {
  std::visit(overloaded{
                 [&](const term::Var& p) {
                   if (std::find(out.begin(), out.end(), p.name) == out.end()) out.push_back(p.name);
                 },
                 [&](const term::Const&) {},
                 [&](const term::Neg& p) { appearance_order(p.inner, out); },
                 [&](const term::Pow& p) { appearance_order(p.base, out); },
                 [&](const term::Div& p) {
                   appearance_order(p.num, out);
                   appearance_order(p.den, out);
                 },
                 [&](const auto& p) {
                   appearance_order(p.lhs, out);
                   appearance_order(p.rhs, out);
                 },
             },
             t.node().v);
}
inline void appearance_order(const Program& p, std::vector<Symbol>& out) {
  auto add = [&](Symbol s) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  };
  std::visit(overloaded{
                 [&](const hp::Assign& a) {
                   add(a.var);
                   appearance_order(a.value, out);
                 },
                 [&](const hp::RandomAssign& a) { add(a.var); },
                 [&](const hp::Test& a) { appearance_order(a.cond, out); },
                 [&](const hp::Ode& a) {
                   for (const auto& eq : a.equations) {
                     add(eq.var);
                     appearance_order(eq.rhs, out);
                   }
                   appearance_order(a.domain, out);
                 },
                 [&](const hp::Choice& a) {
                   appearance_order(a.lhs, out);
                   appearance_order(a.rhs, out);
                 },
                 [&](const hp::Seq& a) {
                   appearance_order(a.first, out);
                   appearance_order(a.second, out);
                 },
                 [&](const hp::Loop& a) { appearance_order(a.body, out); },
             },
             p.node().v);
}
inline void appearance_order(const Formula& f, std::vector<Symbol>& out) {
  std::visit(overloaded{
                 [&](const fml::Compare& p) {
                   appearance_order(p.lhs, out);
                   appearance_order(p.rhs, out);
                 },
                 [&](const fml::True&) {},
                 [&](const fml::False&) {},
                 [&](const fml::Not& p) { appearance_order(p.inner, out); },
                 [&](const fml::Forall& p) {
                   std::vector<Symbol> inner;
                   appearance_order(p.body, inner);
                   for (auto s : inner)
                     if (!(s == p.var) && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
                 },
                 [&](const fml::Exists& p) {
                   std::vector<Symbol> inner;
                   appearance_order(p.body, inner);
                   for (auto s : inner)
                     if (!(s == p.var) && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
                 },
                 [&](const fml::Box& p) {
                   appearance_order(p.program, out);
                   appearance_order(p.post, out);
                 },
                 [&](const fml::Diamond& p) {
                   appearance_order(p.program, out);
                   appearance_order(p.post, out);
                 },
                 [&](const auto& p) {
                   appearance_order(p.lhs, out);
                   appearance_order(p.rhs, out);
                 },
             },
             f.node().v);
}

// x := *; ?P
inline std::optional<std::pair<Symbol, Formula>> assign_then_test(const Program& p) {
  auto* s = std::get_if<hp::Seq>(&p.node().v);
  if (!s) return std::nullopt;
  auto* r = std::get_if<hp::RandomAssign>(&s->first.node().v);
  auto* t = std::get_if<hp::Test>(&s->second.node().v);
  if (!r || !t) return std::nullopt;
  return std::make_pair(r->var, t->cond);
}

inline void analyse_shape(Model& m) {
  bool ok = true;
  if (auto env = assign_then_test(m.env)) {
    m.env_var = env->first;
    m.env_test = env->second;
  } else {
    ok = false;
  }
  if (auto aux = assign_then_test(m.aux)) {
    m.action_var = aux->first;
    m.aux_test = aux->second;
  } else {
    ok = false;
  }

  // if (!safe) { a := *; ?C }
  bool ctrl_ok = false;
  if (auto* c = std::get_if<hp::Choice>(&m.ctrl.node().v)) {
    auto* guarded = std::get_if<hp::Seq>(&c->lhs.node().v);
    auto* skip = std::get_if<hp::Test>(&c->rhs.node().v);
    if (guarded && skip) {
      auto* guard = std::get_if<hp::Test>(&guarded->first.node().v);
      auto body = assign_then_test(guarded->second);
      if (guard && body) {
        auto* neg = std::get_if<fml::Not>(&guard->cond.node().v);
        if (neg && skip->cond == f_not(guard->cond) && m.action_var && body->first == *m.action_var) {
          m.safe = neg->inner;
          m.control_law = body->second;
          ctrl_ok = true;
        }
      }
    }
  }
  ok = ok && ctrl_ok;

  // tau := 0; {s' = f(s), tau' = 1 & F & tau <= T}
  bool plant_ok = false;
  const hp::Ode* ode = nullptr;
  if (auto* s = std::get_if<hp::Seq>(&m.plant.node().v)) {
    auto* reset = std::get_if<hp::Assign>(&s->first.node().v);
    ode = std::get_if<hp::Ode>(&s->second.node().v);
    if (reset && ode && reset->value == num(0)) {
      bool unit_rate = false;
      for (const auto& eq : ode->equations)
        if (eq.var == reset->var && eq.rhs == num(1)) unit_rate = true;
      std::vector<Formula> parts;
      conjuncts(ode->domain, parts);
      bool bounded = std::any_of(parts.begin(), parts.end(), [&](const Formula& f) {
        auto* cmp = std::get_if<fml::Compare>(&f.node().v);
        if (!cmp || cmp->op != CmpOp::Le || !(cmp->lhs == var(reset->var))) return false;
        auto* bound = std::get_if<term::Var>(&cmp->rhs.node().v);
        return bound && m.is_constant(bound->name);
      });
      if (unit_rate && bounded) {
        m.clock = reset->var;
        plant_ok = true;
      }
    }
  }
  if (!ode) {
    ode = std::get_if<hp::Ode>(&m.plant.node().v);
  }
  if (ode) {
    for (const auto& eq : ode->equations)
      if (!m.clock || !(eq.var == *m.clock)) m.state_vars.push_back(eq.var);
  }
  ok = ok && plant_ok;

  // env writes only e; aux and ctrl write only a; plant writes only s and tau
  if (ok) {
    auto only = [](const Program& p, std::vector<Symbol> allowed) {
      for (auto v : bound_variables(p))
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) return false;
      return true;
    };
    std::vector<Symbol> plant_writes = m.state_vars;
    plant_writes.push_back(*m.clock);
    ok = only(m.env, {*m.env_var}) && only(m.aux, {*m.action_var}) && only(m.ctrl, {*m.action_var}) &&
         only(m.plant, plant_writes) && *m.env_var != *m.action_var;
  }
  m.nonstandard_shape = !ok;
}

}  // namespace detail

inline Model parse_model(std::string_view text, std::string name = "") {
  using detail::Section;
  Model m;
  m.name = std::move(name);
  auto sections = detail::split_sections(text);

  std::map<std::string, const Section*> single;
  for (const auto& s : sections) {
    if (s.keyword == "INVARIANT") {
      if (s.argument.empty()) throw ParseError("INVARIANT needs a name", s.header);
      continue;
    }
    if (!single.emplace(s.keyword, &s).second) throw ParseError("duplicate section " + s.keyword, s.header);
    if (s.keyword != "RELATION" && !s.argument.empty())
      throw ParseError("unexpected text after " + s.keyword, s.header);
  }
  for (const char* required : {"CONSTANTS", "INIT", "GUARANTEE", "ENV", "AUX", "CTRL", "PLANT"})
    if (!single.count(required)) throw ParseError(std::string("missing section ") + required, SourceSpan{});
  for (const auto& s : sections)
    if (s.keyword != "CONSTANTS" && s.keyword != "DOMAINS" && detail::blank_body(s.body))
      throw ParseError("empty section " + s.keyword, s.header);

  auto formula_of = [&](const Section& s) { return parse_formula_at(s.body, s.body_origin); };
  auto program_of = [&](const Section& s) { return parse_program_at(s.body, s.body_origin); };

  // CONSTANTS: name = value
  std::map<Symbol, SourceSpan> constant_spans;
  detail::for_each_line(*single["CONSTANTS"], [&](const std::string& line, SourceSpan where) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'NAME = VALUE'", where);
    std::string lhs = line.substr(0, eq), rhs = line.substr(eq + 1);
    lhs.erase(lhs.find_last_not_of(" \t") + 1);
    rhs.erase(0, rhs.find_first_not_of(" \t"));
    auto toks = detail::tokenize(lhs, where.start, where.line, where.column);
    if (toks.size() != 2 || toks[0].kind != detail::Tok::Ident) throw ParseError("expected constant name", where);
    SourceSpan value_at{where.start + eq + 1, where.end, where.line, where.column + eq + 1};
    Term value = parse_term_at(rhs, value_at);
    if (!free_variables(value).empty()) throw ParseError("constant value must be numeric", value_at);
    Symbol c(toks[0].text);
    if (m.is_constant(c)) throw ParseError("duplicate constant " + c.name(), where);
    m.constants.push_back({c, eval_term(State<Rational>{}, value), f_true()});
    constant_spans[c] = where;
  });

  m.init = formula_of(*single["INIT"]);
  m.guarantee = formula_of(*single["GUARANTEE"]);
  m.env = program_of(*single["ENV"]);
  m.aux = program_of(*single["AUX"]);
  m.ctrl = program_of(*single["CTRL"]);
  m.plant = program_of(*single["PLANT"]);

  std::vector<Symbol> order;
  detail::appearance_order(m.init, order);
  detail::appearance_order(m.guarantee, order);
  for (const auto* p : {&m.env, &m.aux, &m.ctrl, &m.plant}) detail::appearance_order(*p, order);
  std::vector<Symbol> vars;
  for (auto v : order)
    if (!m.is_constant(v)) vars.push_back(v);

  if (auto it = single.find("RELATION"); it != single.end()) {
    const Section& s = *it->second;
    auto arrow = s.argument.find("->");
    if (arrow == std::string::npos) throw ParseError("expected 'RELATION e -> e_next'", s.header);
    auto trim = [](std::string t) {
      t.erase(0, t.find_first_not_of(" \t"));
      t.erase(t.find_last_not_of(" \t") + 1);
      return t;
    };
    Symbol from(trim(s.argument.substr(0, arrow))), to(trim(s.argument.substr(arrow + 2)));
    Formula r = formula_of(s);
    if (std::find(vars.begin(), vars.end(), from) == vars.end())
      throw ParseError("relation variable " + from.name() + " does not occur in the model", s.header);
    if (std::find(vars.begin(), vars.end(), to) != vars.end() || m.is_constant(to))
      throw ParseError("relation successor " + to.name() + " must be a fresh name", s.header);
    m.relation = Relation{from, to, r};
    vars.push_back(to);
  }
  m.declared = vars;
  for (const auto& c : m.constants) m.declared.push_back(c.name);

  for (const auto& s : sections) {
    if (s.keyword != "INVARIANT") continue;
    if (m.invariant(s.argument)) throw ParseError("duplicate invariant " + s.argument, s.header);
    m.invariants.push_back({s.argument, formula_of(s)});
  }

  // Every formula and program may mention only declared names.
  auto check_known = [&](const SymbolSet& used, SourceSpan where) {
    for (auto v : used)
      if (!m.is_declared(v)) throw ParseError("unknown variable " + v.name(), where);
  };
  for (const auto& s : sections) {
    if (s.keyword == "INVARIANT") check_known(free_variables(*m.invariant(s.argument)), s.body_origin);
    if (s.keyword == "RELATION") check_known(free_variables(m.relation->formula), s.body_origin);
  }

  // Constant constraints are the INIT conjuncts over constants only.
  std::vector<Formula> init_parts;
  conjuncts(m.init, init_parts);
  State<Rational> samples = m.constant_state();
  for (auto& c : m.constants) {
    std::vector<Formula> mine;
    for (const auto& part : init_parts) {
      auto fv = free_variables(part);
      bool constants_only = !fv.empty() && std::all_of(fv.begin(), fv.end(), [&](Symbol s) { return m.is_constant(s); });
      if (constants_only && fv.count(c.name)) mine.push_back(part);
    }
    c.constraint = conjunction(mine);
    for (const auto& part : mine)
      if (!eval_fol(samples, part))
        throw ParseError("sample value of " + c.name.name() + " violates " + pretty_print(part),
                         constant_spans[c.name]);
  }

  // DOMAINS: x in [lo, hi]
  if (auto it = single.find("DOMAINS"); it != single.end()) {
    detail::for_each_line(*it->second, [&](const std::string& line, SourceSpan where) {
      auto toks = detail::tokenize(line, where.start, where.line, where.column);
      if (toks.size() < 2 || toks[0].kind != detail::Tok::Ident || toks[1].text != "in")
        throw ParseError("expected 'VAR in [LO, HI]'", where);
      Symbol v(toks[0].text);
      if (!m.is_declared(v) || m.is_constant(v)) throw ParseError("unknown variable in DOMAINS: " + v.name(), where);
      if (m.domain(v)) throw ParseError("duplicate domain for " + v.name(), where);
      auto open = line.find('['), comma = line.rfind(','), close = line.rfind(']');
      if (open == std::string::npos || comma == std::string::npos || close == std::string::npos || comma < open ||
          close < comma || line.find_first_not_of(" \t", close + 1) != std::string::npos)
        throw ParseError("expected 'VAR in [LO, HI]'", where);
      auto at = [&](std::size_t k) { return SourceSpan{where.start + k, where.end, where.line, where.column + k}; };
      Term lo = parse_term_at(line.substr(open + 1, comma - open - 1), at(open + 1));
      Term hi = parse_term_at(line.substr(comma + 1, close - comma - 1), at(comma + 1));
      for (const auto* t : {&lo, &hi})
        for (auto s : free_variables(*t))
          if (!m.is_constant(s)) throw ParseError("domain bounds may only use constants", where);
      if (eval_term(samples, lo) > eval_term(samples, hi)) throw ParseError("empty domain for " + v.name(), where);
      m.domains.push_back({v, Interval{lo, hi}});
    });
  }

  // Divisions need a sign-constrained divisor.
  auto check_divisors = [&](const auto& node, const Section& where) {
    std::vector<Term> divisors;
    detail::collect_divisors(node, divisors);
    for (const auto& d : divisors)
      if (auto problem = detail::divisor_problem(d, init_parts)) throw ParseError(*problem, where.body_origin);
  };
  check_divisors(m.init, *single["INIT"]);
  check_divisors(m.guarantee, *single["GUARANTEE"]);
  check_divisors(m.env, *single["ENV"]);
  check_divisors(m.aux, *single["AUX"]);
  check_divisors(m.ctrl, *single["CTRL"]);
  check_divisors(m.plant, *single["PLANT"]);
  for (const auto& s : sections) {
    if (s.keyword == "INVARIANT") check_divisors(*m.invariant(s.argument), s);
    if (s.keyword == "RELATION") check_divisors(m.relation->formula, s);
  }

  detail::analyse_shape(m);
  return m;
}

// Adds the INVARIANT sections of a fragment document to a model.
inline void add_invariants(Model& m, std::string_view fragment) {
  for (const auto& s : detail::split_sections(fragment)) {
    if (s.keyword != "INVARIANT") throw ParseError("fragment may only contain INVARIANT sections", s.header);
    if (s.argument.empty()) throw ParseError("INVARIANT needs a name", s.header);
    Formula f = parse_formula_at(s.body, s.body_origin);
    for (auto v : free_variables(f))
      if (!m.is_declared(v)) throw ParseError("unknown variable " + v.name(), s.body_origin);
    std::vector<Term> divisors;
    detail::collect_divisors(f, divisors);
    std::vector<Formula> init_parts;
    conjuncts(m.init, init_parts);
    for (const auto& d : divisors)
      if (auto problem = detail::divisor_problem(d, init_parts)) throw ParseError(*problem, s.body_origin);
    if (const Formula* existing = m.invariant(s.argument)) {
      if (!(*existing == f)) throw ParseError("conflicting definitions of invariant " + s.argument, s.header);
      continue;
    }
    m.invariants.push_back({s.argument, f});
  }
}

inline std::string pretty_print(const Model& m) {
  std::ostringstream os;
  os << "CONSTANTS\n";
  for (const auto& c : m.constants) os << c.name.name() << " = " << to_string(c.sample) << "\n";
  if (!m.domains.empty()) {
    os << "\nDOMAINS\n";
    for (const auto& [v, iv] : m.domains)
      os << v.name() << " in [" << pretty_print(iv.lo) << ", " << pretty_print(iv.hi) << "]\n";
  }
  os << "\nINIT\n" << pretty_print(m.init) << "\n";
  os << "\nGUARANTEE\n" << pretty_print(m.guarantee) << "\n";
  os << "\nENV\n" << pretty_print(m.env) << "\n";
  os << "\nAUX\n" << pretty_print(m.aux) << "\n";
  os << "\nCTRL\n" << pretty_print(m.ctrl) << "\n";
  os << "\nPLANT\n" << pretty_print(m.plant) << "\n";
  for (const auto& inv : m.invariants) os << "\nINVARIANT " << inv.name << "\n" << pretty_print(inv.formula) << "\n";
  if (m.relation)
    os << "\nRELATION " << m.relation->from.name() << " -> " << m.relation->to.name() << "\n"
       << pretty_print(m.relation->formula) << "\n";
  return os.str();
}

}  // namespace hpcheck
