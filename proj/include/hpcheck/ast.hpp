#pragma once

// Syntax trees for terms, formulas of real arithmetic with dL modalities,
// and hybrid programs. All nodes are immutable and shared.

#include <hpcheck/rational.hpp>
#include <hpcheck/symbol.hpp>

#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace hpcheck {

struct TermNode;
struct FormulaNode;
struct ProgramNode;

using SymbolSet = std::set<Symbol>;

class Term {
 public:
  explicit Term(std::shared_ptr<const TermNode> node) : node_(std::move(node)) {}
  const TermNode& node() const { return *node_; }
  const TermNode* get() const { return node_.get(); }

 private:
  std::shared_ptr<const TermNode> node_;
};

class Formula {
 public:
  explicit Formula(std::shared_ptr<const FormulaNode> node) : node_(std::move(node)) {}
  const FormulaNode& node() const { return *node_; }
  const FormulaNode* get() const { return node_.get(); }

 private:
  std::shared_ptr<const FormulaNode> node_;
};

class Program {
 public:
  explicit Program(std::shared_ptr<const ProgramNode> node) : node_(std::move(node)) {}
  const ProgramNode& node() const { return *node_; }
  const ProgramNode* get() const { return node_.get(); }

 private:
  std::shared_ptr<const ProgramNode> node_;
};

// ---------------------------------------------------------------- terms

namespace term {
struct Var { Symbol name; };
struct Const { Rational value; };
struct Neg { Term inner; };
struct Add { Term lhs, rhs; };
struct Sub { Term lhs, rhs; };
struct Mul { Term lhs, rhs; };
// Divisor is a rational constant or a term over sign-constrained model constants.
struct Div { Term num, den; };
struct Pow { Term base; unsigned exponent; };
}  // namespace term

struct TermNode {
  std::variant<term::Var, term::Const, term::Neg, term::Add, term::Sub, term::Mul, term::Div, term::Pow> v;
};

// ------------------------------------------------------------- formulas

enum class CmpOp { Ge, Gt, Le, Lt, Eq, Ne };

inline const char* to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Ge: return ">=";
    case CmpOp::Gt: return ">";
    case CmpOp::Le: return "<=";
    case CmpOp::Lt: return "<";
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
  }
  return "?";
}

namespace fml {
struct Compare { CmpOp op; Term lhs, rhs; };
struct True {};
struct False {};
struct Not { Formula inner; };
struct And { Formula lhs, rhs; };
struct Or { Formula lhs, rhs; };
struct Implies { Formula lhs, rhs; };
struct Iff { Formula lhs, rhs; };
struct Forall { Symbol var; Formula body; };
struct Exists { Symbol var; Formula body; };
struct Box { Program program; Formula post; };
struct Diamond { Program program; Formula post; };
}  // namespace fml

struct FormulaNode {
  std::variant<fml::Compare, fml::True, fml::False, fml::Not, fml::And, fml::Or, fml::Implies, fml::Iff,
               fml::Forall, fml::Exists, fml::Box, fml::Diamond>
      v;
};

// ------------------------------------------------------------- programs

struct OdeEquation {
  Symbol var;
  Term rhs;
};

namespace hp {
struct Assign { Symbol var; Term value; };
struct RandomAssign { Symbol var; };
struct Test { Formula cond; };
struct Ode { std::vector<OdeEquation> equations; Formula domain; };
struct Choice { Program lhs, rhs; };
struct Seq { Program first, second; };
struct Loop { Program body; };
}  // namespace hp

struct ProgramNode {
  std::variant<hp::Assign, hp::RandomAssign, hp::Test, hp::Ode, hp::Choice, hp::Seq, hp::Loop> v;
};

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// ---------------------------------------------------------- construction

inline Term make_term(auto&& alt) {
  return Term(std::make_shared<const TermNode>(TermNode{std::forward<decltype(alt)>(alt)}));
}
inline Formula make_formula(auto&& alt) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{std::forward<decltype(alt)>(alt)}));
}
inline Program make_program(auto&& alt) {
  return Program(std::make_shared<const ProgramNode>(ProgramNode{std::forward<decltype(alt)>(alt)}));
}

inline Term var(Symbol s) { return make_term(term::Var{s}); }
inline Term num(Rational r) { return make_term(term::Const{std::move(r)}); }
inline Term num(long n, long d = 1) { return num(make_rational(n, d)); }
inline Term operator+(Term a, Term b) { return make_term(term::Add{std::move(a), std::move(b)}); }
inline Term operator-(Term a, Term b) { return make_term(term::Sub{std::move(a), std::move(b)}); }
inline Term operator*(Term a, Term b) { return make_term(term::Mul{std::move(a), std::move(b)}); }
inline Term operator/(Term a, Term b) { return make_term(term::Div{std::move(a), std::move(b)}); }
inline Term operator-(Term a) { return make_term(term::Neg{std::move(a)}); }
inline Term pow(Term base, unsigned exponent) { return make_term(term::Pow{std::move(base), exponent}); }

inline Formula compare(CmpOp op, Term l, Term r) { return make_formula(fml::Compare{op, std::move(l), std::move(r)}); }
inline Formula f_true() { return make_formula(fml::True{}); }
inline Formula f_false() { return make_formula(fml::False{}); }
inline Formula f_not(Formula f) { return make_formula(fml::Not{std::move(f)}); }
inline Formula f_and(Formula a, Formula b) { return make_formula(fml::And{std::move(a), std::move(b)}); }
inline Formula f_or(Formula a, Formula b) { return make_formula(fml::Or{std::move(a), std::move(b)}); }
inline Formula f_implies(Formula a, Formula b) { return make_formula(fml::Implies{std::move(a), std::move(b)}); }
inline Formula f_iff(Formula a, Formula b) { return make_formula(fml::Iff{std::move(a), std::move(b)}); }
inline Formula box(Program p, Formula post) { return make_formula(fml::Box{std::move(p), std::move(post)}); }
inline Formula diamond(Program p, Formula post) { return make_formula(fml::Diamond{std::move(p), std::move(post)}); }
inline Formula forall(Symbol v, Formula body);
inline Formula exists(Symbol v, Formula body);

inline Program assign(Symbol v, Term t) { return make_program(hp::Assign{v, std::move(t)}); }
inline Program random_assign(Symbol v) { return make_program(hp::RandomAssign{v}); }
inline Program test(Formula f) { return make_program(hp::Test{std::move(f)}); }
inline Program choice(Program a, Program b) { return make_program(hp::Choice{std::move(a), std::move(b)}); }
inline Program seq(Program a, Program b) { return make_program(hp::Seq{std::move(a), std::move(b)}); }
inline Program loop(Program body) { return make_program(hp::Loop{std::move(body)}); }
inline Program ode(std::vector<OdeEquation> equations, Formula domain);

// Right-nested sequence of one or more programs.
inline Program seq(std::vector<Program> parts) {
  if (parts.empty()) throw std::invalid_argument("empty sequence");
  Program out = parts.back();
  for (auto it = parts.rbegin() + 1; it != parts.rend(); ++it) out = seq(*it, out);
  return out;
}

// if (P) then body fi  ==  (?P; body) ++ ?!P
inline Program desugar_if(Formula condition, Program body) {
  return choice(seq(test(condition), std::move(body)), test(f_not(condition)));
}

// Conjunction of a list; true when empty.
inline Formula conjunction(const std::vector<Formula>& parts) {
  if (parts.empty()) return f_true();
  Formula out = parts.back();
  for (auto it = parts.rbegin() + 1; it != parts.rend(); ++it) out = f_and(*it, out);
  return out;
}

// ------------------------------------------------------------ equality

inline bool operator==(const Term& a, const Term& b);
inline bool operator==(const Formula& a, const Formula& b);
inline bool operator==(const Program& a, const Program& b);

inline bool operator==(const Term& a, const Term& b) {
  if (a.get() == b.get()) return true;
  const auto& x = a.node().v;
  const auto& y = b.node().v;
  if (x.index() != y.index()) return false;
  return std::visit(
      overloaded{
          [&](const term::Var& p) { return p.name == std::get<term::Var>(y).name; },
          [&](const term::Const& p) { return p.value == std::get<term::Const>(y).value; },
          [&](const term::Neg& p) { return p.inner == std::get<term::Neg>(y).inner; },
          [&](const term::Add& p) { auto& q = std::get<term::Add>(y); return p.lhs == q.lhs && p.rhs == q.rhs; },
          [&](const term::Sub& p) { auto& q = std::get<term::Sub>(y); return p.lhs == q.lhs && p.rhs == q.rhs; },
          [&](const term::Mul& p) { auto& q = std::get<term::Mul>(y); return p.lhs == q.lhs && p.rhs == q.rhs; },
          [&](const term::Div& p) { auto& q = std::get<term::Div>(y); return p.num == q.num && p.den == q.den; },
          [&](const term::Pow& p) {
            auto& q = std::get<term::Pow>(y);
            return p.exponent == q.exponent && p.base == q.base;
          },
      },
      x);
}

inline bool operator==(const Formula& a, const Formula& b) {
  if (a.get() == b.get()) return true;
  const auto& x = a.node().v;
  const auto& y = b.node().v;
  if (x.index() != y.index()) return false;
  auto bin = [](const auto& p, const auto& q) { return p.lhs == q.lhs && p.rhs == q.rhs; };
  return std::visit(
      overloaded{
          [&](const fml::Compare& p) {
            auto& q = std::get<fml::Compare>(y);
            return p.op == q.op && p.lhs == q.lhs && p.rhs == q.rhs;
          },
          [&](const fml::True&) { return true; },
          [&](const fml::False&) { return true; },
          [&](const fml::Not& p) { return p.inner == std::get<fml::Not>(y).inner; },
          [&](const fml::And& p) { return bin(p, std::get<fml::And>(y)); },
          [&](const fml::Or& p) { return bin(p, std::get<fml::Or>(y)); },
          [&](const fml::Implies& p) { return bin(p, std::get<fml::Implies>(y)); },
          [&](const fml::Iff& p) { return bin(p, std::get<fml::Iff>(y)); },
          [&](const fml::Forall& p) {
            auto& q = std::get<fml::Forall>(y);
            return p.var == q.var && p.body == q.body;
          },
          [&](const fml::Exists& p) {
            auto& q = std::get<fml::Exists>(y);
            return p.var == q.var && p.body == q.body;
          },
          [&](const fml::Box& p) {
            auto& q = std::get<fml::Box>(y);
            return p.program == q.program && p.post == q.post;
          },
          [&](const fml::Diamond& p) {
            auto& q = std::get<fml::Diamond>(y);
            return p.program == q.program && p.post == q.post;
          },
      },
      x);
}

inline bool operator==(const Program& a, const Program& b) {
  if (a.get() == b.get()) return true;
  const auto& x = a.node().v;
  const auto& y = b.node().v;
  if (x.index() != y.index()) return false;
  return std::visit(
      overloaded{
          [&](const hp::Assign& p) {
            auto& q = std::get<hp::Assign>(y);
            return p.var == q.var && p.value == q.value;
          },
          [&](const hp::RandomAssign& p) { return p.var == std::get<hp::RandomAssign>(y).var; },
          [&](const hp::Test& p) { return p.cond == std::get<hp::Test>(y).cond; },
          [&](const hp::Ode& p) {
            auto& q = std::get<hp::Ode>(y);
            if (p.equations.size() != q.equations.size() || !(p.domain == q.domain)) return false;
            for (std::size_t i = 0; i < p.equations.size(); ++i)
              if (!(p.equations[i].var == q.equations[i].var) || !(p.equations[i].rhs == q.equations[i].rhs))
                return false;
            return true;
          },
          [&](const hp::Choice& p) {
            auto& q = std::get<hp::Choice>(y);
            return p.lhs == q.lhs && p.rhs == q.rhs;
          },
          [&](const hp::Seq& p) {
            auto& q = std::get<hp::Seq>(y);
            return p.first == q.first && p.second == q.second;
          },
          [&](const hp::Loop& p) { return p.body == std::get<hp::Loop>(y).body; },
      },
      x);
}

// ------------------------------------------------------- variable scans

inline void collect_free(const Term& t, SymbolSet& out) {
  std::visit(overloaded{
                 [&](const term::Var& p) { out.insert(p.name); },
                 [&](const term::Const&) {},
                 [&](const term::Neg& p) { collect_free(p.inner, out); },
                 [&](const term::Pow& p) { collect_free(p.base, out); },
                 [&](const term::Div& p) {
                   collect_free(p.num, out);
                   collect_free(p.den, out);
                 },
                 [&](const auto& p) {
                   collect_free(p.lhs, out);
                   collect_free(p.rhs, out);
                 },
             },
             t.node().v);
}

inline void collect_free(const Formula& f, SymbolSet& out);

inline void collect_free(const Program& p, SymbolSet& out) {
  std::visit(overloaded{
                 [&](const hp::Assign& a) {
                   out.insert(a.var);
                   collect_free(a.value, out);
                 },
                 [&](const hp::RandomAssign& a) { out.insert(a.var); },
                 [&](const hp::Test& a) { collect_free(a.cond, out); },
                 [&](const hp::Ode& a) {
                   for (const auto& eq : a.equations) {
                     out.insert(eq.var);
                     collect_free(eq.rhs, out);
                   }
                   collect_free(a.domain, out);
                 },
                 [&](const hp::Choice& a) {
                   collect_free(a.lhs, out);
                   collect_free(a.rhs, out);
                 },
                 [&](const hp::Seq& a) {
                   collect_free(a.first, out);
                   collect_free(a.second, out);
                 },
                 [&](const hp::Loop& a) { collect_free(a.body, out); },
             },
             p.node().v);
}

inline void collect_free(const Formula& f, SymbolSet& out) {
  std::visit(overloaded{
                 [&](const fml::Compare& p) {
                   collect_free(p.lhs, out);
                   collect_free(p.rhs, out);
                 },
                 [&](const fml::True&) {},
                 [&](const fml::False&) {},
                 [&](const fml::Not& p) { collect_free(p.inner, out); },
                 [&](const fml::Forall& p) {
                   SymbolSet inner;
                   collect_free(p.body, inner);
                   inner.erase(p.var);
                   out.insert(inner.begin(), inner.end());
                 },
                 [&](const fml::Exists& p) {
                   SymbolSet inner;
                   collect_free(p.body, inner);
                   inner.erase(p.var);
                   out.insert(inner.begin(), inner.end());
                 },
                 [&](const fml::Box& p) {
                   collect_free(p.program, out);
                   collect_free(p.post, out);
                 },
                 [&](const fml::Diamond& p) {
                   collect_free(p.program, out);
                   collect_free(p.post, out);
                 },
                 [&](const auto& p) {
                   collect_free(p.lhs, out);
                   collect_free(p.rhs, out);
                 },
             },
             f.node().v);
}

// Syntactic free variables. For programs this includes written variables.
template <class Node>
SymbolSet free_variables(const Node& n) {
  SymbolSet out;
  collect_free(n, out);
  return out;
}

// Variables a program may write.
inline SymbolSet bound_variables(const Program& p) {
  SymbolSet out;
  std::visit(overloaded{
                 [&](const hp::Assign& a) { out.insert(a.var); },
                 [&](const hp::RandomAssign& a) { out.insert(a.var); },
                 [&](const hp::Test&) {},
                 [&](const hp::Ode& a) {
                   for (const auto& eq : a.equations) out.insert(eq.var);
                 },
                 [&](const hp::Choice& a) {
                   out = bound_variables(a.lhs);
                   out.merge(bound_variables(a.rhs));
                 },
                 [&](const hp::Seq& a) {
                   out = bound_variables(a.first);
                   out.merge(bound_variables(a.second));
                 },
                 [&](const hp::Loop& a) { out = bound_variables(a.body); },
             },
             p.node().v);
  return out;
}

namespace detail {

struct ReadWrite {
  SymbolSet reads;       // read before definitely written
  SymbolSet must_write;  // written on every run
};

inline ReadWrite read_write(const Program& p) {
  return std::visit(
      overloaded{
          [](const hp::Assign& a) { return ReadWrite{free_variables(a.value), {a.var}}; },
          [](const hp::RandomAssign& a) { return ReadWrite{{}, {a.var}}; },
          [](const hp::Test& a) { return ReadWrite{free_variables(a.cond), {}}; },
          [](const hp::Ode& a) {
            ReadWrite rw{free_variables(a.domain), {}};
            for (const auto& eq : a.equations) {
              rw.reads.insert(eq.var);
              collect_free(eq.rhs, rw.reads);
              rw.must_write.insert(eq.var);
            }
            return rw;
          },
          [](const hp::Choice& a) {
            auto l = read_write(a.lhs), r = read_write(a.rhs);
            ReadWrite rw{l.reads, {}};
            rw.reads.merge(r.reads);
            for (auto s : l.must_write)
              if (r.must_write.count(s)) rw.must_write.insert(s);
            return rw;
          },
          [](const hp::Seq& a) {
            auto f = read_write(a.first), s = read_write(a.second);
            ReadWrite rw{f.reads, f.must_write};
            for (auto x : s.reads)
              if (!f.must_write.count(x)) rw.reads.insert(x);
            rw.must_write.merge(s.must_write);
            return rw;
          },
          [](const hp::Loop& a) { return ReadWrite{read_write(a.body).reads, {}}; },
      },
      p.node().v);
}

}  // namespace detail

// Variables whose initial value can influence the truth of the formula:
// free variables, minus those every run of a modality's program overwrites first.
inline SymbolSet read_variables(const Formula& f) {
  SymbolSet out;
  std::visit(overloaded{
                 [&](const fml::Compare&) { out = free_variables(f); },
                 [&](const fml::True&) {},
                 [&](const fml::False&) {},
                 [&](const fml::Not& p) { out = read_variables(p.inner); },
                 [&](const fml::Forall& p) {
                   out = read_variables(p.body);
                   out.erase(p.var);
                 },
                 [&](const fml::Exists& p) {
                   out = read_variables(p.body);
                   out.erase(p.var);
                 },
                 [&](const fml::Box& p) {
                   auto rw = detail::read_write(p.program);
                   out = rw.reads;
                   for (auto s : read_variables(p.post))
                     if (!rw.must_write.count(s)) out.insert(s);
                 },
                 [&](const fml::Diamond& p) {
                   auto rw = detail::read_write(p.program);
                   out = rw.reads;
                   for (auto s : read_variables(p.post))
                     if (!rw.must_write.count(s)) out.insert(s);
                 },
                 [&](const auto& p) {
                   out = read_variables(p.lhs);
                   out.merge(read_variables(p.rhs));
                 },
             },
             f.node().v);
  return out;
}

// All symbols occurring anywhere, bound or free.
inline void collect_all_symbols(const Formula& f, SymbolSet& out);

inline void collect_all_symbols(const Program& p, SymbolSet& out) { collect_free(p, out); }

inline void collect_all_symbols(const Formula& f, SymbolSet& out) {
  std::visit(overloaded{
                 [&](const fml::Compare& p) {
                   collect_free(p.lhs, out);
                   collect_free(p.rhs, out);
                 },
                 [&](const fml::True&) {},
                 [&](const fml::False&) {},
                 [&](const fml::Not& p) { collect_all_symbols(p.inner, out); },
                 [&](const fml::Forall& p) {
                   out.insert(p.var);
                   collect_all_symbols(p.body, out);
                 },
                 [&](const fml::Exists& p) {
                   out.insert(p.var);
                   collect_all_symbols(p.body, out);
                 },
                 [&](const fml::Box& p) {
                   collect_free(p.program, out);
                   collect_all_symbols(p.post, out);
                 },
                 [&](const fml::Diamond& p) {
                   collect_free(p.program, out);
                   collect_all_symbols(p.post, out);
                 },
                 [&](const auto& p) {
                   collect_all_symbols(p.lhs, out);
                   collect_all_symbols(p.rhs, out);
                 },
             },
             f.node().v);
}

// name', name'', ... until unused.
inline Symbol fresh_symbol(Symbol base, const SymbolSet& avoid) {
  std::string name = base.name();
  do {
    name += '\'';
  } while (avoid.count(Symbol(name)));
  return Symbol(name);
}

// ---------------------------------------------------------- substitution

inline Term substitute(const Term& t, Symbol v, const Term& replacement) {
  return std::visit(
      overloaded{
          [&](const term::Var& p) { return p.name == v ? replacement : t; },
          [&](const term::Const&) { return t; },
          [&](const term::Neg& p) { return make_term(term::Neg{substitute(p.inner, v, replacement)}); },
          [&](const term::Add& p) {
            return make_term(term::Add{substitute(p.lhs, v, replacement), substitute(p.rhs, v, replacement)});
          },
          [&](const term::Sub& p) {
            return make_term(term::Sub{substitute(p.lhs, v, replacement), substitute(p.rhs, v, replacement)});
          },
          [&](const term::Mul& p) {
            return make_term(term::Mul{substitute(p.lhs, v, replacement), substitute(p.rhs, v, replacement)});
          },
          [&](const term::Div& p) {
            return make_term(term::Div{substitute(p.num, v, replacement), substitute(p.den, v, replacement)});
          },
          [&](const term::Pow& p) { return make_term(term::Pow{substitute(p.base, v, replacement), p.exponent}); },
      },
      t.node().v);
}

inline Formula substitute(const Formula& f, Symbol v, const Term& replacement);

// Programs cannot rename their writes, so substitution into a program that
// writes the target or a variable of the replacement is rejected.
inline Program substitute(const Program& p, Symbol v, const Term& replacement) {
  auto writes = bound_variables(p);
  if (writes.count(v)) throw std::invalid_argument("cannot substitute " + v.name() + ": written by program");
  for (auto s : free_variables(replacement))
    if (writes.count(s))
      throw std::invalid_argument("cannot substitute " + v.name() + ": replacement variable " + s.name() +
                                  " is written by program");
  return std::visit(
      overloaded{
          [&](const hp::Assign& a) { return assign(a.var, substitute(a.value, v, replacement)); },
          [&](const hp::RandomAssign&) { return p; },
          [&](const hp::Test& a) { return test(substitute(a.cond, v, replacement)); },
          [&](const hp::Ode& a) {
            std::vector<OdeEquation> eqs;
            for (const auto& eq : a.equations) eqs.push_back({eq.var, substitute(eq.rhs, v, replacement)});
            return ode(std::move(eqs), substitute(a.domain, v, replacement));
          },
          [&](const hp::Choice& a) {
            return choice(substitute(a.lhs, v, replacement), substitute(a.rhs, v, replacement));
          },
          [&](const hp::Seq& a) { return seq(substitute(a.first, v, replacement), substitute(a.second, v, replacement)); },
          [&](const hp::Loop& a) { return loop(substitute(a.body, v, replacement)); },
      },
      p.node().v);
}

namespace detail {

template <class Q>
Formula substitute_binder(const Formula& whole, const Q& q, Symbol v, const Term& replacement, bool is_forall) {
  if (q.var == v) return whole;  // v is not free below
  auto body_free = free_variables(q.body);
  if (!body_free.count(v)) return whole;
  auto repl_free = free_variables(replacement);
  Symbol bv = q.var;
  Formula body = q.body;
  if (repl_free.count(bv)) {
    SymbolSet avoid;
    collect_all_symbols(whole, avoid);
    avoid.merge(repl_free);
    avoid.insert(v);
    Symbol renamed = fresh_symbol(bv, avoid);
    body = substitute(body, bv, var(renamed));
    bv = renamed;
  }
  body = substitute(body, v, replacement);
  return is_forall ? make_formula(fml::Forall{bv, body}) : make_formula(fml::Exists{bv, body});
}

}  // namespace detail

// Capture-avoiding: quantifier binders that would capture a variable of the
// replacement are renamed with the prime scheme.
inline Formula substitute(const Formula& f, Symbol v, const Term& replacement) {
  return std::visit(
      overloaded{
          [&](const fml::Compare& p) {
            return compare(p.op, substitute(p.lhs, v, replacement), substitute(p.rhs, v, replacement));
          },
          [&](const fml::True&) { return f; },
          [&](const fml::False&) { return f; },
          [&](const fml::Not& p) { return f_not(substitute(p.inner, v, replacement)); },
          [&](const fml::And& p) { return f_and(substitute(p.lhs, v, replacement), substitute(p.rhs, v, replacement)); },
          [&](const fml::Or& p) { return f_or(substitute(p.lhs, v, replacement), substitute(p.rhs, v, replacement)); },
          [&](const fml::Implies& p) {
            return f_implies(substitute(p.lhs, v, replacement), substitute(p.rhs, v, replacement));
          },
          [&](const fml::Iff& p) { return f_iff(substitute(p.lhs, v, replacement), substitute(p.rhs, v, replacement)); },
          [&](const fml::Forall& p) { return detail::substitute_binder(f, p, v, replacement, true); },
          [&](const fml::Exists& p) { return detail::substitute_binder(f, p, v, replacement, false); },
          [&](const fml::Box& p) {
            if (!free_variables(f).count(v)) return f;
            return box(substitute(p.program, v, replacement), substitute(p.post, v, replacement));
          },
          [&](const fml::Diamond& p) {
            if (!free_variables(f).count(v)) return f;
            return diamond(substitute(p.program, v, replacement), substitute(p.post, v, replacement));
          },
      },
      f.node().v);
}

namespace detail {

// Renames every binder of `v` inside `f` so that `v` is bound at most once on any path.
inline Formula rename_inner_binders(const Formula& f, Symbol v, const SymbolSet& avoid) {
  return std::visit(
      overloaded{
          [&](const fml::Compare&) { return f; },
          [&](const fml::True&) { return f; },
          [&](const fml::False&) { return f; },
          [&](const fml::Not& p) { return f_not(rename_inner_binders(p.inner, v, avoid)); },
          [&](const fml::And& p) { return f_and(rename_inner_binders(p.lhs, v, avoid), rename_inner_binders(p.rhs, v, avoid)); },
          [&](const fml::Or& p) { return f_or(rename_inner_binders(p.lhs, v, avoid), rename_inner_binders(p.rhs, v, avoid)); },
          [&](const fml::Implies& p) {
            return f_implies(rename_inner_binders(p.lhs, v, avoid), rename_inner_binders(p.rhs, v, avoid));
          },
          [&](const fml::Iff& p) { return f_iff(rename_inner_binders(p.lhs, v, avoid), rename_inner_binders(p.rhs, v, avoid)); },
          [&](const fml::Forall& p) {
            if (!(p.var == v)) return make_formula(fml::Forall{p.var, rename_inner_binders(p.body, v, avoid)});
            Symbol fresh = fresh_symbol(v, avoid);
            return make_formula(fml::Forall{fresh, substitute(p.body, v, var(fresh))});
          },
          [&](const fml::Exists& p) {
            if (!(p.var == v)) return make_formula(fml::Exists{p.var, rename_inner_binders(p.body, v, avoid)});
            Symbol fresh = fresh_symbol(v, avoid);
            return make_formula(fml::Exists{fresh, substitute(p.body, v, var(fresh))});
          },
          [&](const fml::Box& p) { return box(p.program, rename_inner_binders(p.post, v, avoid)); },
          [&](const fml::Diamond& p) { return diamond(p.program, rename_inner_binders(p.post, v, avoid)); },
      },
      f.node().v);
}

}  // namespace detail

inline Formula forall(Symbol v, Formula body) {
  SymbolSet avoid;
  collect_all_symbols(body, avoid);
  avoid.insert(v);
  return make_formula(fml::Forall{v, detail::rename_inner_binders(body, v, avoid)});
}

inline Formula exists(Symbol v, Formula body) {
  SymbolSet avoid;
  collect_all_symbols(body, avoid);
  avoid.insert(v);
  return make_formula(fml::Exists{v, detail::rename_inner_binders(body, v, avoid)});
}

inline Program ode(std::vector<OdeEquation> equations, Formula domain) {
  SymbolSet seen;
  for (const auto& eq : equations)
    if (!seen.insert(eq.var).second) throw std::invalid_argument("duplicate ODE variable " + eq.var.name());
  if (equations.empty()) throw std::invalid_argument("ODE without equations");
  return make_program(hp::Ode{std::move(equations), std::move(domain)});
}

// --------------------------------------------------------------- queries

inline bool is_first_order(const Formula& f) {
  return std::visit(overloaded{
                        [](const fml::Compare&) { return true; },
                        [](const fml::True&) { return true; },
                        [](const fml::False&) { return true; },
                        [](const fml::Not& p) { return is_first_order(p.inner); },
                        [](const fml::Forall& p) { return is_first_order(p.body); },
                        [](const fml::Exists& p) { return is_first_order(p.body); },
                        [](const fml::Box&) { return false; },
                        [](const fml::Diamond&) { return false; },
                        [](const auto& p) { return is_first_order(p.lhs) && is_first_order(p.rhs); },
                    },
                    f.node().v);
}

inline bool is_quantifier_free(const Formula& f) {
  return std::visit(overloaded{
                        [](const fml::Compare&) { return true; },
                        [](const fml::True&) { return true; },
                        [](const fml::False&) { return true; },
                        [](const fml::Not& p) { return is_quantifier_free(p.inner); },
                        [](const fml::Forall&) { return false; },
                        [](const fml::Exists&) { return false; },
                        [](const fml::Box& p) { return is_quantifier_free(p.post); },
                        [](const fml::Diamond& p) { return is_quantifier_free(p.post); },
                        [](const auto& p) { return is_quantifier_free(p.lhs) && is_quantifier_free(p.rhs); },
                    },
                    f.node().v);
}

// Flattens a right- or left-nested conjunction.
inline void conjuncts(const Formula& f, std::vector<Formula>& out) {
  if (auto* a = std::get_if<fml::And>(&f.node().v)) {
    conjuncts(a->lhs, out);
    conjuncts(a->rhs, out);
  } else {
    out.push_back(f);
  }
}

// Structural negation pushed through connectives and modalities:
// !(A -> B) = A & !B, ![a]P = <a>!P, !forall x P = exists x !P, ...
inline Formula push_negation(const Formula& f) {
  return std::visit(overloaded{
                        [&](const fml::True&) { return f_false(); },
                        [&](const fml::False&) { return f_true(); },
                        [&](const fml::Not& p) { return p.inner; },
                        [&](const fml::And& p) { return f_or(push_negation(p.lhs), push_negation(p.rhs)); },
                        [&](const fml::Or& p) { return f_and(push_negation(p.lhs), push_negation(p.rhs)); },
                        [&](const fml::Implies& p) { return f_and(p.lhs, push_negation(p.rhs)); },
                        [&](const fml::Forall& p) { return make_formula(fml::Exists{p.var, push_negation(p.body)}); },
                        [&](const fml::Exists& p) { return make_formula(fml::Forall{p.var, push_negation(p.body)}); },
                        [&](const fml::Box& p) { return diamond(p.program, push_negation(p.post)); },
                        [&](const fml::Diamond& p) { return box(p.program, push_negation(p.post)); },
                        [&](const auto&) { return f_not(f); },
                    },
                    f.node().v);
}

}  // namespace hpcheck
