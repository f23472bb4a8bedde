#pragma once

// ASCII surface syntax for terms, formulas and hybrid programs.
//
//   terms     x  1.8  -e  e + e  e - e  e * e  e / e  e^2  (e)
//   formulas  e >= e  e > e  e <= e  e < e  e = e  e != e  true  false
//             !P  P & Q  P | Q  P -> Q  P <-> Q  forall x. P  exists x. P
//             [a] P  <a> P
//   programs  x := e  x := *  ?P  {x' = f, y' = g & Q}  a ++ b  a; b  a*
//             {a}  if (P) { a }
//
// Precedence (tightest first): ! & | -> <->.  -> is right-associative;
// quantifiers and modalities extend to the right as far as possible.

#include <hpcheck/ast.hpp>

#include <cctype>
#include <cstddef>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hpcheck {

struct SourceSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t line = 1;
  std::size_t column = 1;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, SourceSpan span)
      : std::runtime_error(message + " at line " + std::to_string(span.line) + ", column " +
                           std::to_string(span.column)),
        span_(span),
        message_(message) {}

  const SourceSpan& span() const { return span_; }
  const std::string& message() const { return message_; }

 private:
  SourceSpan span_;
  std::string message_;
};

namespace detail {

enum class Tok { Ident, Number, Keyword, Punct, End };

struct Token {
  Tok kind;
  std::string text;
  SourceSpan span;
};

inline std::vector<Token> tokenize(std::string_view src, std::size_t base_offset = 0, std::size_t base_line = 1,
                                   std::size_t base_column = 1) {
  static const char* const puncts[] = {"<->", "->", "<=", ">=", "!=", ":=", "++", "+", "-", "*", "/",
                                       "^",   "(",  ")",  "[",  "]",  "{",  "}",  "<", ">", "=", "!",
                                       "&",   "|",  ";",  "?",  ",",  "."};
  std::vector<Token> out;
  std::size_t i = 0, line = base_line, col = base_column;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    SourceSpan span{base_offset + i, base_offset + i, line, col};
    std::size_t j = i;
    Tok kind;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      while (j < src.size() && src[j] == '\'') ++j;
      kind = Tok::Ident;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j + 1 < src.size() && src[j] == '.' && std::isdigit(static_cast<unsigned char>(src[j + 1]))) {
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      kind = Tok::Number;
    } else {
      std::size_t len = 0;
      for (const char* p : puncts) {
        std::size_t n = std::char_traits<char>::length(p);
        if (src.substr(i, n) == p) {
          len = n;
          break;
        }
      }
      if (len == 0) {
        span.end = span.start + 1;
        throw ParseError(std::string("unexpected character '") + c + "'", span);
      }
      j = i + len;
      kind = Tok::Punct;
    }
    std::string text(src.substr(i, j - i));
    if (kind == Tok::Ident &&
        (text == "true" || text == "false" || text == "forall" || text == "exists" || text == "if"))
      kind = Tok::Keyword;
    span.end = base_offset + j;
    out.push_back({kind, std::move(text), span});
    advance(j - i);
  }
  out.push_back({Tok::End, "", SourceSpan{base_offset + i, base_offset + i, line, col}});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Term parse_term() { return additive(); }

  Formula parse_formula() { return iff(); }

  Program parse_program() { return choice_prog(); }

  void expect_end() {
    if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "'");
  }

  const Token& peek(std::size_t ahead = 0) const {
    std::size_t k = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[k];
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, peek().span); }

 private:
  bool is(std::string_view p, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return (t.kind == Tok::Punct || t.kind == Tok::Keyword) && t.text == p;
  }
  bool accept(std::string_view p) {
    if (!is(p)) return false;
    ++pos_;
    return true;
  }
  void expect(std::string_view p) {
    if (!accept(p)) fail("expected '" + std::string(p) + "' but found '" + peek().text + "'");
  }

  // ---- terms
  Term additive() {
    Term t = multiplicative();
    while (true) {
      if (accept("+")) t = t + multiplicative();
      else if (accept("-")) t = t - multiplicative();
      else return t;
    }
  }
  Term multiplicative() {
    Term t = unary_term();
    while (true) {
      if (accept("*")) t = t * unary_term();
      else if (accept("/")) t = t / unary_term();
      else return t;
    }
  }
  Term unary_term() {
    // -2 is a constant, but -2^2 is -(2^2)
    if (is("-") && peek(1).kind == Tok::Number && !is("^", 2)) {
      ++pos_;
      return num(-number());
    }
    if (accept("-")) return -unary_term();
    return power(atom_term());
  }
  Term power(Term base) {
    if (!accept("^")) return base;
    const auto& t = peek();
    if (t.kind != Tok::Number || t.text.find('.') != std::string::npos) fail("exponent must be a natural number");
    unsigned long e = std::stoul(t.text);
    ++pos_;
    return pow(std::move(base), static_cast<unsigned>(e));
  }
  Rational number() {
    const auto& t = peek();
    if (t.kind != Tok::Number) fail("expected number");
    auto r = parse_rational(t.text);
    if (!r) fail("malformed number '" + t.text + "'");
    ++pos_;
    return *r;
  }
  Term atom_term() {
    const auto& t = peek();
    if (t.kind == Tok::Ident) {
      ++pos_;
      return var(Symbol(t.text));
    }
    if (t.kind == Tok::Number) return num(number());
    if (accept("(")) {
      Term inner = additive();
      expect(")");
      return inner;
    }
    fail(t.kind == Tok::End ? "unexpected end of input, expected term" : "expected term but found '" + t.text + "'");
  }

  // ---- formulas
  Formula iff() {
    Formula f = implies();
    while (accept("<->")) f = f_iff(f, implies());
    return f;
  }
  Formula implies() {
    Formula f = disjunction();
    if (accept("->")) return f_implies(f, implies());
    return f;
  }
  Formula disjunction() {
    Formula f = conjunction_();
    while (accept("|")) f = f_or(f, conjunction_());
    return f;
  }
  Formula conjunction_() {
    Formula f = unary_formula();
    while (accept("&")) f = f_and(f, unary_formula());
    return f;
  }
  Symbol bound_name() {
    const auto& t = peek();
    if (t.kind != Tok::Ident) fail("expected variable name");
    ++pos_;
    return Symbol(t.text);
  }
  Formula unary_formula() {
    if (accept("!")) return f_not(unary_formula());
    if (accept("forall")) {
      Symbol v = bound_name();
      expect(".");
      return make_formula(fml::Forall{v, iff()});
    }
    if (accept("exists")) {
      Symbol v = bound_name();
      expect(".");
      return make_formula(fml::Exists{v, iff()});
    }
    if (accept("[")) {
      Program p = choice_prog();
      expect("]");
      return box(p, iff());
    }
    if (accept("<")) {
      Program p = choice_prog();
      expect(">");
      return diamond(p, iff());
    }
    return primary_formula();
  }
  static bool continues_term(const Token& t) {
    if (t.kind != Tok::Punct) return false;
    static const char* const ops[] = {"+", "-", "*", "/", "^", ">=", ">", "<=", "<", "=", "!="};
    for (const char* op : ops)
      if (t.text == op) return true;
    return false;
  }
  Formula primary_formula() {
    if (accept("true")) return f_true();
    if (accept("false")) return f_false();
    if (is("(")) {
      // A parenthesised formula, unless the group is really the left operand of a
      // comparison. `>` is ambiguous with the diamond closer, so the term reading
      // only wins when it parses.
      std::size_t save = pos_;
      std::optional<Formula> grouped;
      std::size_t after = save;
      try {
        ++pos_;
        Formula f = iff();
        expect(")");
        if (!continues_term(peek())) return f;
        grouped = f;
        after = pos_;
      } catch (const ParseError&) {
      }
      pos_ = save;
      if (grouped) {
        try {
          return comparison();
        } catch (const ParseError&) {
          pos_ = after;
          return *grouped;
        }
      }
    }
    return comparison();
  }
  Formula comparison() {
    Term lhs = additive();
    const auto& t = peek();
    std::optional<CmpOp> op;
    if (t.kind == Tok::Punct) {
      if (t.text == ">=") op = CmpOp::Ge;
      else if (t.text == ">") op = CmpOp::Gt;
      else if (t.text == "<=") op = CmpOp::Le;
      else if (t.text == "<") op = CmpOp::Lt;
      else if (t.text == "=") op = CmpOp::Eq;
      else if (t.text == "!=") op = CmpOp::Ne;
    }
    if (!op) fail("expected comparison operator but found '" + t.text + "'");
    ++pos_;
    return compare(*op, lhs, additive());
  }

  // ---- programs
  Program choice_prog() {
    Program p = seq_prog();
    while (accept("++")) p = choice(p, seq_prog());
    return p;
  }
  static bool closes_program(const Token& t) {
    return t.kind == Tok::End || (t.kind == Tok::Punct && (t.text == "}" || t.text == "]" || t.text == ">" ||
                                                           t.text == "++"));
  }
  Program seq_prog() {
    Program p = postfix_prog();
    if (accept(";")) {
      if (closes_program(peek())) return p;  // trailing semicolon
      return seq(p, seq_prog());
    }
    return p;
  }
  Program postfix_prog() {
    Program p = atom_prog();
    while (accept("*")) p = loop(p);
    return p;
  }
  Program atom_prog() {
    if (accept("?")) return test(iff());
    if (accept("if")) {
      expect("(");
      Formula cond = iff();
      expect(")");
      expect("{");
      Program body = choice_prog();
      expect("}");
      return desugar_if(cond, body);
    }
    if (is("{")) {
      if (peek(1).kind == Tok::Ident && peek(1).text.back() == '\'' && is("=", 2)) return ode_prog();
      ++pos_;
      Program p = choice_prog();
      expect("}");
      return p;
    }
    const auto& t = peek();
    if (t.kind == Tok::Ident) {
      ++pos_;
      Symbol v(t.text);
      expect(":=");
      if (accept("*")) return random_assign(v);
      return assign(v, additive());
    }
    fail(t.kind == Tok::End ? "unexpected end of input, expected program" : "expected program but found '" + t.text + "'");
  }
  Program ode_prog() {
    SourceSpan open = peek().span;
    expect("{");
    std::vector<OdeEquation> eqs;
    SymbolSet seen;
    do {
      const auto& t = peek();
      if (t.kind != Tok::Ident || t.text.back() != '\'') fail("expected derivative x'");
      Symbol v(t.text.substr(0, t.text.size() - 1));
      if (!seen.insert(v).second) fail("duplicate ODE variable " + v.name());
      ++pos_;
      expect("=");
      eqs.push_back({v, additive()});
    } while (accept(","));
    Formula domain = accept("&") ? iff() : f_true();
    expect("}");
    try {
      return ode(std::move(eqs), domain);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), open);
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

template <class T>
T parse_whole(std::string_view text, T (Parser::*entry)(), SourceSpan origin = {}) {
  Parser p(tokenize(text, origin.start, origin.line, origin.column));
  T out = (p.*entry)();
  p.expect_end();
  return out;
}

}  // namespace detail

inline Term parse_term(std::string_view text) { return detail::parse_whole(text, &detail::Parser::parse_term); }
inline Formula parse_formula(std::string_view text) {
  return detail::parse_whole(text, &detail::Parser::parse_formula);
}
inline Program parse_program(std::string_view text) {
  return detail::parse_whole(text, &detail::Parser::parse_program);
}

// Variants for text embedded in a larger document; spans are reported
// relative to the document, with `origin` the position of text[0].
inline Term parse_term_at(std::string_view text, SourceSpan origin) {
  return detail::parse_whole(text, &detail::Parser::parse_term, origin);
}
inline Formula parse_formula_at(std::string_view text, SourceSpan origin) {
  return detail::parse_whole(text, &detail::Parser::parse_formula, origin);
}
inline Program parse_program_at(std::string_view text, SourceSpan origin) {
  return detail::parse_whole(text, &detail::Parser::parse_program, origin);
}

// ------------------------------------------------------------- printing

namespace detail {

inline std::string const_text(const Rational& r) {
  if (is_terminating_decimal(r)) return to_string(r);
  return "(" + r.get_str() + ")";
}

// Term levels: 1 +-, 2 */, 3 unary minus, 4 ^, 5 atom.
inline int term_level(const Term& t) {
  return std::visit(overloaded{
                        [](const term::Var&) { return 5; },
                        [](const term::Const& c) { return sgn(c.value) < 0 ? 3 : 5; },
                        [](const term::Neg&) { return 3; },
                        [](const term::Add&) { return 1; },
                        [](const term::Sub&) { return 1; },
                        [](const term::Mul&) { return 2; },
                        [](const term::Div&) { return 2; },
                        [](const term::Pow&) { return 4; },
                    },
                    t.node().v);
}

inline void print_term(std::ostream& os, const Term& t, int min_level);

inline std::string term_text(const Term& t, int min_level) {
  std::ostringstream os;
  print_term(os, t, min_level);
  return os.str();
}

inline void print_term(std::ostream& os, const Term& t, int min_level) {
  if (term_level(t) < min_level) {
    os << '(';
    print_term(os, t, 0);
    os << ')';
    return;
  }
  std::visit(overloaded{
                 [&](const term::Var& p) { os << p.name.name(); },
                 [&](const term::Const& p) { os << const_text(p.value); },
                 [&](const term::Neg& p) {
                   std::string inner = term_text(p.inner, 3);
                   if (!inner.empty() && std::isdigit(static_cast<unsigned char>(inner[0]))) inner = "(" + inner + ")";
                   os << '-' << inner;
                 },
                 [&](const term::Add& p) {
                   print_term(os, p.lhs, 1);
                   os << " + ";
                   print_term(os, p.rhs, 2);
                 },
                 [&](const term::Sub& p) {
                   print_term(os, p.lhs, 1);
                   os << " - ";
                   print_term(os, p.rhs, 2);
                 },
                 [&](const term::Mul& p) {
                   print_term(os, p.lhs, 2);
                   os << " * ";
                   print_term(os, p.rhs, 3);
                 },
                 [&](const term::Div& p) {
                   print_term(os, p.num, 2);
                   os << " / ";
                   print_term(os, p.den, 3);
                 },
                 [&](const term::Pow& p) {
                   print_term(os, p.base, 5);
                   os << '^' << p.exponent;
                 },
             },
             t.node().v);
}

// Formula levels: 1 <->, 2 ->, 3 |, 4 &, 5 prefix, 6 atom.
inline int formula_level(const Formula& f) {
  return std::visit(overloaded{
                        [](const fml::Iff&) { return 1; },
                        [](const fml::Implies&) { return 2; },
                        [](const fml::Or&) { return 3; },
                        [](const fml::And&) { return 4; },
                        [](const fml::Compare&) { return 6; },
                        [](const fml::True&) { return 6; },
                        [](const fml::False&) { return 6; },
                        [](const auto&) { return 5; },
                    },
                    f.node().v);
}

inline bool extends_right(const Formula& f) {
  const auto& v = f.node().v;
  return std::holds_alternative<fml::Forall>(v) || std::holds_alternative<fml::Exists>(v) ||
         std::holds_alternative<fml::Box>(v) || std::holds_alternative<fml::Diamond>(v);
}

inline void print_program(std::ostream& os, const Program& p, int min_level);

// `open`: nothing follows this formula at the current nesting depth, so a
// quantifier or modality printed here cannot swallow a trailing operand.
inline void print_formula(std::ostream& os, const Formula& f, int min_level, bool open) {
  if (formula_level(f) < min_level || (extends_right(f) && !open)) {
    os << '(';
    print_formula(os, f, 0, true);
    os << ')';
    return;
  }
  auto binary = [&](const auto& p, const char* op, int lhs_level, int rhs_level) {
    print_formula(os, p.lhs, lhs_level, false);
    os << ' ' << op << ' ';
    print_formula(os, p.rhs, rhs_level, open);
  };
  std::visit(overloaded{
                 [&](const fml::Compare& p) {
                   print_term(os, p.lhs, 0);
                   os << ' ' << to_string(p.op) << ' ';
                   print_term(os, p.rhs, 0);
                 },
                 [&](const fml::True&) { os << "true"; },
                 [&](const fml::False&) { os << "false"; },
                 [&](const fml::Not& p) {
                   os << '!';
                   print_formula(os, p.inner, 5, open);
                 },
                 [&](const fml::And& p) { binary(p, "&", 4, 5); },
                 [&](const fml::Or& p) { binary(p, "|", 3, 4); },
                 [&](const fml::Implies& p) { binary(p, "->", 3, 2); },
                 [&](const fml::Iff& p) { binary(p, "<->", 1, 2); },
                 [&](const fml::Forall& p) {
                   os << "forall " << p.var.name() << ". ";
                   print_formula(os, p.body, 0, open);
                 },
                 [&](const fml::Exists& p) {
                   os << "exists " << p.var.name() << ". ";
                   print_formula(os, p.body, 0, open);
                 },
                 [&](const fml::Box& p) {
                   os << '[';
                   print_program(os, p.program, 0);
                   os << "] ";
                   print_formula(os, p.post, 0, open);
                 },
                 [&](const fml::Diamond& p) {
                   os << '<';
                   print_program(os, p.program, 0);
                   os << "> ";
                   print_formula(os, p.post, 0, open);
                 },
             },
             f.node().v);
}

// Recognizes (?P; body) ++ ?!P.
struct IfView {
  Formula cond;
  Program body;
};

inline std::optional<IfView> as_if(const Program& p) {
  auto* c = std::get_if<hp::Choice>(&p.node().v);
  if (!c) return std::nullopt;
  auto* s = std::get_if<hp::Seq>(&c->lhs.node().v);
  auto* neg = std::get_if<hp::Test>(&c->rhs.node().v);
  if (!s || !neg) return std::nullopt;
  auto* guard = std::get_if<hp::Test>(&s->first.node().v);
  auto* n = std::get_if<fml::Not>(&neg->cond.node().v);
  if (!guard || !n || !(n->inner == guard->cond)) return std::nullopt;
  return IfView{guard->cond, s->second};
}

// Program levels: 1 ++, 2 ;, 3 postfix *, 4 atom.
inline int program_level(const Program& p) {
  if (as_if(p)) return 4;
  return std::visit(overloaded{
                        [](const hp::Choice&) { return 1; },
                        [](const hp::Seq&) { return 2; },
                        [](const hp::Loop&) { return 3; },
                        [](const auto&) { return 4; },
                    },
                    p.node().v);
}

inline void print_program(std::ostream& os, const Program& p, int min_level) {
  if (program_level(p) < min_level) {
    os << '{';
    print_program(os, p, 0);
    os << '}';
    return;
  }
  if (auto view = as_if(p)) {
    os << "if (";
    print_formula(os, view->cond, 0, true);
    os << ") {";
    print_program(os, view->body, 0);
    os << '}';
    return;
  }
  std::visit(overloaded{
                 [&](const hp::Assign& a) {
                   os << a.var.name() << " := ";
                   print_term(os, a.value, 0);
                 },
                 [&](const hp::RandomAssign& a) { os << a.var.name() << " := *"; },
                 [&](const hp::Test& a) {
                   os << "?(";
                   print_formula(os, a.cond, 0, true);
                   os << ')';
                 },
                 [&](const hp::Ode& a) {
                   os << '{';
                   for (std::size_t i = 0; i < a.equations.size(); ++i) {
                     if (i) os << ", ";
                     os << a.equations[i].var.name() << "' = ";
                     print_term(os, a.equations[i].rhs, 0);
                   }
                   if (!std::holds_alternative<fml::True>(a.domain.node().v)) {
                     os << " & ";
                     print_formula(os, a.domain, 0, true);
                   }
                   os << '}';
                 },
                 [&](const hp::Choice& a) {
                   print_program(os, a.lhs, 1);
                   os << " ++ ";
                   print_program(os, a.rhs, 2);
                 },
                 [&](const hp::Seq& a) {
                   print_program(os, a.first, 3);
                   os << "; ";
                   print_program(os, a.second, 2);
                 },
                 [&](const hp::Loop& a) {
                   // `x := 3*` would read as multiplication
                   print_program(os, a.body, std::holds_alternative<hp::Assign>(a.body.node().v) ? 5 : 4);
                   os << '*';
                 },
             },
             p.node().v);
}

}  // namespace detail

inline std::string pretty_print(const Term& t) { return detail::term_text(t, 0); }

inline std::string pretty_print(const Formula& f) {
  std::ostringstream os;
  detail::print_formula(os, f, 0, true);
  return os.str();
}

inline std::string pretty_print(const Program& p) {
  std::ostringstream os;
  detail::print_program(os, p, 0);
  return os.str();
}

}  // namespace hpcheck
