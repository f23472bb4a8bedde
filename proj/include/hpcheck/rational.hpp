#pragma once

#include <gmpxx.h>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hpcheck {

using Rational = mpq_class;

inline Rational make_rational(long num, long den = 1) {
  Rational r(num, den);
  r.canonicalize();
  return r;
}

// Exact value of a finite double (every finite double is a dyadic rational).
inline Rational rational_from_double(double d) {
  if (!std::isfinite(d)) throw std::domain_error("non-finite value has no rational form");
  Rational r(d);
  r.canonicalize();
  return r;
}

inline double to_double(const Rational& r) { return r.get_d(); }
inline double to_double(double d) { return d; }

// Accepts "7", "-3", "1.8", "9/5", "-0.25", "1e-3".
inline std::optional<Rational> parse_rational(std::string_view text) {
  std::string s(text);
  if (s.empty()) return std::nullopt;
  bool neg = false;
  std::size_t i = 0;
  if (s[0] == '-' || s[0] == '+') {
    neg = s[0] == '-';
    i = 1;
  }
  std::string body = s.substr(i);
  if (body.empty()) return std::nullopt;
  Rational out;
  try {
    if (auto slash = body.find('/'); slash != std::string::npos) {
      std::string n = body.substr(0, slash), d = body.substr(slash + 1);
      if (n.empty() || d.empty()) return std::nullopt;
      for (char c : n + d)
        if (c < '0' || c > '9') return std::nullopt;
      mpz_class den(d, 10);
      if (den == 0) return std::nullopt;
      out = Rational(mpz_class(n, 10), den);
    } else {
      long exp10 = 0;
      if (auto e = body.find_first_of("eE"); e != std::string::npos) {
        std::string ex = body.substr(e + 1);
        if (ex.empty()) return std::nullopt;
        std::size_t used = 0;
        exp10 = std::stol(ex, &used);
        if (used != ex.size()) return std::nullopt;
        body = body.substr(0, e);
      }
      std::string digits;
      long frac = 0;
      bool seen_dot = false;
      for (char c : body) {
        if (c == '.') {
          if (seen_dot) return std::nullopt;
          seen_dot = true;
        } else if (c >= '0' && c <= '9') {
          digits += c;
          if (seen_dot) ++frac;
        } else {
          return std::nullopt;
        }
      }
      if (digits.empty()) return std::nullopt;
      mpz_class num(digits, 10), den = 1;
      long scale = exp10 - frac;
      mpz_class p;
      mpz_ui_pow_ui(p.get_mpz_t(), 10, static_cast<unsigned long>(scale < 0 ? -scale : scale));
      if (scale < 0) den = p; else num *= p;
      out = Rational(num, den);
    }
  } catch (const std::exception&) {
    return std::nullopt;
  }
  out.canonicalize();
  if (neg) out = -out;
  return out;
}

// True when the value has a finite decimal expansion (denominator 2^a 5^b).
inline bool is_terminating_decimal(const Rational& r) {
  mpz_class d = r.get_den();
  while (mpz_divisible_ui_p(d.get_mpz_t(), 2)) d /= 2;
  while (mpz_divisible_ui_p(d.get_mpz_t(), 5)) d /= 5;
  return d == 1;
}

// Decimal text when exact, otherwise "p/q".
inline std::string to_string(const Rational& r) {
  if (r.get_den() == 1) return r.get_num().get_str();
  if (!is_terminating_decimal(r)) return r.get_str();
  mpz_class num = abs(r.get_num()), den = r.get_den();
  std::size_t places = 0;
  mpz_class scaled = num;
  while (true) {
    mpz_class q, rem;
    mpz_tdiv_qr(q.get_mpz_t(), rem.get_mpz_t(), scaled.get_mpz_t(), den.get_mpz_t());
    if (rem == 0) {
      std::string digits = q.get_str();
      if (digits.size() <= places) digits.insert(0, places - digits.size() + 1, '0');
      digits.insert(digits.size() - places, ".");
      return (sgn(r) < 0 ? "-" : "") + digits;
    }
    scaled *= 10;
    ++places;
  }
}

}  // namespace hpcheck
