#pragma once

// Bounded search for counterexamples to universal obligations and for
// witnesses of existential ones. Search runs in double precision; anything
// reported has been replayed in exact rational arithmetic first.

#include <hpcheck/obligations.hpp>
#include <hpcheck/semantics.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hpcheck {

struct SearchConfig {
  std::uint64_t budget = 200000;
  std::uint64_t seed = 1;
  unsigned grid_levels = 3;
  unsigned local_refine_iters = 200;
  unsigned refine_starts = 8;
  unsigned duration_samples_per_ODE = 9;  // durations are k/(n-1) of the admissible maximum
  unsigned inner_samples = 1;             // random schedules tried per modality per candidate
  std::uint64_t enumerate_cap = 0;        // > 0: enumerate inner choices, up to this many runs per modality
  unsigned max_loop_count = 3;
  unsigned threads = 0;                   // 0: HPCHECK_THREADS, else hardware concurrency
  std::size_t batch_size = 256;
  double numeric_padding = 1e-9;
  SemanticsConfig semantics;
};

inline unsigned worker_count(const SearchConfig& cfg) {
  if (cfg.threads) return cfg.threads;
  if (const char* env = std::getenv("HPCHECK_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

enum class VerdictKind { Falsified, NotFalsified, WitnessFound, NoWitnessFound };

inline const char* to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::Falsified: return "falsified";
    case VerdictKind::NotFalsified: return "not-falsified";
    case VerdictKind::WitnessFound: return "witness-found";
    case VerdictKind::NoWitnessFound: return "no-witness-found";
  }
  return "?";
}

struct Counterexample {
  std::vector<std::pair<Symbol, Rational>> assignment;  // quantified variables
  std::map<std::size_t, ChoiceScript> scripts;          // modality (preorder index) -> decisions
  double margin = 0;
  bool exact = true;                                    // false: numeric replay with padding only
  std::string decisive_formula;                         // last first-order formula decided
  bool decisive_value = false;
  Trace<Rational> trace;                                // replay of the first scripted modality
};

struct Stats {
  std::uint64_t evaluations = 0;
  double wall_seconds = 0;
  std::string coverage;
};

struct Verdict {
  std::string obligation;
  ObligationKind kind = ObligationKind::FalsifyUniversal;
  VerdictKind verdict = VerdictKind::NotFalsified;
  std::optional<Counterexample> certificate;
  Stats stats;
  std::uint64_t seed = 0;
  std::vector<std::string> discarded;  // candidates whose exact replay failed

  bool found() const { return certificate.has_value(); }
};

// ------------------------------------------------------------------ tapes

// A search-side schedule for one modality. Values are stored as positions
// in the variable's range so that refinement can move them continuously.
struct TapeEntry {
  enum class Kind { Branch, Keep, Value, Duration, Loop };
  Kind kind;
  double u = 0;
};
using Tape = std::vector<TapeEntry>;

namespace detail {

inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return mix(mix(seed) ^ mix(stream * 0x100000001b3ULL) ^ index);
}

struct Domain {
  Rational lo, hi;
  double lo_d = 0, hi_d = 0;
  std::uint64_t points = 0;  // lattice size; 0 = continuous

  static Domain of(const SearchVar& v) {
    Domain d;
    d.lo = v.lo;
    d.hi = v.hi;
    d.lo_d = to_double(v.lo);
    d.hi_d = to_double(v.hi);
    d.points = v.lattice_points();
    return d;
  }

  double snap(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    if (points == 1) return 0;
    if (points > 1) {
      double n = static_cast<double>(points - 1);
      return std::round(u * n) / n;
    }
    double scale = ticks();
    return scale > 0 ? std::round(u * scale) / scale : 0.0;
  }
  // Continuous ranges are searched on multiples of 1/1024 above lo.
  double ticks() const { return (hi_d - lo_d) * 1024.0; }
  double min_step() const {
    if (points > 1) return 1.0 / static_cast<double>(points - 1);
    return ticks() > 0 ? 1.0 / ticks() : 1.0;
  }
  double value(double u) const { return lo_d + u * (hi_d - lo_d); }
  Rational exact(double u) const {
    if (points == 1) return lo;
    if (points > 1) {
      auto k = static_cast<unsigned long>(std::llround(u * static_cast<double>(points - 1)));
      return lo + (hi - lo) * Rational(k) / Rational(static_cast<unsigned long>(points - 1));
    }
    return lo + make_rational(std::lround(u * ticks()), 1024);
  }
};

inline bool contains_modality(const Formula& f) {
  return std::visit(overloaded{
                        [](const fml::Box&) { return true; },
                        [](const fml::Diamond&) { return true; },
                        [](const fml::Not& p) { return contains_modality(p.inner); },
                        [](const fml::And& p) { return contains_modality(p.lhs) || contains_modality(p.rhs); },
                        [](const fml::Or& p) { return contains_modality(p.lhs) || contains_modality(p.rhs); },
                        [](const fml::Implies& p) { return contains_modality(p.lhs) || contains_modality(p.rhs); },
                        [](const fml::Iff& p) { return contains_modality(p.lhs) || contains_modality(p.rhs); },
                        [](const fml::Forall& p) { return contains_modality(p.body); },
                        [](const fml::Exists& p) { return contains_modality(p.body); },
                        [](const auto&) { return false; },
                    },
                    f.node().v);
}

// Preorder numbering of Box/Diamond nodes; certificates refer to these.
struct ModalIndex {
  std::unordered_map<const void*, std::size_t> index;
  std::unordered_set<const void*> modal;  // nodes with a modality somewhere below
  std::size_t count = 0;

  explicit ModalIndex(const Formula& f) { walk(f); }

  bool walk(const Formula& f) {
    const void* key = &f.node();
    bool m = std::visit(overloaded{
                            [&](const fml::Box& p) {
                              index.emplace(key, count++);
                              walk(p.post);
                              return true;
                            },
                            [&](const fml::Diamond& p) {
                              index.emplace(key, count++);
                              walk(p.post);
                              return true;
                            },
                            [&](const fml::Not& p) { return walk(p.inner); },
                            [&](const fml::And& p) -> bool { return walk(p.lhs) | walk(p.rhs); },
                            [&](const fml::Or& p) -> bool { return walk(p.lhs) | walk(p.rhs); },
                            [&](const fml::Implies& p) -> bool { return walk(p.lhs) | walk(p.rhs); },
                            [&](const fml::Iff& p) -> bool { return walk(p.lhs) | walk(p.rhs); },
                            [&](const fml::Forall& p) { return walk(p.body); },
                            [&](const fml::Exists& p) { return walk(p.body); },
                            [](const auto&) { return false; },
                        },
                        f.node().v);
    if (m) modal.insert(key);
    return m;
  }

  std::size_t at(const Formula& f) const { return index.at(&f.node()); }
  bool first_order(const Formula& f) const { return !modal.count(&f.node()); }
};

struct Context {
  const Obligation& ob;
  const SearchConfig& cfg;
  ModalIndex modal;
  std::vector<Domain> box;
  std::unordered_map<Symbol, Domain> choice;
  Domain fallback;
  State<double> base_d;
  State<Rational> base_q;
  bool target;

  Context(const Obligation& o, const SearchConfig& c) : ob(o), cfg(c), modal(o.matrix) {
    for (const auto& v : ob.box) box.push_back(Domain::of(v));
    for (const auto& v : ob.choices) choice.emplace(v.name, Domain::of(v));
    fallback = Domain::of(SearchVar{Symbol(), Rational(-100), Rational(100)});
    for (const auto& [c, value] : ob.constants) base_q.set(c, value);
    for (auto s : ob.scratch) base_q.set(s, Rational(0));
    base_d = convert_state<double>(base_q);
    target = ob.kind == ObligationKind::FindWitness;
  }

  const Domain& domain(Symbol v) const {
    auto it = choice.find(v);
    return it == choice.end() ? fallback : it->second;
  }

  double duration_fraction(unsigned k) const {
    unsigned n = std::max(2u, cfg.duration_samples_per_ODE);
    return static_cast<double>(k) / static_cast<double>(n - 1);
  }
};

// Depth-first enumeration of decision sequences.
class Enumeration {
 public:
  std::size_t choose(std::size_t depth, std::size_t options) {
    if (depth < path_.size()) return path_[depth].first;
    path_.emplace_back(0, options);
    return 0;
  }
  // Moves to the next leaf; false when every leaf has been visited.
  bool advance(std::size_t depth_used) {
    path_.resize(std::min(path_.size(), depth_used));
    while (!path_.empty() && path_.back().first + 1 >= path_.back().second) path_.pop_back();
    if (path_.empty()) return false;
    ++path_.back().first;
    return true;
  }

 private:
  std::vector<std::pair<std::size_t, std::size_t>> path_;
};

template <class S>
class TapeResolver {
 public:
  using K = TapeEntry::Kind;

  TapeResolver(const Context& ctx, Tape& tape, std::mt19937_64* rng, Enumeration* en, ChoiceScript* out)
      : ctx_(ctx), tape_(tape), rng_(rng), en_(en), out_(out) {}

  Side branch(const State<S>&) {
    Side side = next(K::Branch, Symbol()).u >= 0.5 ? Side::Right : Side::Left;
    if (out_) out_->push_back(decision::Branch{side});
    return side;
  }

  S random_value(Symbol v, const State<S>& s) {
    const TapeEntry& e = next(K::Value, v);
    if constexpr (ScalarOps<S>::exact) {
      Rational value = e.kind == K::Keep ? s.get(v) : ctx_.domain(v).exact(e.u);
      if (out_) out_->push_back(decision::RandomValue{value});
      return value;
    } else {
      return e.kind == K::Keep ? s.get(v) : ctx_.domain(v).value(e.u);
    }
  }

  template <class MaxFn>
  S duration(const State<S>&, const hp::Ode&, MaxFn&& max_fn) {
    double u = next(K::Duration, Symbol()).u;
    S r = scalar<S>(0);
    if (u > 0) {
      if constexpr (ScalarOps<S>::exact) r = rational_from_double(u) * max_fn();
      else r = u * max_fn();
    }
    if constexpr (ScalarOps<S>::exact)
      if (out_) out_->push_back(decision::Duration{r});
    return r;
  }

  unsigned loop_count(const State<S>&) {
    auto n = static_cast<unsigned>(next(K::Loop, Symbol()).u);
    if (out_) out_->push_back(decision::LoopCount{n});
    return n;
  }

  std::size_t consumed() const { return pos_; }

 private:
  static bool compatible(K have, K want) {
    if (want == K::Value) return have == K::Value || have == K::Keep;
    return have == want;
  }

  const TapeEntry& next(K want, Symbol v) {
    if (pos_ < tape_.size() && compatible(tape_[pos_].kind, want)) return tape_[pos_++];
    TapeEntry e;
    if (en_) e = enumerate(want, v);
    else if (rng_) e = sample(want, v);
    else throw ScriptError("schedule does not match the program");
    tape_.resize(pos_);
    tape_.push_back(e);
    return tape_[pos_++];
  }

  TapeEntry enumerate(K want, Symbol v) {
    switch (want) {
      case K::Branch: return {K::Branch, static_cast<double>(en_->choose(pos_, 2))};
      case K::Loop: return {K::Loop, static_cast<double>(en_->choose(pos_, ctx_.cfg.max_loop_count + 1))};
      case K::Duration: {
        unsigned n = std::max(2u, ctx_.cfg.duration_samples_per_ODE);
        std::size_t k = en_->choose(pos_, n);
        return {K::Duration, ctx_.duration_fraction(static_cast<unsigned>(n - 1 - k))};  // maximum first
      }
      default: {
        const Domain& d = ctx_.domain(v);
        static constexpr double fixed[] = {0.0, 1.0, 0.5, 0.25, 0.75};
        std::size_t options = d.points > 0 && d.points <= 33 ? d.points : std::size(fixed);
        std::size_t k = en_->choose(pos_, options + 1);
        if (k == 0) return {K::Keep, 0};
        if (d.points > 0 && d.points <= 33) return {K::Value, d.snap(static_cast<double>(k - 1) / std::max<double>(1, d.points - 1))};
        return {K::Value, d.snap(fixed[k - 1])};
      }
    }
  }

  TapeEntry sample(K want, Symbol v) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double p = unit(*rng_);
    switch (want) {
      case K::Branch: return {K::Branch, p < 0.5 ? 0.0 : 1.0};
      case K::Loop: {
        std::uniform_int_distribution<unsigned> n(0, ctx_.cfg.max_loop_count);
        return {K::Loop, static_cast<double>(n(*rng_))};
      }
      case K::Duration: {
        if (p < 0.1) return {K::Duration, 0.0};
        if (p < 0.5) return {K::Duration, 1.0};
        unsigned n = std::max(2u, ctx_.cfg.duration_samples_per_ODE);
        std::uniform_int_distribution<unsigned> k(0, n - 1);
        return {K::Duration, ctx_.duration_fraction(k(*rng_))};
      }
      default: {
        const Domain& d = ctx_.domain(v);
        if (p < 0.2) return {K::Keep, 0};
        if (p < 0.35) return {K::Value, 0.0};
        if (p < 0.5) return {K::Value, 1.0};
        return {K::Value, d.snap(unit(*rng_))};
      }
    }
  }

  const Context& ctx_;
  Tape& tape_;
  std::mt19937_64* rng_;
  Enumeration* en_;
  ChoiceScript* out_;
  std::size_t pos_ = 0;
};

// Margins in double only; exact evaluation reports +-1.
template <class S>
double margin_of(const State<S>& s, const Formula& f, bool truth) {
  if constexpr (ScalarOps<S>::exact) return truth ? 1.0 : -1.0;
  else return violation_margin(s, f);
}

// Decides <p> post when p is loop- and ODE-free and every x := * in it is
// pinned by a conjunct x = t of post (t not written afterwards). Any other
// value for x leaves that conjunct false, so the enumeration is complete.
template <class S>
class DiamondDecider {
 public:
  struct Result {
    std::optional<bool> truth;
    double margin;  // > 0 leans towards the diamond holding
  };

  explicit DiamondDecider(const Formula& post) : post_(post) { conjuncts(post, parts_); }

  Result run(const Program& p, const State<S>& s) {
    if (contains_modality(post_)) return undecided();
    return step({p}, s);
  }

 private:
  static Result undecided() { return {std::nullopt, -std::numeric_limits<double>::infinity()}; }

  Result step(std::vector<Program> k, State<S> s) {
    while (!k.empty()) {
      Program p = k.back();
      k.pop_back();
      const auto& v = p.node().v;
      if (auto* a = std::get_if<hp::Seq>(&v)) {
        k.push_back(a->second);
        k.push_back(a->first);
      } else if (auto* a = std::get_if<hp::Assign>(&v)) {
        s.update(a->var, eval_term(s, a->value));
      } else if (auto* a = std::get_if<hp::Test>(&v)) {
        if (!eval_fol(s, a->cond)) return {false, margin_of(s, a->cond, false)};
      } else if (auto* a = std::get_if<hp::Choice>(&v)) {
        auto left = k;
        left.push_back(a->lhs);
        Result l = step(std::move(left), s);
        k.push_back(a->rhs);
        Result r = step(std::move(k), std::move(s));
        std::optional<bool> truth;
        if (l.truth == true || r.truth == true) truth = true;
        else if (l.truth == false && r.truth == false) truth = false;
        return {truth, std::max(l.margin, r.margin)};
      } else if (auto* a = std::get_if<hp::RandomAssign>(&v)) {
        SymbolSet written;
        for (const auto& q : k)
          for (auto w : bound_variables(q)) written.insert(w);
        if (written.count(a->var)) return undecided();
        std::optional<Term> pin;
        for (const auto& part : parts_) {
          auto* c = std::get_if<fml::Compare>(&part.node().v);
          if (!c || c->op != CmpOp::Eq) continue;
          for (auto [x, t] : {std::pair{&c->lhs, &c->rhs}, std::pair{&c->rhs, &c->lhs}}) {
            auto* xv = std::get_if<term::Var>(&x->node().v);
            if (!xv || !(xv->name == a->var)) continue;
            auto fv = free_variables(*t);
            bool ok = !fv.count(a->var);
            for (auto w : fv) ok = ok && !written.count(w);
            if (ok && !pin) pin = *t;
          }
        }
        if (!pin) return undecided();
        s.update(a->var, eval_term(s, *pin));
      } else {
        return undecided();
      }
    }
    bool t = eval_fol(s, post_);
    return {t, margin_of(s, post_, t)};
  }

  Formula post_;
  std::vector<Formula> parts_;
};

struct Score {
  bool achieved = false;
  double margin = -std::numeric_limits<double>::infinity();
};

inline bool better(const Score& a, const Score& b) {
  if (a.achieved != b.achieved) return a.achieved;
  return a.margin > b.margin;
}

// Evaluates the matrix towards a target truth value. Explore samples or
// enumerates schedules for each existential modality and keeps the best;
// Replay reuses the tapes (extending them from rng when given).
template <class S>
class Evaluator {
 public:
  enum class Mode { Explore, Replay };

  Evaluator(const Context& ctx, Mode mode, std::vector<Tape>& tapes, std::mt19937_64* rng,
            std::vector<ChoiceScript>* scripts = nullptr)
      : ctx_(ctx), mode_(mode), tapes_(tapes), rng_(rng), scripts_(scripts) {
    tapes_.resize(ctx.modal.count);
    if (scripts_) scripts_->assign(ctx.modal.count, {});
  }

  Score eval(const Formula& f, const State<S>& s, bool target) {
    if (ctx_.modal.first_order(f)) return leaf(f, s, target);
    return std::visit(
        overloaded{
            [&](const fml::Not& p) { return eval(p.inner, s, !target); },
            [&](const fml::And& p) { return junction(p.lhs, true, p.rhs, true, s, target); },
            [&](const fml::Or& p) { return junction(p.lhs, false, p.rhs, false, s, !target); },
            [&](const fml::Implies& p) { return junction(p.lhs, true, p.rhs, false, s, !target); },
            [&](const fml::Box& p) { return modal(f, p.program, p.post, true, s, target); },
            [&](const fml::Diamond& p) { return modal(f, p.program, p.post, false, s, target); },
            [&](const auto&) -> Score { throw EvalError("unsupported formula shape under a modality: " + pretty_print(f)); },
        },
        f.node().v);
  }

  std::uint64_t runs = 0;
  std::vector<std::size_t> used;
  bool numeric_only = false;

 private:
  // Drives (l == want_l) & (r == want_r) towards `target`: true needs both
  // sides, false needs the better of the two.
  Score junction(const Formula& l, bool want_l, const Formula& r, bool want_r, const State<S>& s, bool target) {
    std::size_t m0 = used.size();
    Score a = eval(l, s, target ? want_l : !want_l);
    std::size_t m1 = used.size();
    Score b = eval(r, s, target ? want_r : !want_r);
    if (target) return {a.achieved && b.achieved, std::min(a.margin, b.margin)};
    if (!better(b, a)) {
      used.erase(used.begin() + static_cast<std::ptrdiff_t>(m1), used.end());
      return a;
    }
    used.erase(used.begin() + static_cast<std::ptrdiff_t>(m0), used.begin() + static_cast<std::ptrdiff_t>(m1));
    return b;
  }

  Score leaf(const Formula& f, const State<S>& s, bool target) {
    try {
      if constexpr (ScalarOps<S>::exact) {
        if (!s.all_exact()) {
          numeric_only = true;
          double m = violation_margin(convert_state<double>(s), f);
          double tm = target ? m : -m;
          return {tm >= ctx_.cfg.numeric_padding, tm};
        }
        bool t = eval_fol(s, f);
        return {t == target, t == target ? 1.0 : -1.0};
      } else {
        bool t = eval_fol(s, f);
        double m = violation_margin(s, f);
        double tm = target ? m : -m;
        if (t == target) return {true, std::max(tm, 0.0)};
        return {false, std::min(tm, -std::numeric_limits<double>::denorm_min())};
      }
    } catch (const EvalError&) {
      return {};
    }
  }

  Score modal(const Formula& f, const Program& prog, const Formula& post, bool is_box, const State<S>& s,
              bool target) {
    std::size_t idx = ctx_.modal.at(f);
    bool existential = is_box != target;
    if (!existential) {
      // Diamond towards false, or Box towards true (= no run reaches !post).
      used.push_back(idx);
      ++runs;
      try {
        auto r = is_box ? DiamondDecider<S>(f_not(post)).run(prog, s) : DiamondDecider<S>(post).run(prog, s);
        if (!r.truth) return {};
        return {!*r.truth, -r.margin};
      } catch (const EvalError&) {
        return {};
      }
    }
    if constexpr (!ScalarOps<S>::exact) {
      if (mode_ == Mode::Explore) return explore(idx, prog, post, s, target);
    }
    used.push_back(idx);
    Tape& tape = tapes_[idx];
    ChoiceScript* out = scripts_ ? &(*scripts_)[idx] : nullptr;
    if (out) out->clear();
    return run_leaf(tape, prog, post, s, target, rng_, nullptr, out);
  }

  Score run_leaf(Tape& tape, const Program& prog, const Formula& post, const State<S>& s, bool target,
                 std::mt19937_64* rng, Enumeration* en, ChoiceScript* out) {
    TapeResolver<S> resolver(ctx_, tape, rng, en, out);
    ++runs;
    Outcome<S> outcome = Final<S>{s};
    try {
      outcome = run_with(s, prog, resolver, ctx_.cfg.semantics);
    } catch (const ScriptError&) {
      tape.resize(resolver.consumed());
      return {false, -1e9};
    } catch (const EvalError&) {
      tape.resize(resolver.consumed());
      return {false, -1e9};
    }
    tape.resize(resolver.consumed());
    if (auto* a = std::get_if<Aborted<S>>(&outcome)) {
      double m = -1.0;
      if constexpr (!ScalarOps<S>::exact) {
        try {
          m = std::clamp(violation_margin(a->state, a->failed_test), -100.0, 0.0);
        } catch (const EvalError&) {
        }
      }
      return {false, -1e3 + m};
    }
    return eval(post, std::get<Final<S>>(outcome).state, target);
  }

  Score explore(std::size_t idx, const Program& prog, const Formula& post, const State<S>& s, bool target) {
    std::size_t mark = used.size();
    Score best;
    Tape best_tape;
    std::vector<std::size_t> best_used;
    std::vector<Tape> best_nested;
    bool have = false;

    auto consider = [&](Tape& tape, Score sc) {
      if (!have || better(sc, best)) {
        have = true;
        best = sc;
        best_tape = tape;
        best_used.assign(used.begin() + static_cast<std::ptrdiff_t>(mark), used.end());
        best_nested.clear();
        for (auto n : best_used) best_nested.push_back(tapes_[n]);
      }
      used.resize(mark);
    };

    if (ctx_.cfg.enumerate_cap > 0) {
      Enumeration en;
      for (std::uint64_t n = 0; n < ctx_.cfg.enumerate_cap; ++n) {
        Tape tape;
        Score sc = run_leaf(tape, prog, post, s, target, nullptr, &en, nullptr);
        std::size_t depth = tape.size();
        consider(tape, sc);
        if (best.achieved || !en.advance(depth)) break;
      }
    } else {
      for (unsigned n = 0; n < std::max(1u, ctx_.cfg.inner_samples); ++n) {
        Tape tape;
        Score sc = run_leaf(tape, prog, post, s, target, rng_, nullptr, nullptr);
        consider(tape, sc);
        if (best.achieved) break;
      }
    }
    used.push_back(idx);
    tapes_[idx] = best_tape;
    for (std::size_t i = 0; i < best_used.size(); ++i) {
      used.push_back(best_used[i]);
      tapes_[best_used[i]] = best_nested[i];
    }
    return best;
  }

  const Context& ctx_;
  Mode mode_;
  std::vector<Tape>& tapes_;
  std::mt19937_64* rng_;
  std::vector<ChoiceScript>* scripts_;
};

// Independent exact check of a certificate: replays every script with the
// plain script interpreter and decides the remaining modalities exactly.
class Certifier {
 public:
  Certifier(const Obligation& ob, const Counterexample& cex, const SearchConfig& cfg)
      : ob_(ob), cex_(cex), cfg_(cfg), modal_(ob.matrix) {}

  bool eval(const Formula& f, const State<Rational>& s, bool target) {
    if (modal_.first_order(f)) return leaf(f, s, target);
    return std::visit(
        overloaded{
            [&](const fml::Not& p) { return eval(p.inner, s, !target); },
            [&](const fml::And& p) {
              return target ? eval(p.lhs, s, true) && eval(p.rhs, s, true)
                            : eval(p.lhs, s, false) || eval(p.rhs, s, false);
            },
            [&](const fml::Or& p) {
              return target ? eval(p.lhs, s, true) || eval(p.rhs, s, true)
                            : eval(p.lhs, s, false) && eval(p.rhs, s, false);
            },
            [&](const fml::Implies& p) {
              return target ? eval(p.lhs, s, false) || eval(p.rhs, s, true)
                            : eval(p.lhs, s, true) && eval(p.rhs, s, false);
            },
            [&](const fml::Box& p) { return modal(f, p.program, p.post, true, s, target); },
            [&](const fml::Diamond& p) { return modal(f, p.program, p.post, false, s, target); },
            [&](const auto&) -> bool { throw EvalError("unsupported formula shape under a modality"); },
        },
        f.node().v);
  }

  bool numeric_only = false;
  std::string failure;
  std::string decisive_formula;
  bool decisive_value = false;
  Trace<Rational> trace;

 private:
  bool leaf(const Formula& f, const State<Rational>& s, bool target) {
    try {
      bool t;
      if (s.all_exact()) {
        t = eval_fol(s, f);
        decisive_formula = pretty_print(f);
        decisive_value = t;
        if (t != target) failure = "formula has the wrong truth value: " + decisive_formula;
        return t == target;
      }
      numeric_only = true;
      double m = violation_margin(convert_state<double>(s), f);
      t = m > 0;
      decisive_formula = pretty_print(f);
      decisive_value = t;
      bool ok = (target ? m : -m) >= cfg_.numeric_padding;
      if (!ok) failure = "numeric margin below padding: " + decisive_formula;
      return ok;
    } catch (const EvalError& e) {
      failure = e.what();
      return false;
    }
  }

  bool modal(const Formula& f, const Program& prog, const Formula& post, bool is_box, const State<Rational>& s,
             bool target) {
    std::size_t idx = modal_.at(f);
    if (is_box == target) {
      try {
        auto r = is_box ? DiamondDecider<Rational>(f_not(post)).run(prog, s)
                        : DiamondDecider<Rational>(post).run(prog, s);
        if (!r.truth) {
          failure = "modality " + std::to_string(idx) + " cannot be decided";
          return false;
        }
        decisive_formula = pretty_print(is_box ? box(prog, post) : diamond(prog, post));
        decisive_value = is_box ? !*r.truth : *r.truth;
        if (*r.truth) failure = "modality " + std::to_string(idx) + " has the wrong truth value";
        return !*r.truth;
      } catch (const EvalError& e) {
        failure = e.what();
        return false;
      }
    }
    static const ChoiceScript none;
    auto it = cex_.scripts.find(idx);
    RunResult<Rational> rr{Final<Rational>{s}, {}};
    try {
      rr = run(s, prog, it == cex_.scripts.end() ? none : it->second, cfg_.semantics);
    } catch (const ScriptError& e) {
      failure = e.what();
      return false;
    } catch (const EvalError& e) {
      failure = e.what();
      return false;
    }
    if (trace.empty()) trace = rr.trace;
    if (auto* a = std::get_if<Aborted<Rational>>(&rr.outcome)) {
      failure = "run aborted at ?(" + pretty_print(a->failed_test) + ")";
      return false;
    }
    return eval(post, std::get<Final<Rational>>(rr.outcome).state, target);
  }

  const Obligation& ob_;
  const Counterexample& cex_;
  const SearchConfig& cfg_;
  ModalIndex modal_;
};

}  // namespace detail

struct CertifyResult {
  bool ok = false;
  bool exact = false;
  std::string failure;
};

inline State<Rational> initial_state(const Obligation& ob, const std::vector<std::pair<Symbol, Rational>>& assignment) {
  State<Rational> s;
  for (const auto& [c, value] : ob.constants) s.set(c, value);
  for (auto v : ob.scratch) s.set(v, Rational(0));
  for (const auto& v : ob.box) {
    auto it = std::find_if(assignment.begin(), assignment.end(), [&](const auto& p) { return p.first == v.name; });
    if (it == assignment.end()) throw EvalError("certificate assigns no value to " + v.name.name());
    s.set(v.name, it->second);
  }
  return s;
}

// Exact check that `cex` falsifies (or witnesses) the obligation. Fills in
// the decisive formula and the trace of the first replayed run.
inline CertifyResult certify(const Obligation& ob, Counterexample& cex, const SearchConfig& cfg = {}) {
  CertifyResult out;
  State<Rational> s;
  try {
    s = initial_state(ob, cex.assignment);
  } catch (const EvalError& e) {
    out.failure = e.what();
    return out;
  }
  detail::Certifier c(ob, cex, cfg);
  bool target = ob.kind == ObligationKind::FindWitness;
  bool ok = false;
  try {
    ok = c.eval(ob.matrix, s, target);
  } catch (const EvalError& e) {
    c.failure = e.what();
  }
  out.ok = ok;
  out.exact = ok && !c.numeric_only;
  out.failure = ok ? "" : c.failure;
  if (ok) {
    cex.exact = out.exact;
    cex.decisive_formula = c.decisive_formula;
    cex.decisive_value = c.decisive_value;
    cex.trace = std::move(c.trace);
  }
  return out;
}

namespace detail {

struct Candidate {
  std::uint64_t index = 0;
  std::vector<double> u;
  std::vector<Tape> tapes;
  Score score;
  std::uint64_t runs = 0;
};

class Search {
 public:
  Search(const Obligation& ob, const SearchConfig& cfg) : ob_(ob), cfg_(cfg), ctx_(ob, cfg) {
    verdict_.obligation = ob.name;
    verdict_.kind = ob.kind;
    verdict_.seed = cfg.seed;
    verdict_.verdict = ob.kind == ObligationKind::FalsifyUniversal ? VerdictKind::NotFalsified : VerdictKind::NoWitnessFound;
  }

  Verdict run() {
    auto t0 = std::chrono::steady_clock::now();
    std::uint64_t refine_reserve = std::min<std::uint64_t>(cfg_.budget / 4, std::uint64_t(cfg_.refine_starts) * cfg_.local_refine_iters);
    std::uint64_t grid_cap = cfg_.budget / 5;
    bool done = grid(grid_cap);
    std::uint64_t after_grid = verdict_.stats.evaluations;
    if (!done) done = random(cfg_.budget > refine_reserve ? cfg_.budget - refine_reserve : 0);
    std::uint64_t after_random = verdict_.stats.evaluations;
    if (!done) refine();
    verdict_.stats.coverage = "grid " + std::to_string(grid_points_) + " points (level " + std::to_string(grid_level_) +
                              "), random " + std::to_string(after_random - after_grid) + " evaluations, refinement " +
                              std::to_string(verdict_.stats.evaluations - after_random) + " evaluations";
    verdict_.stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return verdict_;
  }

 private:
  using Eval = Evaluator<double>;

  State<double> point_state(const std::vector<double>& u) const {
    State<double> s = ctx_.base_d;
    for (std::size_t i = 0; i < u.size(); ++i) s.set(ob_.box[i].name, ctx_.box[i].value(u[i]));
    return s;
  }

  void evaluate(Candidate& c, typename Eval::Mode mode, std::uint64_t rng_seed) const {
    std::mt19937_64 rng(rng_seed);
    Eval ev(ctx_, mode, c.tapes, &rng);
    try {
      c.score = ev.eval(ob_.matrix, point_state(c.u), ctx_.target);
    } catch (const EvalError&) {
      c.score = {};
    }
    c.runs = std::max<std::uint64_t>(ev.runs, 1);
  }

  void evaluate_batch(std::vector<Candidate>& batch, std::uint64_t stream) const {
    unsigned workers = std::min<unsigned>(worker_count(cfg_), static_cast<unsigned>(batch.size()));
    auto work = [&](unsigned w) {
      for (std::size_t i = w; i < batch.size(); i += workers) {
        auto& c = batch[i];
        std::mt19937_64 rng(stream_seed(cfg_.seed, stream, c.index));
        if (c.u.empty() && !ob_.box.empty()) {
          std::uniform_real_distribution<double> unit(0.0, 1.0);
          for (const auto& d : ctx_.box) {
            double p = unit(rng);
            c.u.push_back(p < 0.05 ? 0.0 : p < 0.1 ? 1.0 : d.snap(unit(rng)));
          }
        }
        evaluate(c, Eval::Mode::Explore, rng());
      }
    };
    if (workers <= 1) {
      work(0);
      return;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  // Bookkeeping in index order; true once a certificate is accepted.
  bool absorb(std::vector<Candidate>& batch) {
    for (auto& c : batch) {
      verdict_.stats.evaluations += c.runs;
      keep_top(c);
    }
    for (auto& c : batch)
      if (c.score.achieved && accept(c)) return true;
    return false;
  }

  void keep_top(const Candidate& c) {
    if (cfg_.refine_starts == 0) return;
    auto pos = std::find_if(top_.begin(), top_.end(), [&](const Candidate& t) { return better(c.score, t.score); });
    if (pos == top_.end() && top_.size() >= cfg_.refine_starts) return;
    top_.insert(pos, c);
    if (top_.size() > cfg_.refine_starts) top_.pop_back();
  }

  bool accept(const Candidate& c) {
    Counterexample cex;
    for (std::size_t i = 0; i < ob_.box.size(); ++i) cex.assignment.emplace_back(ob_.box[i].name, ctx_.box[i].exact(c.u[i]));
    cex.margin = c.score.margin;
    // Resolve the tapes into exact decisions.
    std::vector<Tape> tapes = c.tapes;
    std::vector<ChoiceScript> scripts;
    Evaluator<Rational> ev(ctx_, Evaluator<Rational>::Mode::Replay, tapes, nullptr, &scripts);
    Score exact;
    try {
      exact = ev.eval(ob_.matrix, initial_state(ob_, cex.assignment), ctx_.target);
    } catch (const EvalError& e) {
      verdict_.discarded.push_back("candidate " + std::to_string(c.index) + ": " + e.what());
      return false;
    }
    if (!exact.achieved) {
      verdict_.discarded.push_back("candidate " + std::to_string(c.index) + ": exact replay disagrees with the search");
      return false;
    }
    for (auto n : ev.used)
      if (!scripts[n].empty()) cex.scripts[n] = scripts[n];
    CertifyResult r = certify(ob_, cex, cfg_);
    if (!r.ok) {
      verdict_.discarded.push_back("candidate " + std::to_string(c.index) + ": " + r.failure);
      return false;
    }
    verdict_.certificate = std::move(cex);
    verdict_.verdict = ob_.kind == ObligationKind::FalsifyUniversal ? VerdictKind::Falsified : VerdictKind::WitnessFound;
    return true;
  }

  std::uint64_t remaining(std::uint64_t limit) const {
    return limit > verdict_.stats.evaluations ? limit - verdict_.stats.evaluations : 0;
  }

  // Nested dyadic grids, coarse to fine; lattice variables use their own points.
  bool grid(std::uint64_t cap) {
    std::size_t n = ob_.box.size();
    std::vector<std::vector<double>> prev(n);
    for (unsigned level = 0; level <= cfg_.grid_levels; ++level) {
      std::vector<std::vector<double>> pts(n);
      double count = 1;
      for (std::size_t i = 0; i < n; ++i) {
        const Domain& d = ctx_.box[i];
        std::uint64_t k = std::uint64_t(1) << level;
        for (std::uint64_t j = 0; j <= k; ++j) {
          double u = d.snap(level == 0 ? 0.5 : static_cast<double>(j) / static_cast<double>(k));
          if (std::find(pts[i].begin(), pts[i].end(), u) == pts[i].end()) pts[i].push_back(u);
          if (level == 0) break;
        }
        std::sort(pts[i].begin(), pts[i].end());
        count *= static_cast<double>(pts[i].size());
      }
      if (count > static_cast<double>(remaining(cap)) && level > 0) break;
      grid_level_ = level;
      std::vector<std::size_t> odo(n, 0);
      std::vector<Candidate> batch;
      bool more = true;
      while (more) {
        bool fresh = n == 0 && level == 0;
        std::vector<double> u(n);
        for (std::size_t i = 0; i < n; ++i) {
          u[i] = pts[i][odo[i]];
          if (std::find(prev[i].begin(), prev[i].end(), u[i]) == prev[i].end()) fresh = true;
        }
        if (fresh) {
          Candidate c;
          c.index = next_index_++;
          c.u = std::move(u);
          batch.push_back(std::move(c));
          ++grid_points_;
        }
        more = false;
        for (std::size_t i = 0; i < n; ++i) {
          if (++odo[i] < pts[i].size()) {
            more = true;
            break;
          }
          odo[i] = 0;
        }
        if (batch.size() >= cfg_.batch_size || (!more && !batch.empty())) {
          evaluate_batch(batch, 1);
          if (absorb(batch)) return true;
          batch.clear();
          if (remaining(cap) == 0) return false;
        }
      }
      prev = pts;
      if (n == 0) break;
    }
    return false;
  }

  bool random(std::uint64_t limit) {
    while (remaining(limit) > 0) {
      std::size_t size = std::min<std::uint64_t>(cfg_.batch_size, remaining(limit));
      std::vector<Candidate> batch(size);
      for (auto& c : batch) c.index = next_index_++;
      evaluate_batch(batch, 2);
      if (absorb(batch)) return true;
    }
    return false;
  }

  // Coordinate descent over box positions and continuous tape entries.
  bool refine() {
    std::vector<Candidate> starts = top_;
    for (std::size_t k = 0; k < starts.size(); ++k) {
      Candidate cur = starts[k];
      double step = 0.125;
      std::uint64_t trial = 0;
      while (trial < cfg_.local_refine_iters && remaining(cfg_.budget) > 0 && step > 1e-7) {
        bool improved = false;
        std::size_t coords = cur.u.size();
        std::vector<std::pair<std::size_t, std::size_t>> tape_coords;
        for (std::size_t t = 0; t < cur.tapes.size(); ++t)
          for (std::size_t e = 0; e < cur.tapes[t].size(); ++e)
            if (cur.tapes[t][e].kind == TapeEntry::Kind::Value || cur.tapes[t][e].kind == TapeEntry::Kind::Duration)
              tape_coords.emplace_back(t, e);
        for (std::size_t i = 0; i < coords + tape_coords.size() && !improved; ++i) {
          for (double dir : {1.0, -1.0}) {
            if (trial >= cfg_.local_refine_iters || remaining(cfg_.budget) == 0) break;
            Candidate next = cur;
            next.index = next_index_++;
            if (i < coords) {
              const Domain& d = ctx_.box[i];
              next.u[i] = d.snap(cur.u[i] + dir * std::max(step, d.min_step()));
              if (next.u[i] == cur.u[i]) continue;
            } else {
              auto [t, e] = tape_coords[i - coords];
              TapeEntry& entry = next.tapes[t][e];
              double s = entry.kind == TapeEntry::Kind::Duration ? std::max(step, ctx_.duration_fraction(1)) : step;
              double moved = std::clamp(entry.u + dir * s, 0.0, 1.0);
              if (entry.kind == TapeEntry::Kind::Duration) {
                double n = static_cast<double>(std::max(2u, cfg_.duration_samples_per_ODE) - 1);
                moved = std::round(moved * n) / n;
              }
              if (moved == entry.u) continue;
              entry.u = moved;
            }
            ++trial;
            evaluate(next, Eval::Mode::Replay, stream_seed(cfg_.seed, 3, next.index));
            verdict_.stats.evaluations += next.runs;
            if (next.score.achieved && accept(next)) return true;
            if (better(next.score, cur.score)) {
              cur = std::move(next);
              improved = true;
              break;
            }
          }
        }
        if (!improved) {
          step *= 0.5;
          if (coords + tape_coords.size() == 0) break;
        }
      }
    }
    return false;
  }

  const Obligation& ob_;
  const SearchConfig& cfg_;
  Context ctx_;
  Verdict verdict_;
  std::vector<Candidate> top_;
  std::uint64_t next_index_ = 0;
  std::uint64_t grid_points_ = 0;
  unsigned grid_level_ = 0;
};

}  // namespace detail

inline Verdict check(const Obligation& ob, const SearchConfig& cfg = {}) { return detail::Search(ob, cfg).run(); }

inline nlohmann::ordered_json certificate_json(const Counterexample& cex) {
  nlohmann::ordered_json j;
  auto& a = j["assignment"] = nlohmann::ordered_json::object();
  for (const auto& [v, value] : cex.assignment) a[v.name()] = to_string(value);
  auto& s = j["scripts"] = nlohmann::ordered_json::object();
  for (const auto& [idx, script] : cex.scripts) {
    auto& lines = s[std::to_string(idx)] = nlohmann::ordered_json::array();
    for (const auto& d : script) lines.push_back(to_string(d));
  }
  j["margin"] = cex.margin;
  j["exact"] = cex.exact;
  return j;
}

inline nlohmann::ordered_json to_json(const Verdict& v) {
  nlohmann::ordered_json j;
  j["obligation"] = v.obligation;
  j["kind"] = to_string(v.kind);
  j["verdict"] = to_string(v.verdict);
  j["evaluations"] = v.stats.evaluations;
  j["seed"] = v.seed;
  if (v.certificate) j["certificate"] = certificate_json(*v.certificate);
  return j;
}

inline std::string describe(const Verdict& v) {
  std::string out = v.obligation + ": " + to_string(v.verdict) + " (" + std::to_string(v.stats.evaluations) +
                    " evaluations, seed " + std::to_string(v.seed) + ")\n";
  out += "  coverage: " + v.stats.coverage + "\n";
  if (const auto& c = v.certificate) {
    out += "  assignment:";
    for (const auto& [var, value] : c->assignment) out += " " + var.name() + "=" + to_string(value);
    out += "\n";
    for (const auto& [idx, script] : c->scripts) {
      out += "  modality " + std::to_string(idx) + ":";
      for (const auto& d : script) out += " [" + to_string(d) + "]";
      out += "\n";
    }
    out += "  decisive: " + c->decisive_formula + " is " + (c->decisive_value ? "true" : "false") + "\n";
    out += std::string("  certified ") + (c->exact ? "exactly" : "numerically only (padding 1e-9)") + "\n";
  }
  for (const auto& d : v.discarded) out += "  discarded " + d + "\n";
  return out;
}

}  // namespace hpcheck
