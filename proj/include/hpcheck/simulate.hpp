#pragma once

// Random executions of a model's system (the loop), for smoke testing a
// model against its guarantee.

#include <hpcheck/model.hpp>
#include <hpcheck/semantics.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hpcheck {

struct RandomSimConfig {
  unsigned max_iterations = 8;
  unsigned init_attempts = 2000;
  unsigned grid = 64;  // values are drawn from lo + k (hi - lo) / grid
  SemanticsConfig semantics;
};

class RandomResolver {
 public:
  RandomResolver(const Model& m, const State<Rational>& consts, std::mt19937_64& rng, const RandomSimConfig& cfg)
      : model_(m), consts_(consts), rng_(rng), cfg_(cfg) {}

  Side branch(const State<double>&) { return coin() ? Side::Left : Side::Right; }

  double random_value(Symbol v, const State<double>&) {
    auto [lo, hi] = domain_bounds(model_, v, consts_);
    return pick(to_double(lo), to_double(hi));
  }

  template <class MaxFn>
  double duration(const State<double>&, const hp::Ode&, MaxFn&& max_fn) {
    double max = max_fn();
    std::uniform_int_distribution<unsigned> k(0, 4);
    unsigned n = k(rng_);
    return n == 4 ? max : max * static_cast<double>(n) / 4.0;
  }

  unsigned loop_count(const State<double>&) {
    std::uniform_int_distribution<unsigned> n(1, cfg_.max_iterations);
    return n(rng_);
  }

  double pick(double lo, double hi) {
    std::uniform_int_distribution<unsigned> k(0, cfg_.grid);
    return lo + (hi - lo) * static_cast<double>(k(rng_)) / static_cast<double>(cfg_.grid);
  }

 private:
  bool coin() { return std::uniform_int_distribution<int>(0, 1)(rng_) == 0; }

  const Model& model_;
  const State<Rational>& consts_;
  std::mt19937_64& rng_;
  const RandomSimConfig& cfg_;
};

// Constants from the model's samples, overridden by `overrides`.
inline State<Rational> constant_state(const Model& m, const std::map<Symbol, Rational>& overrides = {}) {
  State<Rational> s;
  for (const auto& c : m.constants) {
    auto it = overrides.find(c.name);
    s.set(c.name, it == overrides.end() ? c.sample : it->second);
  }
  return s;
}

// Rejection sampling of INIT over the DOMAINS grid; nullopt when no attempt succeeds.
inline std::optional<State<double>> sample_initial_state(const Model& m, const State<Rational>& consts,
                                                         std::mt19937_64& rng, const RandomSimConfig& cfg = {}) {
  RandomResolver r(m, consts, rng, cfg);
  for (unsigned attempt = 0; attempt < cfg.init_attempts; ++attempt) {
    State<double> s = convert_state<double>(consts);
    for (auto v : m.declared) {
      if (m.is_constant(v)) continue;
      auto [lo, hi] = domain_bounds(m, v, consts);
      s.set(v, r.pick(to_double(lo), to_double(hi)));
    }
    try {
      if (eval_fol(s, m.init)) return s;
    } catch (const EvalError&) {
    }
  }
  return std::nullopt;
}

struct RandomSimSummary {
  unsigned runs = 0;
  unsigned aborted = 0;
  unsigned completed = 0;
  unsigned violations = 0;  // completed runs with the guarantee false at some loop boundary or plant endpoint
  unsigned no_initial_state = 0;
  std::vector<std::string> violation_notes;
};

inline RandomSimSummary simulate_random(const Model& m, unsigned n, std::uint64_t seed,
                                        const std::map<Symbol, Rational>& overrides = {},
                                        const RandomSimConfig& cfg = {}) {
  RandomSimSummary out;
  State<Rational> consts = constant_state(m, overrides);
  std::mt19937_64 rng(seed);
  Program system = m.system();
  for (unsigned i = 0; i < n; ++i) {
    ++out.runs;
    auto init = sample_initial_state(m, consts, rng, cfg);
    if (!init) {
      ++out.no_initial_state;
      continue;
    }
    RandomResolver resolver(m, consts, rng, cfg);
    Trace<double> trace;
    Outcome<double> outcome = Final<double>{*init};
    try {
      outcome = run_with(*init, system, resolver, cfg.semantics, &trace);
    } catch (const EvalError&) {
      ++out.aborted;
      continue;
    }
    if (std::holds_alternative<Aborted<double>>(outcome)) {
      ++out.aborted;
      continue;
    }
    ++out.completed;
    bool ok = eval_fol(std::get<Final<double>>(outcome).state, m.guarantee);
    for (const auto& e : trace)
      if (e.construct == "ode" || e.construct == "start") ok = ok && eval_fol(e.state, m.guarantee);
    if (!ok) {
      ++out.violations;
      out.violation_notes.push_back("run " + std::to_string(i));
    }
  }
  return out;
}

}  // namespace hpcheck
