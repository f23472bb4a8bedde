#pragma once

// Rows of validity questions over one model: the loop-rule obligations for
// an invariant plus extra conjuncts (rho, not chi, ...), aggregated into a
// Yes/No answer.

#include <hpcheck/checker.hpp>
#include <hpcheck/model.hpp>
#include <hpcheck/obligations.hpp>
#include <hpcheck/parser.hpp>

#include <json.hpp>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpcheck {

// not chi established through a psi witness: zeta_general[var := term].
struct PsiRoute {
  std::string general;
  std::string var;
  std::string term;
};

struct SuiteConjunct {
  std::string kind;  // loop, rho, gamma, chi, not_chi, psi, exploit, friendly
  std::optional<PsiRoute> via_psi;
};

struct SuiteEntry {
  std::string invariant;
  std::vector<SuiteConjunct> conjuncts;
};

struct SuiteRow {
  int row = 0;
  std::string model;
  SuiteEntry entry;  // conjuncts exclude the implicit loop check
  std::optional<bool> expected;
  std::string reason;
};

struct RowResult {
  int row = 0;
  std::string model;
  std::string invariant;
  std::string conjuncts;
  std::vector<Verdict> verdicts;
  std::vector<std::string> held;    // per verdict: the table-vocabulary reading
  bool valid = true;
  std::string diagnosis;
  std::optional<bool> expected;
  std::string expected_reason;
  nlohmann::ordered_json boxes = nlohmann::ordered_json::object();

  bool matches() const { return !expected || *expected == valid; }
};

inline constexpr const char* kBudgetCaveat =
    "Yes means no counterexample (or, for existential conjuncts, a certified witness) within the search budget; "
    "bounded search cannot prove validity.";

struct Report {
  std::vector<RowResult> rows;
  std::uint64_t seed = 0;
  std::uint64_t budget = 0;
  std::string caveat = kBudgetCaveat;

  bool all_match() const {
    for (const auto& r : rows)
      if (!r.matches()) return false;
    return true;
  }
};

inline std::vector<SuiteRow> parse_suite(std::string_view json_text) {
  auto j = nlohmann::json::parse(json_text);
  std::vector<SuiteRow> rows;
  for (const auto& r : j.at("rows")) {
    SuiteRow row;
    row.row = r.at("row").get<int>();
    row.model = r.at("model").get<std::string>();
    row.entry.invariant = r.at("invariant").get<std::string>();
    for (const auto& c : r.at("conjuncts")) {
      SuiteConjunct sc;
      if (c.is_string()) {
        sc.kind = c.get<std::string>();
      } else {
        sc.kind = c.at("kind").get<std::string>();
        if (c.contains("via_psi")) {
          const auto& p = c.at("via_psi");
          sc.via_psi = PsiRoute{p.at("general").get<std::string>(), p.at("var").get<std::string>(),
                                p.at("term").get<std::string>()};
        }
      }
      row.entry.conjuncts.push_back(std::move(sc));
    }
    if (r.contains("expected")) row.expected = r.at("expected").get<std::string>() == "Yes";
    if (r.contains("reason")) row.reason = r.at("reason").get<std::string>();
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string conjunct_label(const SuiteConjunct& c) {
  std::string label = c.kind;
  if (c.via_psi) label += " (via psi)";
  return label;
}

// Reads a psi witness as a not-chi witness: the env;aux decisions followed
// by the plant decisions form one run of env; aux; plant.
inline std::optional<Verdict> derive_not_chi(const Verdict& psi, const Obligation& not_chi, const SearchConfig& cfg = {}) {
  if (!psi.certificate) return std::nullopt;
  if (detail::ModalIndex(not_chi.matrix).count != 1) return std::nullopt;
  Counterexample cex;
  for (const auto& v : not_chi.box) {
    auto it = std::find_if(psi.certificate->assignment.begin(), psi.certificate->assignment.end(),
                           [&](const auto& p) { return p.first == v.name; });
    if (it == psi.certificate->assignment.end()) return std::nullopt;
    cex.assignment.push_back(*it);
  }
  ChoiceScript joined;
  for (const auto& [idx, script] : psi.certificate->scripts) joined.insert(joined.end(), script.begin(), script.end());
  if (!joined.empty()) cex.scripts[0] = joined;
  cex.margin = psi.certificate->margin;
  if (!certify(not_chi, cex, cfg).ok) return std::nullopt;
  Verdict v;
  v.obligation = not_chi.name + " (derived from psi)";
  v.kind = ObligationKind::FindWitness;
  v.verdict = VerdictKind::WitnessFound;
  v.seed = psi.seed;
  v.certificate = std::move(cex);
  v.stats.coverage = "derived";
  return v;
}

inline const char* reading(const Verdict& v) {
  switch (v.verdict) {
    case VerdictKind::Falsified: return "No (counterexample)";
    case VerdictKind::NotFalsified: return "consistent with valid";
    case VerdictKind::WitnessFound: return "Yes (witness)";
    case VerdictKind::NoWitnessFound: return "no witness (consistent with invalid)";
  }
  return "?";
}

using VerdictCache = std::map<std::string, Verdict>;

namespace detail {

inline Verdict cached_check(const Model& m, const Obligation& ob, const SearchConfig& cfg, VerdictCache* cache) {
  std::string key = m.name + "|" + ob.name + "|" + pretty_print(ob.formula) + "|" + to_json(ob).dump();
  if (cache)
    if (auto it = cache->find(key); it != cache->end()) return it->second;
  Verdict v = check(ob, cfg);
  if (cache) cache->emplace(key, v);
  return v;
}

inline void note_boxes(RowResult& r, const Obligation& ob) {
  for (const auto& b : ob.box) r.boxes[b.name.name()] = {to_string(b.lo), to_string(b.hi)};
}

inline const Formula& require_invariant(const Model& m, const std::string& name) {
  const Formula* f = m.invariant(name);
  if (!f) throw ObligationError("unknown invariant " + name);
  return *f;
}

}  // namespace detail

// Bundled convention: the iterate invariant instantiated at full braking.
inline PsiRoute default_psi_route(const Model& m) {
  if (!m.invariant("zeta_iter") || !m.action_var || !m.is_declared(Symbol("anmin")))
    throw std::invalid_argument("psi needs an explicit route (general invariant, variable, term)");
  return {"zeta_iter", m.action_var->name(), "-anmin"};
}

inline RowResult check_row(const Model& m, const SuiteEntry& entry, const SearchConfig& cfg,
                           const ObligationOptions& opt = {}, VerdictCache* cache = nullptr) {
  RowResult r;
  r.model = m.name;
  r.invariant = entry.invariant;
  const Formula& zeta = detail::require_invariant(m, entry.invariant);
  std::vector<std::string> labels;
  auto fail = [&](const std::string& why) {
    r.valid = false;
    if (!r.diagnosis.empty()) r.diagnosis += "; ";
    r.diagnosis += why;
  };
  // `holds_if_found`: existential conjuncts need a witness, universal ones
  // need the absence of a counterexample.
  auto record = [&](const Obligation& ob, const Verdict& v, bool holds_if_found, const std::string& failure) {
    detail::note_boxes(r, ob);
    r.verdicts.push_back(v);
    r.held.push_back(reading(v));
    if (v.found() != holds_if_found) fail(failure);
  };

  for (const auto& c : entry.conjuncts) {
    if (c.kind != "loop") labels.push_back(conjunct_label(c));
    if (c.kind == "loop") {
      for (const auto& ob : loop_obligations(m, zeta, opt))
        record(ob, detail::cached_check(m, ob, cfg, cache), false, ob.name + " falsified");
    } else if (c.kind == "rho") {
      auto ob = rho_obligation(m, zeta, opt);
      record(ob, detail::cached_check(m, ob, cfg, cache), false, "rho falsified");
    } else if (c.kind == "gamma") {
      auto ob = gamma_obligation(m, zeta, opt);
      record(ob, detail::cached_check(m, ob, cfg, cache), false, "gamma falsified");
    } else if (c.kind == "chi") {
      auto ob = chi_obligation(m, zeta, opt).chi;
      record(ob, detail::cached_check(m, ob, cfg, cache), false, "chi falsified");
    } else if (c.kind == "friendly") {
      auto ob = friendliness_probe(m, opt);
      record(ob, detail::cached_check(m, ob, cfg, cache), false, "env is not friendly");
    } else if (c.kind == "exploit") {
      auto ob = exploit_witness_formula(m, zeta, opt);
      record(ob, detail::cached_check(m, ob, cfg, cache), true, "no exploit witness");
    } else if (c.kind == "not_chi" || c.kind == "psi") {
      auto not_chi = chi_obligation(m, zeta, opt).not_chi;
      std::optional<PsiRoute> route = c.via_psi;
      if (!route && c.kind == "psi") route = default_psi_route(m);
      if (!route) {
        record(not_chi, detail::cached_check(m, not_chi, cfg, cache), true,
               "no witness for not-chi: invariant preserved without controller");
        continue;
      }
      const Formula& general = detail::require_invariant(m, route->general);
      Term term = parse_term(route->term);
      auto psi = psi_obligation(m, general, Symbol(route->var), term, opt);
      Verdict pv = detail::cached_check(m, psi, cfg, cache);
      record(psi, pv, true, "no psi witness");
      if (c.kind == "not_chi") {
        if (auto derived = derive_not_chi(pv, not_chi, cfg)) {
          record(not_chi, *derived, true, "");
        } else if (pv.found()) {
          fail("psi witness does not certify not-chi");
        }
      }
    } else {
      throw std::invalid_argument("unknown obligation kind " + c.kind);
    }
  }
  r.conjuncts = labels.empty() ? "-" : "";
  for (std::size_t i = 0; i < labels.size(); ++i) r.conjuncts += (i ? " & " : "") + labels[i];
  return r;
}

// One row per entry; each entry's conjuncts are checked as listed.
inline Report check_suite(const Model& m, const std::vector<SuiteEntry>& suite, const SearchConfig& cfg = {},
                          const ObligationOptions& opt = {}) {
  Report report;
  report.seed = cfg.seed;
  report.budget = cfg.budget;
  VerdictCache cache;
  int n = 0;
  for (const auto& e : suite) {
    report.rows.push_back(check_row(m, e, cfg, opt, &cache));
    report.rows.back().row = ++n;
  }
  return report;
}

inline nlohmann::ordered_json to_json(const Report& report) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["seed"] = report.seed;
  j["budget"] = report.budget;
  j["caveat"] = report.caveat;
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["row"] = r.row;
    row["model"] = r.model;
    row["invariant"] = r.invariant;
    row["conjuncts"] = r.conjuncts;
    if (r.expected) row["expected"] = *r.expected ? "Yes" : "No";
    row["valid"] = r.valid ? "Yes" : "No";
    row["match"] = r.matches();
    row["expected_reason"] = r.expected_reason;
    row["diagnosis"] = r.diagnosis;
    row["boxes"] = r.boxes;
    auto& obs = row["obligations"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < r.verdicts.size(); ++i) {
      auto v = to_json(r.verdicts[i]);
      v["reading"] = r.held[i];
      obs.push_back(std::move(v));
    }
    rows.push_back(std::move(row));
  }
  j["all_match"] = report.all_match();
  return j;
}

inline std::string format_report(const Report& report, bool details = true) {
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::string out = pad("Row", 5) + pad("Model", 7) + pad("Invariant", 11) + pad("Conjuncts", 26) + pad("Expect", 7) +
                    pad("Ours", 6) + pad("Match", 7) + "Reason\n";
  for (const auto& r : report.rows) {
    std::string reason = r.valid ? r.expected_reason : (r.diagnosis.empty() ? r.expected_reason : r.diagnosis);
    out += pad(std::to_string(r.row), 5) + pad(r.model, 7) + pad(r.invariant, 11) + pad(r.conjuncts, 26) +
           pad(r.expected ? (*r.expected ? "Yes" : "No") : "-", 7) + pad(r.valid ? "Yes" : "No", 6) +
           pad(r.matches() ? "ok" : "DIFF", 7) + reason + "\n";
  }
  if (details) {
    for (const auto& r : report.rows) {
      out += "\nrow " + std::to_string(r.row) + " (" + r.model + ", " + r.invariant + ")\n";
      for (std::size_t i = 0; i < r.verdicts.size(); ++i) {
        out += "  [" + r.held[i] + "] ";
        std::string d = describe(r.verdicts[i]);
        for (std::size_t p = 0; p < d.size(); ++p) {
          out += d[p];
          if (d[p] == '\n' && p + 1 < d.size()) out += "  ";
        }
      }
    }
  }
  out += "\nseed " + std::to_string(report.seed) + ", budget " + std::to_string(report.budget) +
         " evaluations per obligation\n";
  out += std::string("note: ") + report.caveat + "\n";
  return out;
}

}  // namespace hpcheck
