#pragma once

// Bundled models m2, m3, m4 (with their shared invariants) and the eight
// Table-2 rows. The texts under models/ are compiled in by CMake.

#include <hpcheck/embedded_models.hpp>
#include <hpcheck/model.hpp>
#include <hpcheck/suite.hpp>

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hpcheck {

inline const std::vector<std::string>& builtin_ids() {
  static const std::vector<std::string> ids{"m2", "m3", "m4"};
  return ids;
}

inline std::string_view builtin_source(std::string_view id) {
  if (id == "m2") return embedded::m2_hpmodel;
  if (id == "m3") return embedded::m3_hpmodel;
  if (id == "m4") return embedded::m4_hpmodel;
  throw std::invalid_argument("unknown builtin model " + std::string(id));
}

inline std::string_view builtin_invariants_source() { return embedded::invariants_hpfrag; }
inline std::string_view fig2_script_source() { return embedded::fig2_script; }
inline std::string_view table2_suite_source() { return embedded::suite_table2_json; }

inline Model builtin(std::string_view id) {
  Model m = parse_model(builtin_source(id), std::string(id));
  add_invariants(m, builtin_invariants_source());
  return m;
}

inline std::vector<SuiteRow> table2_suite() { return parse_suite(table2_suite_source()); }

// Runs the rows with the loop check prepended to each row's conjuncts.
inline Report run_suite(const std::vector<SuiteRow>& rows, const SearchConfig& cfg = {},
                        const ObligationOptions& opt = {}) {
  Report report;
  report.seed = cfg.seed;
  report.budget = cfg.budget;
  VerdictCache cache;
  std::map<std::string, Model> models;
  for (const auto& row : rows) {
    auto it = models.find(row.model);
    if (it == models.end()) it = models.emplace(row.model, builtin(row.model)).first;
    SuiteEntry entry = row.entry;
    entry.conjuncts.insert(entry.conjuncts.begin(), SuiteConjunct{"loop", std::nullopt});
    RowResult r = check_row(it->second, entry, cfg, opt, &cache);
    r.row = row.row;
    r.expected = row.expected;
    r.expected_reason = row.reason;
    report.rows.push_back(std::move(r));
  }
  return report;
}

inline Report run_table2(const SearchConfig& cfg = {}, const ObligationOptions& opt = {}) {
  return run_suite(table2_suite(), cfg, opt);
}

}  // namespace hpcheck
