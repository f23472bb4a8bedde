#include <hpcheck/checker.hpp>
#include <hpcheck/model.hpp>
#include <hpcheck/models.hpp>
#include <hpcheck/obligations.hpp>
#include <hpcheck/parser.hpp>
#include <hpcheck/semantics.hpp>
#include <hpcheck/simulate.hpp>
#include <hpcheck/suite.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hpcheck;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "hpcheck 0.1.0";

enum Exit { kOk = 0, kFound = 1, kUsage = 2, kCertification = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

Rational parse_value(const std::string& text, const std::string& what) {
  auto r = parse_rational(text);
  if (!r) throw UsageError("bad number '" + text + "' in " + what);
  return *r;
}

struct Common {
  std::uint64_t seed = 1;
  std::uint64_t budget = 200000;
  std::vector<std::string> boxes;
  std::vector<std::string> consts;
  std::string format = "text";
  std::string trace;

  void add(CLI::App* app, bool search) {
    if (search) {
      app->add_option("--seed", seed, "random seed");
      app->add_option("--budget", budget, "evaluations per obligation");
      app->add_option("--box", boxes, "search box VAR=LO:HI");
    }
    app->add_option("--const", consts, "constant value NAME=VALUE");
    app->add_option("--format", format, "output format")->check(CLI::IsMember({"text", "json"}));
    app->add_option("--trace", trace, "write a trace CSV");
  }

  ObligationOptions options() const {
    ObligationOptions opt;
    for (const auto& b : boxes) {
      auto eq = b.find('='), colon = b.find(':', eq == std::string::npos ? 0 : eq);
      if (eq == std::string::npos || colon == std::string::npos) throw UsageError("--box expects VAR=LO:HI, got " + b);
      Rational lo = parse_value(b.substr(eq + 1, colon - eq - 1), "--box");
      Rational hi = parse_value(b.substr(colon + 1), "--box");
      if (lo > hi) throw UsageError("empty box " + b);
      opt.boxes[Symbol(b.substr(0, eq))] = {lo, hi};
    }
    for (const auto& c : consts) {
      auto eq = c.find('=');
      if (eq == std::string::npos) throw UsageError("--const expects NAME=VALUE, got " + c);
      opt.constant_values[Symbol(c.substr(0, eq))] = parse_value(c.substr(eq + 1), "--const");
    }
    return opt;
  }

  SearchConfig config() const {
    SearchConfig cfg;
    cfg.seed = seed;
    cfg.budget = budget;
    return cfg;
  }

  json echo() const {
    json j;
    j["seed"] = seed;
    j["budget"] = budget;
    j["boxes"] = boxes;
    j["constants"] = consts;
    return j;
  }
};

// Model file plus invariants.hpfrag from the same directory when present.
Model load_model(const std::string& path, std::string* text_out = nullptr) {
  std::string text = read_file(path);
  if (text_out) *text_out = text;
  Model m = parse_model(text, fs::path(path).stem().string());
  fs::path frag = fs::path(path).parent_path() / "invariants.hpfrag";
  if (fs::exists(frag)) add_invariants(m, read_file(frag.string()));
  return m;
}

void check_constants(const Model& m, const ObligationOptions& opt) {
  for (const auto& [c, v] : opt.constant_values)
    if (!m.is_constant(c)) throw UsageError("--const: " + c.name() + " is not a constant of the model");
}

template <class S>
void write_trace(const std::string& path, const Model& m, const Trace<S>& trace) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << "step,construct,t";
  for (auto v : m.declared) out << "," << v.name();
  out << "\n";
  auto cell = [](const S& x) {
    if constexpr (ScalarOps<S>::exact) return to_string(x);
    else {
      std::ostringstream ss;
      ss << std::setprecision(17) << x;
      return ss.str();
    }
  };
  std::size_t step = 0;
  for (const auto& e : trace) {
    std::string construct = e.construct;
    if (construct.find_first_of(",\"") != std::string::npos) {
      std::string q = "\"";
      for (char c : construct) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      construct = q + "\"";
    }
    out << step++ << "," << construct << "," << cell(e.time);
    for (auto v : m.declared) out << "," << (e.state.has(v) ? cell(e.state.get(v)) : std::string());
    out << "\n";
  }
}

std::string state_text(const State<Rational>& s) {
  std::string out;
  for (const auto& e : s.entries()) out += (out.empty() ? "" : ", ") + e.name.name() + " = " + to_string(e.value);
  return out;
}

json state_json(const State<Rational>& s) {
  json j = json::object();
  for (const auto& e : s.entries()) j[e.name.name()] = to_string(e.value);
  return j;
}

// ------------------------------------------------------------------- parse

int cmd_parse(const std::string& path, const Common& common) {
  std::string text;
  Model m = load_model(path, &text);
  if (common.format == "json") {
    json j;
    j["tool"] = kVersion;
    j["model"] = m.name;
    j["hash"] = fnv1a(text);
    std::vector<std::string> declared, state;
    for (auto v : m.declared) declared.push_back(v.name());
    for (auto v : m.state_vars) state.push_back(v.name());
    j["declared"] = declared;
    j["state_vars"] = state;
    j["env_var"] = m.env_var ? m.env_var->name() : "";
    j["action_var"] = m.action_var ? m.action_var->name() : "";
    j["clock"] = m.clock ? m.clock->name() : "";
    j["nonstandard_shape"] = m.nonstandard_shape;
    j["warnings"] = m.warnings;
    std::vector<std::string> inv;
    for (const auto& i : m.invariants) inv.push_back(i.name);
    j["invariants"] = inv;
    j["text"] = pretty_print(m);
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << pretty_print(m);
    std::cout << "\n# state variables:";
    for (auto v : m.state_vars) std::cout << " " << v.name();
    std::cout << "\n# env variable: " << (m.env_var ? m.env_var->name() : "-")
              << ", action variable: " << (m.action_var ? m.action_var->name() : "-")
              << ", clock: " << (m.clock ? m.clock->name() : "-") << "\n";
    std::cout << "# standard shape: " << (m.nonstandard_shape ? "no" : "yes") << "\n";
    for (const auto& w : m.warnings) std::cout << "# warning: " << w << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const std::string& path, const std::string& script_path, unsigned random_runs, const Common& common) {
  Model m = load_model(path);
  ObligationOptions opt = common.options();
  check_constants(m, opt);
  if (random_runs > 0) {
    auto summary = simulate_random(m, random_runs, common.seed, opt.constant_values);
    if (common.format == "json") {
      json j;
      j["tool"] = kVersion;
      j["model"] = m.name;
      j["seed"] = common.seed;
      j["runs"] = summary.runs;
      j["completed"] = summary.completed;
      j["aborted"] = summary.aborted;
      j["no_initial_state"] = summary.no_initial_state;
      j["guarantee_violations"] = summary.violations;
      std::cout << j.dump(2) << "\n";
    } else {
      std::cout << summary.runs << " executions (seed " << common.seed << "): " << summary.completed << " completed, "
                << summary.aborted << " aborted, " << summary.no_initial_state << " without an initial state\n"
                << "guarantee violations among completed executions: " << summary.violations << "\n";
    }
    return kOk;
  }
  if (script_path.empty()) throw UsageError("simulate needs a script file or --random N");
  ScriptFile sf = parse_script_file(read_file(script_path));
  State<Rational> s = constant_state(m, opt.constant_values);
  for (auto v : m.declared)
    if (!s.has(v)) s.set(v, Rational(0));
  for (const auto& [v, value] : sf.initial) {
    if (!m.is_declared(v)) throw UsageError("init of undeclared variable " + v.name());
    s.set(v, value);
  }
  RunResult<Rational> rr = run(s, m.system(), sf.script);
  if (!common.trace.empty()) write_trace(common.trace, m, rr.trace);
  bool aborted = std::holds_alternative<Aborted<Rational>>(rr.outcome);
  if (common.format == "json") {
    json j;
    j["tool"] = kVersion;
    j["model"] = m.name;
    j["initial"] = state_json(s);
    if (aborted) {
      const auto& a = std::get<Aborted<Rational>>(rr.outcome);
      j["outcome"] = "aborted";
      j["failed_test"] = pretty_print(a.failed_test);
      j["state"] = state_json(a.state);
    } else {
      j["outcome"] = "final";
      j["state"] = state_json(std::get<Final<Rational>>(rr.outcome).state);
    }
    j["steps"] = rr.trace.size();
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& e : rr.trace)
      std::cout << "t=" << to_string(e.time) << "  " << e.construct << "  [" << state_text(e.state) << "]\n";
    if (aborted) {
      const auto& a = std::get<Aborted<Rational>>(rr.outcome);
      std::cout << "aborted: test ?(" << pretty_print(a.failed_test) << ") fails in [" << state_text(a.state) << "]\n";
    } else {
      std::cout << "final: [" << state_text(std::get<Final<Rational>>(rr.outcome).state) << "]\n";
    }
  }
  return kOk;
}

// ------------------------------------------------------------------- check

struct PsiFlags {
  std::string general = "zeta_iter";
  std::string var;
  std::string term;
};

std::vector<Obligation> select(const Model& m, const std::string& inv_name, const std::string& which,
                               const PsiFlags& psi, const ObligationOptions& opt, std::optional<Obligation>* derive_target) {
  const Formula* zeta = m.invariant(inv_name);
  if (!zeta) throw UsageError("unknown invariant " + inv_name);
  std::vector<Obligation> out;
  auto want = [&](const char* k) { return which == k || which == "all"; };
  if (want("loop"))
    for (auto& ob : loop_obligations(m, *zeta, opt)) out.push_back(ob);
  if (which == "gamma") out.push_back(gamma_obligation(m, *zeta, opt));
  if (want("rho")) out.push_back(rho_obligation(m, *zeta, opt));
  if (want("exploit")) out.push_back(exploit_witness_formula(m, *zeta, opt));
  if (want("chi")) out.push_back(chi_obligation(m, *zeta, opt).chi);
  if (want("not-chi")) out.push_back(chi_obligation(m, *zeta, opt).not_chi);
  if (want("psi") && (which == "psi" || m.invariant(psi.general))) {
    const Formula* general = m.invariant(psi.general);
    if (!general) throw UsageError("unknown invariant " + psi.general + " (set --psi-general)");
    std::string var = psi.var.empty() ? (m.action_var ? m.action_var->name() : "") : psi.var;
    std::string term = psi.term;
    if (term.empty()) {
      if (!m.is_declared(Symbol("anmin"))) throw UsageError("psi needs --psi-term");
      term = "-anmin";
    }
    out.push_back(psi_obligation(m, *general, Symbol(var), parse_term(term), opt));
    *derive_target = chi_obligation(m, *zeta, opt).not_chi;
  }
  if (want("friendly")) out.push_back(friendliness_probe(m, opt));
  return out;
}

int cmd_check(const std::string& path, const std::string& inv, const std::string& which, const PsiFlags& psi,
              const Common& common) {
  std::string text;
  Model m = load_model(path, &text);
  ObligationOptions opt = common.options();
  check_constants(m, opt);
  SearchConfig cfg = common.config();
  std::optional<Obligation> derive_target;
  auto obs = select(m, inv, which, psi, opt, &derive_target);

  std::vector<Verdict> verdicts;
  std::vector<const Obligation*> sources;
  for (const auto& ob : obs) {
    verdicts.push_back(check(ob, cfg));
    sources.push_back(&ob);
    if (ob.name == "psi" && derive_target && verdicts.back().found())
      if (auto d = derive_not_chi(verdicts.back(), *derive_target, cfg)) {
        verdicts.push_back(*d);
        sources.push_back(&*derive_target);
      }
  }

  bool found = false, uncertified = false;
  for (const auto& v : verdicts) {
    found = found || v.found();
    uncertified = uncertified || (!v.found() && !v.discarded.empty());
  }
  if (!common.trace.empty()) {
    bool written = false;
    for (const auto& v : verdicts)
      if (v.certificate && !v.certificate->trace.empty()) {
        write_trace(common.trace, m, v.certificate->trace);
        written = true;
        break;
      }
    if (!written) std::cerr << "note: no certificate with a program run; " << common.trace << " not written\n";
  }

  if (common.format == "json") {
    json j;
    j["tool"] = kVersion;
    j["model"] = m.name;
    j["hash"] = fnv1a(text);
    j["invariant"] = inv;
    j["config"] = common.echo();
    auto& arr = j["verdicts"] = json::array();
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
      auto vj = to_json(verdicts[i]);
      vj["box"] = to_json(*sources[i])["box"];
      arr.push_back(vj);
    }
    j["caveat"] = kBudgetCaveat;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << kVersion << "  model " << m.name << " (" << fnv1a(text) << ")  invariant " << inv << "\n";
    std::cout << "seed " << cfg.seed << ", budget " << cfg.budget << " evaluations per obligation\n\n";
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
      std::cout << describe(verdicts[i]);
      std::cout << "  box:";
      for (const auto& b : sources[i]->box) std::cout << " " << b.name.name() << "=[" << to_string(b.lo) << ", " << to_string(b.hi) << "]";
      std::cout << "\n";
      for (const auto& w : sources[i]->warnings) std::cout << "  warning: " << w << "\n";
      std::cout << "\n";
    }
    std::cout << "note: " << kBudgetCaveat << "\n";
  }
  if (found) return kFound;
  if (uncertified) return kCertification;
  return kOk;
}

// ------------------------------------------------------------------ table2

int cmd_table2(const Common& common, bool details) {
  ObligationOptions opt = common.options();
  Report report = run_table2(common.config(), opt);
  if (common.format == "json") {
    json j = to_json(report);
    j["tool"] = kVersion;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << format_report(report, details);
  }
  return report.all_match() ? kOk : kFound;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid-program modeling-error checker"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  std::string model_path, script_path, invariant, obligation = "all";
  unsigned random_runs = 0;
  bool details = false;
  PsiFlags psi;

  auto* parse = app.add_subcommand("parse", "parse a model and print it back");
  parse->add_option("model", model_path, "model file")->required();
  common.add(parse, false);

  auto* simulate = app.add_subcommand("simulate", "replay a script or run random executions");
  simulate->add_option("model", model_path, "model file")->required();
  simulate->add_option("script", script_path, "script file");
  simulate->add_option("--random", random_runs, "number of random executions");
  simulate->add_option("--seed", common.seed, "random seed");
  common.add(simulate, false);

  auto* check_cmd = app.add_subcommand("check", "search for counterexamples and witnesses");
  check_cmd->add_option("model", model_path, "model file")->required();
  check_cmd->add_option("--invariant", invariant, "invariant name")->required();
  check_cmd->add_option("--obligation", obligation, "obligation")
      ->check(CLI::IsMember({"loop", "rho", "gamma", "exploit", "chi", "not-chi", "psi", "friendly", "all"}));
  check_cmd->add_option("--psi-general", psi.general, "general invariant for psi");
  check_cmd->add_option("--psi-var", psi.var, "variable instantiated in psi");
  check_cmd->add_option("--psi-term", psi.term, "instantiating term for psi");
  common.add(check_cmd, true);

  auto* table2 = app.add_subcommand("table2", "reproduce the validity table of the bundled models");
  table2->add_flag("--details", details, "print every verdict");
  common.add(table2, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*parse) return cmd_parse(model_path, common);
    if (*simulate) return cmd_simulate(model_path, script_path, random_runs, common);
    if (*check_cmd) return cmd_check(model_path, invariant, obligation, psi, common);
    if (*table2) return cmd_table2(common, details);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ObligationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ScriptError& e) {
    std::cerr << "script error: " << e.what() << "\n";
    return kUsage;
  } catch (const EvalError& e) {
    std::cerr << "evaluation error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
