// commands.hpp: the four CLI experiments: computation, CSV/JSON artifacts and
// the per-run manifest.

#pragma once

#include "qhx/battery.hpp"
#include "qhx/config.hpp"
#include "qhx/experiments.hpp"
#include "qhx/simulator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace qhx::commands {

using config::Json;
using config::RunConfig;

inline constexpr const char* tool_version = "0.1.0";

enum ExitCode : int { success = 0, config_error = 2, numerical_failure = 3 };

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --------------------------- CSV --------------------------------------------

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& operator<<(double v) { return cell(format_double(v)); }
  CsvTable& operator<<(std::size_t v) { return cell(std::to_string(v)); }
  CsvTable& operator<<(const std::string& v) { return cell(v); }
  CsvTable& operator<<(std::string_view v) { return cell(std::string(v)); }
  CsvTable& operator<<(const char* v) { return cell(v); }

  std::string str() const {
    std::ostringstream os;
    write_line(os, header_);
    for (const auto& r : rows_) {
      if (r.size() != header_.size()) throw std::logic_error("CsvTable: ragged row");
      write_line(os, r);
    }
    return os.str();
  }

  std::size_t size() const noexcept { return rows_.size(); }

 private:
  CsvTable& cell(std::string s) {
    if (rows_.empty()) rows_.emplace_back();
    rows_.back().push_back(std::move(s));
    return *this;
  }
  static void write_line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) os << (k ? "," : "") << cells[k];
    os << '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// --------------------------- run result -------------------------------------

// Everything a command produces; files are written only after the computation
// has finished.
struct RunResult {
  std::map<std::string, std::string> files;  // name → contents
  Json criteria = Json::object();
  Json results = Json::object();
  bool numerical_failure{false};
  std::string failure;
};

namespace detail {

inline Json fit_json(const experiments::OrderFit& f) {
  if (f.at_floor) return Json{{"at_numerical_floor", true}, {"points", f.points}};
  return Json{{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"points", f.points},
              {"s_min", f.x_min}, {"s_max", f.x_max}, {"at_numerical_floor", false}};
}

// Pass/fail of a fitted slope: within `tol` of `expected`, or at least
// `expected − tol` when `at_least` is set. Floor fits are marked, not failed.
inline Json slope_check(const experiments::OrderFit& f, double expected, double tol, bool at_least = false) {
  Json j = fit_json(f);
  j["expected"] = expected;
  j["tolerance"] = tol;
  if (at_least) j["bound"] = "at_least";
  if (f.at_floor) {
    j["pass"] = nullptr;
  } else {
    j["pass"] = at_least ? (f.slope >= expected - tol) : (std::abs(f.slope - expected) <= tol);
  }
  return j;
}

inline double resolve_battery(const RunConfig& c, const experiments::SolverOptions& opt) {
  switch (c.battery.kind) {
    case config::BatterySetting::Kind::population: return c.battery.p_w;
    case config::BatterySetting::Kind::entropy_preserving:
    case config::BatterySetting::Kind::qutrit:
      return experiments::resolve_entropy_preserving_battery(c.machine(0.5), opt);
  }
  return c.battery.p_w;
}

// The reference machine of every experiment: a stroke-type-free simultaneous
// machine carrying the configured couplings and terminals.
inline MachineSpec base_machine(const RunConfig& c, double p_w) {
  return c.machine(p_w).with_dephasing(DephasingPolicy::none());
}

}  // namespace detail

// --------------------------- sweep-power ------------------------------------

inline RunResult sweep_power(const RunConfig& c, const experiments::SolverOptions& opt) {
  RunResult r;
  const double p_w = detail::resolve_battery(c, opt);
  const MachineSpec base = detail::base_machine(c, p_w).with_dephasing(c.dephasing);
  const auto sweep = experiments::sweep_action(base, c.types, c.grid, opt);
  const auto norm = experiments::normalized_power(sweep, MachineType::simultaneous);

  CsvTable table({"s", "tau_cyc", "type", "P", "W", "Q_h", "Q_c", "residual", "status"});
  std::size_t converged = 0;
  double worst_first_law = 0.0;
  for (const auto& row : sweep.rows) {
    for (const auto& p : row.points) {
      table.row() << row.s << row.cycle_time << to_string(p.type) << p.power << p.work << p.heat_hot
                  << p.heat_cold << p.residual << (p.converged ? "ok" : "not_converged");
      if (p.converged) {
        ++converged;
        worst_first_law = std::max(worst_first_law, std::abs(p.first_law));
      }
    }
  }
  CsvTable ntable({"s", "type", "P_ratio", "status"});
  for (const auto& n : norm) {
    ntable.row() << n.s << to_string(n.type) << n.ratio << (n.flagged ? "flagged" : "ok");
  }
  if (c.wants("csv")) {
    r.files["sweep.csv"] = table.str();
    r.files["normalized.csv"] = ntable.str();
  }

  r.results["battery_population"] = p_w;
  r.results["converged_points"] = converged;
  r.results["total_points"] = sweep.rows.size() * c.types.size();
  r.criteria["first_law_closure"] = Json{{"max_abs_residual", worst_first_law}, {"threshold", 1e-10},
                                         {"pass", worst_first_law < 1e-10}};

  const auto& first = sweep.rows.front();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  bool first_ok = true;
  for (const auto& p : first.points) {
    first_ok = first_ok && p.converged;
    lo = std::min(lo, p.power);
    hi = std::max(hi, p.power);
  }
  const double spread = first_ok && hi != 0.0 ? (hi - lo) / std::abs(hi) : experiments::nan;
  r.criteria["small_action_equal_power"] =
      Json{{"s", first.s}, {"relative_spread", spread}, {"threshold", 1e-3}, {"pass", first_ok && spread < 1e-3}};

  Json linear = Json::object();
  for (auto t : c.types) {
    std::vector<double> tau, power;
    for (const auto& row : sweep.rows) {
      const auto* p = row.find(t);
      if (row.s <= 0.03 && p->converged) {
        tau.push_back(row.cycle_time);
        power.push_back(p->power);
      }
    }
    if (tau.size() < experiments::min_fit_points) {
      linear[std::string(to_string(t))] = Json{{"evaluated", false}, {"points", tau.size()}};
    } else {
      linear[std::string(to_string(t))] = detail::slope_check(experiments::fit_order(tau, power), 1.0, 0.1);
    }
  }
  r.criteria["power_linear_in_cycle_time"] = linear;

  if (converged == 0) {
    r.numerical_failure = true;
    r.failure = "no sweep point reached a limit cycle";
  }
  return r;
}

// --------------------------- equivalence-order ------------------------------

struct ExpectedOrder {
  double work;
  double work_tol;
  double state;
  double state_tol;
  bool state_at_least;
  double relative_power;
  double relative_power_tol;
  double op;
  double op_tol;
};

inline ExpectedOrder expected_order(MachineType t) {
  if (t == MachineType::six_stroke_yoshida) return {6.0, 0.5, 4.0, 0.3, true, 4.0, 0.5, 5.0, 0.3};
  return {4.0, 0.3, 4.0, 0.3, false, 2.0, 0.3, 3.0, 0.2};
}

inline RunResult equivalence_order(const RunConfig& c, const experiments::SolverOptions& opt) {
  RunResult r;
  const double p_w = detail::resolve_battery(c, opt);
  const MachineSpec base = detail::base_machine(c, p_w);

  CsvTable table({"type", "s", "work_deviation", "heat_hot_deviation", "transient_work_deviation",
                  "state_distance", "fixed_point_distance", "relative_power_deviation", "operator_error"});
  Json orders = Json::object();
  Json checks = Json::object();
  for (auto t : c.types) {
    const auto& window = t == MachineType::six_stroke_yoshida ? c.yoshida_window : c.fit_window;
    experiments::DeviationReport rep;
    try {
      rep = experiments::deviation_order(t, MachineType::simultaneous, base, window, opt);
    } catch (const ConvergenceError& e) {
      throw NumericalFailure(std::string(to_string(t)) + ": " + e.what());
    }
    for (const auto& s : rep.samples) {
      table.row() << to_string(t) << s.s << s.work << s.heat_hot << s.transient_work << s.state
                  << s.fixed_point_state << s.relative_power << s.operator_error;
    }
    const auto e = expected_order(t);
    const std::string name(to_string(t));
    Json entry = Json::object();
    entry["work_deviation"] = detail::slope_check(rep.work, e.work, e.work_tol);
    entry["state_distance"] = detail::slope_check(rep.state, e.state, e.state_tol, e.state_at_least);
    entry["relative_power_deviation"] = detail::slope_check(rep.relative_power, e.relative_power, e.relative_power_tol);
    entry["operator_error"] = detail::slope_check(rep.operator_error, e.op, e.op_tol);
    entry["heat_hot_deviation"] = detail::fit_json(rep.heat_hot);
    entry["transient_work_deviation"] = detail::fit_json(rep.transient_work);
    entry["fixed_point_distance"] = detail::fit_json(rep.fixed_point_state);
    entry["window"] = Json{{"s_min", window.front()}, {"s_max", window.back()}, {"points", window.size()}};
    orders[name] = entry;
    checks[name] = Json{{"work_deviation", entry["work_deviation"]["pass"]},
                        {"state_distance", entry["state_distance"]["pass"]}};
  }
  r.results["battery_population"] = p_w;
  r.criteria["equivalence_orders"] = checks;
  if (c.wants("csv")) r.files["deviations.csv"] = table.str();
  if (c.wants("json")) {
    Json doc{{"reference", "Simultaneous"}, {"battery_population", p_w}, {"orders", orders}};
    r.files["orders.json"] = doc.dump(2) + "\n";
  }
  return r;
}

// --------------------------- battery ----------------------------------------

inline RunResult battery_lab(const RunConfig& c, const experiments::SolverOptions& opt) {
  RunResult r;
  std::array<double, 3> pops{};
  if (c.populations) {
    pops = *c.populations;
    r.results["populations_source"] = "config";
  } else {
    const double p_w = detail::resolve_battery(c, opt);
    const MachineSpec m = c.machine(p_w);
    const auto lc = find_limit_cycle(m, opt.tolerance, opt.max_iter);
    const auto p = battery::EnginePopulations::from_state(lc.rho_e_bar);
    pops = p.as_array();
    r.results["populations_source"] = "limit_cycle";
    r.results["limit_cycle_battery_population"] = p_w;
  }
  const battery::EnginePopulations e(pops[0], pops[1], pops[2]);
  r.results["populations"] = pops;

  CsvTable table({"p_w", "dE_w", "dS_w", "dS_e", "I_ew"});
  if (c.battery.kind == config::BatterySetting::Kind::qutrit) {
    const auto q = battery::qutrit_battery_swap(e);
    table.row() << q.p_w_in << q.dE_w << q.dS_w << q.dS_e << q.I_ew;
    r.results["battery"] = "qutrit";
    r.criteria["qutrit_decoupled"] = Json{{"I_ew", q.I_ew}, {"threshold", 1e-12}, {"pass", q.I_ew < 1e-12}};
  } else {
    const auto window = battery::charging_purifying_window(e);
    r.results["battery"] = "qubit";
    r.results["window"] = Json{{"p_lo", window.p_lo}, {"p_hi", window.p_hi}, {"empty", window.empty}};
    double worst_match = 0.0;
    std::size_t interior = 0, interior_ok = 0;
    for (const auto& row : battery::sweep_battery(e, c.grid)) {
      table.row() << row.p_w_in << row.dE_w << row.dS_w << row.dS_e << row.I_ew;
      const auto u = battery::full_swap_unitary(e, row.p_w_in);
      for (std::size_t k = 0; k < 3; ++k) worst_match = std::max(worst_match, std::abs(u.engine_out[k] - row.engine_out[k]));
      for (std::size_t k = 0; k < 2; ++k) worst_match = std::max(worst_match, std::abs(u.battery_out[k] - row.battery_out[k]));
      if (!window.empty && row.p_w_in > window.p_lo && row.p_w_in < window.p_hi) {
        ++interior;
        if (row.dE_w > 0.0 && row.dS_w < 0.0) ++interior_ok;
      }
    }
    r.criteria["closed_form_matches_unitary"] =
        Json{{"max_abs_difference", worst_match}, {"threshold", 1e-10}, {"pass", worst_match <= 1e-10}};
    r.criteria["window_interior_charges_and_purifies"] =
        Json{{"interior_points", interior}, {"passing_points", interior_ok}, {"pass", interior_ok == interior}};
    if (!window.empty) {
      const double ds = battery::full_swap(e, window.p_lo).dS_w;
      r.criteria["left_boundary_entropy_preserved"] =
          Json{{"dS_w", ds}, {"threshold", 1e-12}, {"pass", std::abs(ds) < 1e-12}};
    }
  }
  if (c.wants("csv")) r.files["battery.csv"] = table.str();
  return r;
}

// --------------------------- signature --------------------------------------

inline RunResult signature(const RunConfig& c, const experiments::SolverOptions& opt) {
  RunResult r;
  const double p_w = detail::resolve_battery(c, opt);
  const MachineSpec base = detail::base_machine(c, p_w);
  const auto policy = DephasingPolicy::between_strokes(c.signature_scope);

  CsvTable table({"s", "type", "P_coherent", "P_dephased"});
  Json separation = Json::object();
  for (auto t : c.types) {
    double smallest = std::numeric_limits<double>::infinity();
    for (double s : c.grid) {
      experiments::Signature sig;
      try {
        sig = experiments::quantum_signature(base.with_type(t), s, policy, opt);
      } catch (const ConvergenceError& e) {
        throw NumericalFailure(std::string("signature: ") + e.what());
      }
      table.row() << s << to_string(t) << sig.coherent << sig.dephased;
      smallest = std::min(smallest, std::abs(sig.difference()));
    }
    separation[std::string(to_string(t))] =
        Json{{"min_abs_difference", smallest}, {"threshold", 1e-6}, {"pass", smallest > 1e-6}};
  }
  r.criteria["dephasing_changes_power"] = separation;

  std::vector<experiments::ZenoPoint> zeno;
  double coherent = 0.0;
  try {
    MachineSpec simul = base.with_type(MachineType::simultaneous);
    simul.dephasing.scope = c.signature_scope;
    zeno = experiments::zeno_series(simul, c.zeno_s, c.zeno_slices, opt);
    coherent = steady_power(experiments::at_action(simul, c.zeno_s), opt.tolerance, opt.max_iter);
  } catch (const ConvergenceError& e) {
    throw NumericalFailure(std::string("zeno series: ") + e.what());
  }
  CsvTable ztable({"n_slices", "P"});
  bool monotone = true;
  for (std::size_t k = 0; k < zeno.size(); ++k) {
    ztable.row() << zeno[k].n_slices << zeno[k].power;
    if (k > 0 && zeno[k].n_slices > zeno[k - 1].n_slices && !(zeno[k].power < zeno[k - 1].power)) monotone = false;
  }
  r.results["battery_population"] = p_w;
  r.results["zeno_s"] = c.zeno_s;
  r.results["zeno_coherent_power"] = coherent;
  r.criteria["zeno_monotone_decreasing"] = Json{{"pass", monotone}};
  std::size_t max_n = 0;
  double p_max_n = experiments::nan;
  for (const auto& z : zeno) {
    if (z.n_slices >= max_n) {
      max_n = z.n_slices;
      p_max_n = z.power;
    }
  }
  if (max_n >= 64) {
    r.criteria["zeno_suppression"] = Json{{"n_slices", max_n}, {"ratio", p_max_n / coherent}, {"threshold", 0.1},
                                          {"pass", p_max_n < 0.1 * coherent}};
  }
  if (c.wants("csv")) {
    r.files["signature.csv"] = table.str();
    r.files["zeno.csv"] = ztable.str();
  }
  return r;
}

inline RunResult dispatch(const RunConfig& c, const experiments::SolverOptions& opt) {
  switch (c.command) {
    case config::Command::sweep_power: return sweep_power(c, opt);
    case config::Command::equivalence_order: return equivalence_order(c, opt);
    case config::Command::battery: return battery_lab(c, opt);
    case config::Command::signature: return signature(c, opt);
  }
  throw std::logic_error("dispatch: unknown command");
}

// --------------------------- manifest and driver ----------------------------

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
}

struct Invocation {
  config::Command command{config::Command::sweep_power};
  std::string config_path;
  std::optional<std::string> out_dir;
  std::size_t threads{1};
};

// Output directory for a failed load: --out, else the document's own setting
// when it can be read, else "out".
inline std::string fallback_directory(const Invocation& inv) {
  if (inv.out_dir) return *inv.out_dir;
  try {
    const Json doc = config::read_document(inv.config_path);
    if (doc.contains("output") && doc["output"].is_object() && doc["output"].contains("directory") &&
        doc["output"]["directory"].is_string() && !doc["output"]["directory"].get<std::string>().empty()) {
      return doc["output"]["directory"].get<std::string>();
    }
  } catch (...) {
  }
  return "out";
}

// Loads, runs and writes artifacts plus manifest.json. Returns the exit code.
inline int execute(const Invocation& inv, std::string* message = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  Json manifest{{"tool", "qhx"}, {"version", tool_version}, {"command", std::string(to_string(inv.command))}};
  std::filesystem::path dir;
  int code = success;
  RunResult result;
  std::string error;

  std::optional<RunConfig> cfg;
  try {
    cfg = config::load(inv.config_path, inv.command);
    dir = inv.out_dir.value_or(cfg->output_directory);
  } catch (const config::ConfigError& e) {
    code = config_error;
    error = e.what();
    dir = fallback_directory(inv);
  }

  if (cfg) {
    experiments::SolverOptions opt;
    opt.tolerance = cfg->tolerance;
    opt.max_iter = cfg->max_iter;
    opt.threads = std::max<std::size_t>(1, inv.threads);
    try {
      result = dispatch(*cfg, opt);
      if (result.numerical_failure) {
        code = numerical_failure;
        error = result.failure;
      }
    } catch (const NumericalFailure& e) {
      code = numerical_failure;
      error = e.what();
      result = {};
    } catch (const ConvergenceError& e) {
      code = numerical_failure;
      error = e.what();
      result = {};
    }
    manifest["config"] = cfg->echo;
  } else {
    manifest["config"] = nullptr;
  }

  manifest["status"] = code == success ? "ok" : code == config_error ? "config_error" : "numerical_failure";
  manifest["exit_code"] = code;
  if (!error.empty()) manifest["error"] = error;
  Json files = Json::array();
  for (const auto& [name, contents] : result.files) files.push_back(name);
  manifest["files"] = files;
  manifest["criteria"] = result.criteria;
  manifest["results"] = result.results;
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  manifest["wall_time_s"] = elapsed.count();

  try {
    std::filesystem::create_directories(dir);
    for (const auto& [name, contents] : result.files) write_file(dir / name, contents);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    if (message) *message = e.what();
    return numerical_failure;
  }
  if (message) *message = error;
  return code;
}

}  // namespace qhx::commands
