// config.hpp: JSON run configuration with total validation at load time.

#pragma once

#include "qhx/battery.hpp"
#include "qhx/experiments.hpp"
#include "qhx/machine.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace qhx::config {

using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Command { sweep_power, equivalence_order, battery, signature };

inline std::string_view to_string(Command c) {
  switch (c) {
    case Command::sweep_power: return "sweep-power";
    case Command::equivalence_order: return "equivalence-order";
    case Command::battery: return "battery";
    case Command::signature: return "signature";
  }
  return "?";
}

inline std::optional<Command> parse_command(std::string_view s) {
  for (auto c : {Command::sweep_power, Command::equivalence_order, Command::battery, Command::signature}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

// Experiment name accepted in the config for each command.
inline std::string_view experiment_name(Command c) {
  switch (c) {
    case Command::sweep_power: return "sweep";
    case Command::equivalence_order: return "equivalence";
    case Command::battery: return "battery";
    case Command::signature: return "signature";
  }
  return "?";
}

struct BatterySetting {
  enum class Kind { population, entropy_preserving, qutrit };
  Kind kind{Kind::entropy_preserving};
  double p_w{0.5};
};

struct RunConfig {
  Command command{Command::sweep_power};
  double E_c{1.0};
  double E_h{4.0};
  double T_c{1.0};
  double T_h{20.0};
  BatterySetting battery;
  double eps_c{1.0};
  double eps_h{1.0};
  double eps_w{1.0};
  double tau_cyc{1.0};
  MachineType type{MachineType::two_stroke};
  DephasingPolicy dephasing{};

  std::vector<double> grid;       // s for sweep/signature, p_w for battery
  std::vector<MachineType> types;
  double tolerance{default_limit_cycle_tolerance};
  std::size_t max_iter{default_max_iterations};
  std::vector<double> fit_window;
  std::vector<double> yoshida_window;
  std::optional<std::array<double, 3>> populations;
  double zeno_s{0.01};
  std::vector<std::size_t> zeno_slices;
  DephasingPolicy::Scope signature_scope{DephasingPolicy::Scope::interaction_zone};

  std::string output_directory{"out"};
  std::set<std::string> formats{"csv", "json"};

  Json echo;  // the document as loaded, with defaults filled in

  EngineSpec engine() const { return EngineSpec(E_c, E_h); }
  CouplingSpec couplings() const { return CouplingSpec(eps_c, eps_h, eps_w, tau_cyc); }

  // Machine with a concrete battery population (the entropy-preserving value
  // must be resolved by the caller and passed in).
  MachineSpec machine(double p_w) const {
    return MachineSpec::standard(engine(), T_c, T_h, p_w, couplings(), type, dephasing);
  }

  bool wants(const std::string& f) const { return formats.count(f) != 0; }
};

namespace detail {

inline void reject_unknown(const Json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

inline double number(const Json& obj, const std::string& where, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline std::size_t count(const Json& obj, const std::string& where, const char* key, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline std::string text(const Json& obj, const std::string& where, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline const Json& section(const Json& doc, const char* key) {
  static const Json empty = Json::object();
  return doc.contains(key) ? doc.at(key) : empty;
}

// {"values": [...]} or {"min", "max", "points", "spacing": "log" | "linear"}.
inline std::vector<double> grid(const Json& g, const std::string& where) {
  reject_unknown(g, where, {"values", "min", "max", "points", "spacing"});
  if (g.contains("values")) {
    if (g.size() != 1) throw ConfigError(where + ": 'values' cannot be combined with a range");
    const auto& v = g.at("values");
    if (!v.is_array()) throw ConfigError(where + ".values: expected an array");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(where + ".values: expected numbers");
      out.push_back(x.get<double>());
    }
    if (out.empty()) throw ConfigError(where + ": grid is empty");
    return out;
  }
  for (const char* k : {"min", "max", "points"}) {
    if (!g.contains(k)) throw ConfigError(where + ": missing '" + k + "'");
  }
  const double lo = number(g, where, "min", 0.0);
  const double hi = number(g, where, "max", 0.0);
  const std::size_t n = count(g, where, "points", 0);
  const std::string spacing = text(g, where, "spacing", "log");
  if (n == 0) throw ConfigError(where + ": grid is empty");
  if (!(hi >= lo)) throw ConfigError(where + ": max must be >= min");
  if (spacing == "log") {
    if (!(lo > 0.0)) throw ConfigError(where + ": log spacing needs min > 0");
    return experiments::log_grid(lo, hi, n);
  }
  if (spacing == "linear") return experiments::linear_grid(lo, hi, n);
  throw ConfigError(where + ".spacing: expected 'log' or 'linear'");
}

inline void require_ascending_positive(const std::vector<double>& g, const std::string& where) {
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!(g[k] > 0.0) || !std::isfinite(g[k])) throw ConfigError(where + ": values must be positive");
    if (k > 0 && !(g[k] > g[k - 1])) throw ConfigError(where + ": values must be strictly ascending");
  }
}

inline std::vector<double> fit_window(const Json& exp, const char* key, double lo, double hi) {
  const std::string where = std::string("experiment.") + key;
  std::vector<double> w = exp.contains(key) ? grid(exp.at(key), where) : experiments::log_grid(lo, hi, 12);
  require_ascending_positive(w, where);
  if (w.size() < experiments::min_fit_points) throw ConfigError(where + ": a fit window needs at least 6 points");
  if (w.back() > 0.3) throw ConfigError(where + ": window must lie within s <= 0.3");
  return w;
}

inline Json grid_echo(const std::vector<double>& g) { return Json{{"values", g}}; }

}  // namespace detail

inline RunConfig parse(const Json& doc, Command command) {
  using namespace detail;
  RunConfig c;
  c.command = command;
  reject_unknown(doc, "config", {"engine", "terminals", "couplings", "machine", "experiment", "output"});

  const Json& eng = section(doc, "engine");
  reject_unknown(eng, "engine", {"E_c", "E_h"});
  c.E_c = number(eng, "engine", "E_c", c.E_c);
  c.E_h = number(eng, "engine", "E_h", c.E_h);
  if (!(c.E_c > 0.0) || !(c.E_h > c.E_c) || !std::isfinite(c.E_h)) {
    throw ConfigError("engine: need 0 < E_c < E_h");
  }

  const Json& term = section(doc, "terminals");
  reject_unknown(term, "terminals", {"T_c", "T_h", "battery"});
  c.T_c = number(term, "terminals", "T_c", c.T_c);
  c.T_h = number(term, "terminals", "T_h", c.T_h);
  if (!(c.T_c > 0.0) || !(c.T_h > 0.0)) throw ConfigError("terminals: temperatures must be positive");
  if (term.contains("battery")) {
    const auto& b = term.at("battery");
    if (b.is_number()) {
      c.battery.kind = BatterySetting::Kind::population;
      c.battery.p_w = b.get<double>();
      if (!(c.battery.p_w >= 0.0 && c.battery.p_w <= 1.0)) throw ConfigError("terminals.battery: p_w must lie in [0,1]");
    } else if (b.is_string() && b.get<std::string>() == "entropy_preserving") {
      c.battery.kind = BatterySetting::Kind::entropy_preserving;
    } else if (b.is_string() && b.get<std::string>() == "qutrit") {
      c.battery.kind = BatterySetting::Kind::qutrit;
    } else {
      throw ConfigError("terminals.battery: expected p_w in [0,1], \"entropy_preserving\" or \"qutrit\"");
    }
  }
  if (c.battery.kind == BatterySetting::Kind::qutrit && command != Command::battery) {
    throw ConfigError("terminals.battery: the qutrit battery is only available to the battery command");
  }

  const Json& coup = section(doc, "couplings");
  reject_unknown(coup, "couplings", {"eps_c", "eps_h", "eps_w", "tau_cyc"});
  c.eps_c = number(coup, "couplings", "eps_c", c.eps_c);
  c.eps_h = number(coup, "couplings", "eps_h", c.eps_h);
  c.eps_w = number(coup, "couplings", "eps_w", c.eps_w);
  c.tau_cyc = number(coup, "couplings", "tau_cyc", c.tau_cyc);
  if (c.eps_c < 0.0 || c.eps_h < 0.0 || c.eps_w < 0.0) throw ConfigError("couplings: strengths must be >= 0");
  if (!(c.eps_c + c.eps_h + c.eps_w > 0.0)) throw ConfigError("couplings: at least one coupling must be nonzero");
  if (!(c.tau_cyc > 0.0)) throw ConfigError("couplings.tau_cyc: must be > 0");

  const Json& mach = section(doc, "machine");
  reject_unknown(mach, "machine", {"type", "dephasing", "n_slices", "scope"});
  {
    const std::string t = text(mach, "machine", "type", std::string(qhx::to_string(c.type)));
    const auto parsed = parse_machine_type(t);
    if (!parsed) throw ConfigError("machine.type: unknown machine type '" + t + "'");
    c.type = *parsed;
  }
  const std::string scope_name = text(mach, "machine", "scope", "interaction_zone");
  DephasingPolicy::Scope scope;
  if (scope_name == "interaction_zone") {
    scope = DephasingPolicy::Scope::interaction_zone;
  } else if (scope_name == "engine_only") {
    scope = DephasingPolicy::Scope::engine_only;
  } else {
    throw ConfigError("machine.scope: expected 'interaction_zone' or 'engine_only'");
  }
  c.signature_scope = scope;
  const std::string deph = text(mach, "machine", "dephasing", "none");
  const std::size_t n_slices = count(mach, "machine", "n_slices", 1);
  if (n_slices < 1) throw ConfigError("machine.n_slices: must be >= 1");
  if (deph == "none") {
    c.dephasing = DephasingPolicy::none();
  } else if (deph == "between_strokes") {
    c.dephasing = DephasingPolicy::between_strokes(scope);
  } else if (deph == "continuous") {
    c.dephasing = DephasingPolicy::continuous(n_slices, scope);
  } else {
    throw ConfigError("machine.dephasing: expected 'none', 'between_strokes' or 'continuous'");
  }

  const Json& exp = section(doc, "experiment");
  reject_unknown(exp, "experiment", {"name", "grid", "types", "tolerance", "max_iter", "fit_window",
                                     "yoshida_window", "populations", "zeno_s", "zeno_slices"});
  {
    const std::string name = text(exp, "experiment", "name", std::string(experiment_name(command)));
    if (name != experiment_name(command)) {
      throw ConfigError("experiment.name: '" + name + "' does not match command " + std::string(to_string(command)));
    }
  }
  c.tolerance = number(exp, "experiment", "tolerance", c.tolerance);
  if (!(c.tolerance > 0.0)) throw ConfigError("experiment.tolerance: must be > 0");
  c.max_iter = count(exp, "experiment", "max_iter", c.max_iter);
  if (c.max_iter < 1) throw ConfigError("experiment.max_iter: must be >= 1");

  if (exp.contains("types")) {
    const auto& ts = exp.at("types");
    if (!ts.is_array() || ts.empty()) throw ConfigError("experiment.types: expected a non-empty array");
    for (const auto& t : ts) {
      if (!t.is_string()) throw ConfigError("experiment.types: expected machine type names");
      const auto parsed = parse_machine_type(t.get<std::string>());
      if (!parsed) throw ConfigError("experiment.types: unknown machine type '" + t.get<std::string>() + "'");
      c.types.push_back(*parsed);
    }
  }

  switch (command) {
    case Command::sweep_power: {
      c.grid = exp.contains("grid") ? grid(exp.at("grid"), "experiment.grid") : experiments::log_grid(1e-3, 1.0, 16);
      require_ascending_positive(c.grid, "experiment.grid");
      if (c.types.empty()) {
        c.types = {MachineType::simultaneous, MachineType::two_stroke, MachineType::four_stroke,
                   MachineType::six_stroke_yoshida};
      }
      if (std::find(c.types.begin(), c.types.end(), MachineType::simultaneous) == c.types.end()) {
        c.types.insert(c.types.begin(), MachineType::simultaneous);
      }
      break;
    }
    case Command::equivalence_order: {
      if (c.types.empty()) {
        c.types = {MachineType::two_stroke, MachineType::four_stroke, MachineType::six_stroke_yoshida};
      }
      c.fit_window = fit_window(exp, "fit_window", 1e-3, 1e-1);
      c.yoshida_window = fit_window(exp, "yoshida_window", 0.03, 0.3);
      break;
    }
    case Command::battery: {
      c.grid = exp.contains("grid") ? grid(exp.at("grid"), "experiment.grid") : experiments::linear_grid(0.0, 1.0, 101);
      for (std::size_t k = 0; k < c.grid.size(); ++k) {
        if (!(c.grid[k] >= 0.0 && c.grid[k] <= 1.0)) throw ConfigError("experiment.grid: p_w values must lie in [0,1]");
        if (k > 0 && !(c.grid[k] > c.grid[k - 1])) throw ConfigError("experiment.grid: values must be strictly ascending");
      }
      if (exp.contains("populations")) {
        const auto& p = exp.at("populations");
        if (!p.is_array() || p.size() != 3) throw ConfigError("experiment.populations: expected [a, b, c]");
        std::array<double, 3> pops{};
        for (std::size_t k = 0; k < 3; ++k) {
          if (!p[k].is_number()) throw ConfigError("experiment.populations: expected numbers");
          pops[k] = p[k].get<double>();
        }
        try {
          battery::EnginePopulations(pops[0], pops[1], pops[2]);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("experiment.populations: ") + e.what());
        }
        c.populations = pops;
      }
      break;
    }
    case Command::signature: {
      c.grid = exp.contains("grid") ? grid(exp.at("grid"), "experiment.grid") : std::vector<double>{0.3};
      require_ascending_positive(c.grid, "experiment.grid");
      if (c.types.empty()) c.types = {MachineType::two_stroke, MachineType::four_stroke};
      for (auto t : c.types) {
        if (t == MachineType::simultaneous) {
          throw ConfigError("experiment.types: between-stroke signatures need a stroke machine");
        }
      }
      c.zeno_s = number(exp, "experiment", "zeno_s", c.zeno_s);
      if (!(c.zeno_s > 0.0)) throw ConfigError("experiment.zeno_s: must be > 0");
      if (exp.contains("zeno_slices")) {
        const auto& z = exp.at("zeno_slices");
        if (!z.is_array() || z.empty()) throw ConfigError("experiment.zeno_slices: expected a non-empty array");
        for (const auto& n : z) {
          if (!n.is_number_integer() || n.get<long long>() < 1) {
            throw ConfigError("experiment.zeno_slices: expected integers >= 1");
          }
          c.zeno_slices.push_back(n.get<std::size_t>());
        }
      } else {
        c.zeno_slices = {1, 2, 4, 8, 16, 32, 64};
      }
      break;
    }
  }

  const Json& out = section(doc, "output");
  reject_unknown(out, "output", {"directory", "formats"});
  c.output_directory = text(out, "output", "directory", c.output_directory);
  if (c.output_directory.empty()) throw ConfigError("output.directory: must not be empty");
  if (out.contains("formats")) {
    const auto& f = out.at("formats");
    if (!f.is_array()) throw ConfigError("output.formats: expected an array");
    c.formats.clear();
    for (const auto& x : f) {
      if (!x.is_string() || (x.get<std::string>() != "csv" && x.get<std::string>() != "json")) {
        throw ConfigError("output.formats: entries must be 'csv' or 'json'");
      }
      c.formats.insert(x.get<std::string>());
    }
  }

  // validate the assembled machine once (gaps, populations)
  try {
    const double p = c.battery.kind == BatterySetting::Kind::population ? c.battery.p_w : 0.5;
    c.machine(p).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  Json battery_echo;
  switch (c.battery.kind) {
    case BatterySetting::Kind::population: battery_echo = c.battery.p_w; break;
    case BatterySetting::Kind::entropy_preserving: battery_echo = "entropy_preserving"; break;
    case BatterySetting::Kind::qutrit: battery_echo = "qutrit"; break;
  }
  Json types = Json::array();
  for (auto t : c.types) types.push_back(std::string(qhx::to_string(t)));
  c.echo = Json{
      {"engine", {{"E_c", c.E_c}, {"E_h", c.E_h}}},
      {"terminals", {{"T_c", c.T_c}, {"T_h", c.T_h}, {"battery", battery_echo}}},
      {"couplings", {{"eps_c", c.eps_c}, {"eps_h", c.eps_h}, {"eps_w", c.eps_w}, {"tau_cyc", c.tau_cyc}}},
      {"machine", {{"type", std::string(qhx::to_string(c.type))}, {"dephasing", deph}, {"n_slices", n_slices},
                   {"scope", scope_name}}},
      {"experiment", {{"name", std::string(experiment_name(command))}, {"types", types},
                      {"tolerance", c.tolerance}, {"max_iter", c.max_iter}}},
      {"output", {{"directory", c.output_directory}, {"formats", c.formats}}},
  };
  auto& e = c.echo["experiment"];
  if (!c.grid.empty()) e["grid"] = grid_echo(c.grid);
  if (!c.fit_window.empty()) e["fit_window"] = grid_echo(c.fit_window);
  if (!c.yoshida_window.empty()) e["yoshida_window"] = grid_echo(c.yoshida_window);
  if (c.populations) e["populations"] = *c.populations;
  if (command == Command::signature) {
    e["zeno_s"] = c.zeno_s;
    e["zeno_slices"] = c.zeno_slices;
  }
  return c;
}

inline Json read_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

inline RunConfig load(const std::string& path, Command command) { return parse(read_document(path), command); }

}  // namespace qhx::config
