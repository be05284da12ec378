// experiments.hpp: action sweeps, machine-equivalence order fits and
// dephasing signatures built on the cycle simulator.

#pragma once

#include "qhx/battery.hpp"
#include "qhx/machine.hpp"
#include "qhx/simulator.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace qhx::experiments {

inline constexpr double numerical_floor = 1e-14;
inline constexpr double nan = std::numeric_limits<double>::quiet_NaN();

struct SolverOptions {
  double tolerance{default_limit_cycle_tolerance};
  std::size_t max_iter{default_max_iterations};
  std::size_t threads{1};
};

// --------------------------- grids and fits ---------------------------------

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (n == 0) throw std::invalid_argument("log_grid: no points");
  if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("log_grid: need 0 < lo <= hi");
  std::vector<double> g(n);
  if (n == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t k = 0; k < n; ++k) {
    g[k] = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1));
  }
  g.front() = lo;
  g.back() = hi;
  return g;
}

inline std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
  if (n == 0) throw std::invalid_argument("linear_grid: no points");
  if (!(hi >= lo)) throw std::invalid_argument("linear_grid: need lo <= hi");
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k) {
    g[k] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  }
  return g;
}

// Least-squares fit of log|y| against log x.
struct OrderFit {
  double slope{nan};
  double intercept{nan};
  double r2{nan};
  std::size_t points{0};
  double x_min{nan};
  double x_max{nan};
  bool at_floor{false};  // every |y| below the numerical floor
};

inline constexpr std::size_t min_fit_points = 6;

inline OrderFit fit_order(const std::vector<double>& x, const std::vector<double>& y,
                          double floor = numerical_floor) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_order: size mismatch");
  if (x.size() < min_fit_points) throw std::invalid_argument("fit_order: need at least 6 points");
  OrderFit f;
  f.x_min = x.front();
  f.x_max = x.back();
  bool all_floor = true;
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = std::abs(y[k]);
    if (v >= floor) all_floor = false;
    if (v > 0.0 && std::isfinite(v)) {
      lx.push_back(std::log(x[k]));
      ly.push_back(std::log(v));
    }
  }
  if (all_floor || lx.size() < 2) {
    f.at_floor = true;
    return f;
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k];
    my += ly[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
    syy += (ly[k] - my) * (ly[k] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  f.points = lx.size();
  return f;
}

// Runs fn(k) for k in [0, n) on up to `threads` workers; results are placed by index.
template <typename T>
std::vector<T> parallel_map(std::size_t n, std::size_t threads, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> slots(n);
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    for (std::size_t k = 0; k < n; ++k) slots[k].emplace(fn(k));
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = next++; k < n; k = next++) slots[k].emplace(fn(k));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// Cycle time giving engine action s for the machine's couplings.
inline double cycle_time_for_action(const MachineSpec& m, double s) {
  const double per_unit_time = engine_action(m.couplings.with_cycle_time(1.0), m.engine);
  if (!(per_unit_time > 0.0)) throw std::invalid_argument("cycle_time_for_action: all couplings vanish");
  return s / per_unit_time;
}

inline MachineSpec at_action(const MachineSpec& m, double s) {
  return m.with_cycle_time(cycle_time_for_action(m, s));
}

// Battery population p_w = (1−c)/(1+a) evaluated self-consistently at the
// limit cycle of the simultaneous machine.
inline double resolve_entropy_preserving_battery(const MachineSpec& base, const SolverOptions& opt = {},
                                                 double tol = 1e-14, std::size_t max_rounds = 500) {
  MachineSpec m = base.with_type(MachineType::simultaneous).with_dephasing(DephasingPolicy::none());
  double p = m.work.excited_population();
  for (std::size_t round = 0; round < max_rounds; ++round) {
    const auto lc = find_limit_cycle(m, opt.tolerance, opt.max_iter);
    const double next = battery::entropy_preserving_pw(battery::EnginePopulations::from_state(lc.rho_e_bar));
    if (std::abs(next - p) < tol) return next;
    p = next;
    m = m.with_battery_population(p);
  }
  throw ConvergenceError("entropy-preserving battery population did not converge", nan, max_rounds);
}

// --------------------------- action sweep -----------------------------------

struct SweepPoint {
  MachineType type{MachineType::simultaneous};
  double power{nan};
  double work{nan};
  double heat_hot{nan};
  double heat_cold{nan};
  double residual{nan};
  double first_law{nan};
  bool converged{false};
};

struct SweepRow {
  double s{0.0};
  double cycle_time{0.0};
  std::vector<SweepPoint> points;  // one per machine type, in request order

  const SweepPoint* find(MachineType t) const {
    for (const auto& p : points) {
      if (p.type == t) return &p;
    }
    return nullptr;
  }
};

struct SweepResult {
  std::string axis{"s"};
  std::vector<MachineType> types;
  std::vector<SweepRow> rows;  // ascending in s
};

namespace detail {

inline SweepPoint sweep_point(const MachineSpec& m, MachineType type, const SolverOptions& opt,
                              const std::optional<DensityMatrix>& initial) {
  SweepPoint p;
  p.type = type;
  try {
    const auto lc = find_limit_cycle(m.with_type(type), opt.tolerance, opt.max_iter, initial);
    p.work = lc.steady.work;
    p.power = lc.steady.work / m.couplings.cycle_time();
    p.heat_hot = lc.steady.heat_hot;
    p.heat_cold = lc.steady.heat_cold;
    p.residual = lc.residual;
    p.first_law = lc.steady.first_law_residual();
    p.converged = true;
  } catch (const ConvergenceError& e) {
    p.residual = e.residual();
  }
  return p;
}

}  // namespace detail

// Limit-cycle power per machine type at each engine action (cycle time swept at
// fixed couplings). Every type starts from the simultaneous limit cycle.
inline SweepResult sweep_action(const MachineSpec& base, const std::vector<MachineType>& types,
                                const std::vector<double>& s_grid, const SolverOptions& opt = {}) {
  if (s_grid.empty()) throw std::invalid_argument("sweep_action: empty grid");
  for (std::size_t k = 0; k < s_grid.size(); ++k) {
    if (!(s_grid[k] > 0.0)) throw std::invalid_argument("sweep_action: grid must be positive");
    if (k > 0 && !(s_grid[k] > s_grid[k - 1])) throw std::invalid_argument("sweep_action: grid must be ascending");
  }
  if (types.empty()) throw std::invalid_argument("sweep_action: no machine types");

  SweepResult result;
  result.types = types;
  result.rows = parallel_map<SweepRow>(s_grid.size(), opt.threads, [&](std::size_t k) {
    SolverOptions serial = opt;
    serial.threads = 1;
    const MachineSpec m = at_action(base, s_grid[k]);
    SweepRow row;
    row.s = s_grid[k];
    row.cycle_time = m.couplings.cycle_time();
    std::optional<DensityMatrix> start;
    try {
      start = find_limit_cycle(m.with_type(MachineType::simultaneous), opt.tolerance, opt.max_iter).rho_e_bar;
    } catch (const ConvergenceError&) {
    }
    for (auto t : types) row.points.push_back(detail::sweep_point(m, t, serial, start));
    return row;
  });
  return result;
}

struct NormalizedRow {
  double s{0.0};
  MachineType type{MachineType::simultaneous};
  double ratio{nan};
  bool flagged{false};  // reference power below 1e-14 or point not converged
};

inline std::vector<NormalizedRow> normalized_power(const SweepResult& sweep,
                                                   MachineType reference = MachineType::simultaneous) {
  bool present = false;
  for (auto t : sweep.types) present = present || t == reference;
  if (!present) throw std::invalid_argument("normalized_power: reference type missing from sweep");
  std::vector<NormalizedRow> out;
  for (const auto& row : sweep.rows) {
    const SweepPoint* ref = row.find(reference);
    for (const auto& p : row.points) {
      NormalizedRow n;
      n.s = row.s;
      n.type = p.type;
      if (!ref->converged || !p.converged || std::abs(ref->power) < numerical_floor) {
        n.flagged = true;
      } else {
        n.ratio = p.power / ref->power;
      }
      out.push_back(n);
    }
  }
  return out;
}

// Order of 1 − P/P_ref in s for one machine type.
inline OrderFit normalized_deviation_order(const std::vector<NormalizedRow>& rows, MachineType type) {
  std::vector<double> x, y;
  for (const auto& r : rows) {
    if (r.type == type && !r.flagged) {
      x.push_back(r.s);
      y.push_back(1.0 - r.ratio);
    }
  }
  return fit_order(x, y);
}

// --------------------------- equivalence orders -----------------------------

struct DeviationSample {
  double s{0.0};
  double work{nan};              // |W_m(ρ̄_m) − W_ref(ρ̄_ref)| per cycle at the limit cycles
  double heat_hot{nan};          // |Q_h,m − Q_h,ref| at the limit cycles
  double transient_work{nan};    // |W_m(ρ̄_ref) − W_ref(ρ̄_ref)| from the same initial engine state
  double state{nan};             // ‖M_m(ρ̄_ref) − ρ̄_ref‖₁, one cycle of m applied to the reference limit cycle
  double fixed_point_state{nan}; // ‖ρ̄_m − ρ̄_ref‖₁ between the two limit cycles
  double operator_error{nan};    // ‖U_m − U_ref‖_sp
  double reference_work{nan};    // W_ref(ρ̄_ref)
  double relative_power{nan};    // |1 − P_m/P_ref| = work / |reference_work|
};

struct DeviationReport {
  MachineType type{MachineType::two_stroke};
  MachineType reference{MachineType::simultaneous};
  std::vector<DeviationSample> samples;
  OrderFit work;
  OrderFit heat_hot;
  OrderFit transient_work;
  OrderFit state;
  OrderFit fixed_point_state;
  OrderFit operator_error;
  OrderFit relative_power;
};

inline DeviationSample deviation_sample(MachineType type, MachineType reference, const MachineSpec& base, double s,
                                        const SolverOptions& opt) {
  const MachineSpec m = at_action(base, s);
  const CyclePropagator ref_prop(m.with_type(reference));
  const CyclePropagator prop(m.with_type(type));
  const auto ref_lc = ref_prop.find_limit_cycle(opt.tolerance, opt.max_iter);
  const auto lc = prop.find_limit_cycle(opt.tolerance, opt.max_iter, ref_lc.rho_e_bar);
  const auto from_ref = prop.run_cycle(ref_lc.rho_e_bar);

  DeviationSample d;
  d.s = s;
  d.work = std::abs(lc.steady.work - ref_lc.steady.work);
  d.heat_hot = std::abs(lc.steady.heat_hot - ref_lc.steady.heat_hot);
  d.transient_work = std::abs(from_ref.ledger.work - ref_lc.steady.work);
  d.state = qhx::detail::trace_norm(prop.engine_increment(ref_lc.rho_e_bar.matrix()) -
                                    ref_prop.engine_increment(ref_lc.rho_e_bar.matrix()));
  d.reference_work = ref_lc.steady.work;
  d.relative_power = ref_lc.steady.work != 0.0 ? d.work / std::abs(ref_lc.steady.work) : nan;
  d.fixed_point_state = trace_distance_norm(lc.rho_e_bar, ref_lc.rho_e_bar);
  d.operator_error = spectral_norm(Matrix(cycle_operator(type, m.engine, m.couplings).deviation() -
                                          cycle_operator(reference, m.engine, m.couplings).deviation()));
  return d;
}

inline DeviationReport deviation_order(MachineType type, MachineType reference, const MachineSpec& base,
                                       const std::vector<double>& s_window, const SolverOptions& opt = {}) {
  for (double s : s_window) {
    if (!(s > 0.0) || s > 0.3) throw std::invalid_argument("deviation_order: window must lie in (0, 0.3]");
  }
  DeviationReport r;
  r.type = type;
  r.reference = reference;
  r.samples = parallel_map<DeviationSample>(s_window.size(), opt.threads, [&](std::size_t k) {
    return deviation_sample(type, reference, base, s_window[k], opt);
  });
  auto column = [&](double DeviationSample::*field) {
    std::vector<double> v;
    for (const auto& smp : r.samples) v.push_back(smp.*field);
    return fit_order(s_window, v);
  };
  r.work = column(&DeviationSample::work);
  r.heat_hot = column(&DeviationSample::heat_hot);
  r.transient_work = column(&DeviationSample::transient_work);
  r.state = column(&DeviationSample::state);
  r.fixed_point_state = column(&DeviationSample::fixed_point_state);
  r.operator_error = column(&DeviationSample::operator_error);
  r.relative_power = column(&DeviationSample::relative_power);
  return r;
}

// ‖U_type − U_ref‖_sp over an action grid (no limit cycles involved).
inline OrderFit operator_error_order(MachineType type, MachineType reference, const MachineSpec& base,
                                     const std::vector<double>& s_grid) {
  std::vector<double> err;
  for (double s : s_grid) {
    const MachineSpec m = at_action(base, s);
    err.push_back(spectral_norm(Matrix(cycle_operator(type, m.engine, m.couplings).deviation() -
                                       cycle_operator(reference, m.engine, m.couplings).deviation())));
  }
  return fit_order(s_grid, err);
}

// --------------------------- dephasing signatures ---------------------------

struct Signature {
  double s{0.0};
  MachineType type{MachineType::two_stroke};
  double coherent{nan};
  double dephased{nan};
  double difference() const { return dephased - coherent; }
};

inline Signature quantum_signature(const MachineSpec& machine, double s, const DephasingPolicy& policy,
                                   const SolverOptions& opt = {}) {
  if (policy.kind == DephasingPolicy::Kind::none) {
    throw std::invalid_argument("quantum_signature: a dephasing policy is required");
  }
  if (machine.type == MachineType::simultaneous && policy.kind != DephasingPolicy::Kind::continuous) {
    throw std::invalid_argument("quantum_signature: the simultaneous machine needs continuous dephasing");
  }
  const MachineSpec m = at_action(machine, s);
  Signature sig;
  sig.s = s;
  sig.type = m.type;
  sig.coherent = steady_power(m.with_dephasing(DephasingPolicy::none()), opt.tolerance, opt.max_iter);
  sig.dephased = steady_power(m.with_dephasing(policy), opt.tolerance, opt.max_iter);
  return sig;
}

struct ZenoPoint {
  std::size_t n_slices{1};
  double power{nan};
};

// Simultaneous-machine steady power with the cycle split into n dephased slices.
inline std::vector<ZenoPoint> zeno_series(const MachineSpec& base, double s, const std::vector<std::size_t>& slices,
                                          const SolverOptions& opt = {}) {
  const MachineSpec m = at_action(base.with_type(MachineType::simultaneous), s);
  return parallel_map<ZenoPoint>(slices.size(), opt.threads, [&](std::size_t k) {
    const auto policy = DephasingPolicy::continuous(slices[k], base.dephasing.scope);
    return ZenoPoint{slices[k], steady_power(m.with_dephasing(policy), opt.tolerance, opt.max_iter)};
  });
}

}  // namespace qhx::experiments
