// battery.hpp: work extraction into explicit qubit/qutrit batteries by a
// single strong (full-swap) interaction with a diagonal engine state.

#pragma once

#include "qhx/core.hpp"
#include "qhx/machine.hpp"

#include <array>
#include <numbers>
#include <optional>
#include <vector>

namespace qhx::battery {

// Populations of engine levels 1, 2, 3.
struct EnginePopulations {
  double a;
  double b;
  double c;

  EnginePopulations(double a_, double b_, double c_) : a(a_), b(b_), c(c_) {
    if (a < 0.0 || b < 0.0 || c < 0.0) throw std::invalid_argument("EnginePopulations: negative population");
    if (std::abs(a + b + c - 1.0) > 1e-12) throw std::invalid_argument("EnginePopulations: populations must sum to 1");
  }

  static EnginePopulations from_state(const DensityMatrix& rho_e) {
    if (rho_e.dim() != 3) throw std::invalid_argument("EnginePopulations: engine state must be 3x3");
    const auto p = rho_e.populations();
    const double sum = p[0] + p[1] + p[2];
    return {p[0] / sum, p[1] / sum, p[2] / sum};
  }

  std::array<double, 3> as_array() const { return {a, b, c}; }
};

struct SwapReport {
  double p_w_in{0.0};
  std::array<double, 3> engine_out{};
  std::vector<double> battery_out;
  double dE_w{0.0};  // in units of E_w
  double dS_w{0.0};
  double dS_e{0.0};
  double I_ew{0.0};
  bool degenerate{false};  // no population on the work manifold; the swap does nothing
};

namespace detail {

template <typename Range>
double shannon(const Range& p) {
  double s = 0.0;
  for (double x : p) {
    if (x > 0.0) s -= x * std::log(x);
  }
  return s;
}

inline void require_population(double p_w) {
  if (!(p_w >= 0.0 && p_w <= 1.0)) throw std::invalid_argument("battery: p_w must lie in [0,1]");
}

inline const SubsystemLayout& engine_battery_layout() {
  static const SubsystemLayout layout{3, 2};
  return layout;
}

}  // namespace detail

// Closed-form joint populations (engine level, battery level) after the full swap;
// index = 2 * engine + battery.
inline std::array<double, 6> full_swap_joint(const EnginePopulations& e, double p_w) {
  detail::require_population(p_w);
  const double q = 1.0 - p_w;
  // |2_e 1_w> and |3_e 0_w> (indices 3 and 4) exchange populations.
  return {e.a * q, e.a * p_w, e.b * q, e.c * q, e.b * p_w, e.c * p_w};
}

inline SwapReport report_from_joint(const EnginePopulations& e, double p_w, const std::array<double, 6>& joint) {
  SwapReport r;
  r.p_w_in = p_w;
  r.engine_out = {joint[0] + joint[1], joint[2] + joint[3], joint[4] + joint[5]};
  r.battery_out = {joint[0] + joint[2] + joint[4], joint[1] + joint[3] + joint[5]};
  r.dE_w = r.battery_out[1] - p_w;
  const std::array<double, 2> w_in{1.0 - p_w, p_w};
  r.dS_w = detail::shannon(r.battery_out) - detail::shannon(w_in);
  r.dS_e = detail::shannon(r.engine_out) - detail::shannon(e.as_array());
  r.I_ew = detail::shannon(r.engine_out) + detail::shannon(r.battery_out) - detail::shannon(joint);
  r.degenerate = (e.b + e.c == 0.0);
  return r;
}

// Engine → diag(a, (1−a)(1−p_w), (1−a)p_w); battery → diag(b + a(1−p_w), c + a p_w).
inline SwapReport full_swap(const EnginePopulations& e, double p_w) {
  return report_from_joint(e, p_w, full_swap_joint(e, p_w));
}

// Engine ⊗ battery state after exp(−i H_ew t) with pulse area eps_w t = `pulse_area`;
// pi/2 is the complete swap.
inline DensityMatrix swap_evolution(const EnginePopulations& e, double p_w, double pulse_area) {
  detail::require_population(p_w);
  const auto& layout = detail::engine_battery_layout();
  // Only the pulse area matters; any engine with E_w > 0 gives the same exchange operator.
  const EngineSpec engine(1.0, 2.0);
  const HermitianOperator h = interaction_hamiltonian(Terminal::work, 1.0, engine, engine.work_gap(), layout, 0, 1);
  const DensityMatrix rho0 = tensor(DensityMatrix::diagonal(SubsystemLayout{3}, {e.a, e.b, e.c}), qubit_state(p_w));
  return apply(evolve(h, pulse_area), rho0);
}

// Partial (or full, at pi/2) swap analysed from the unitary evolution.
inline SwapReport partial_swap(const EnginePopulations& e, double p_w, double pulse_area) {
  const DensityMatrix rho = swap_evolution(e, p_w, pulse_area);
  const DensityMatrix rho_e = partial_trace(rho, {0});
  const DensityMatrix rho_w = partial_trace(rho, {1});
  SwapReport r;
  r.p_w_in = p_w;
  const auto pe = rho_e.populations();
  r.engine_out = {pe[0], pe[1], pe[2]};
  r.battery_out = rho_w.populations();
  r.dE_w = r.battery_out[1] - p_w;
  r.dS_w = von_neumann_entropy(rho_w) - von_neumann_entropy(qubit_state(p_w));
  r.dS_e = von_neumann_entropy(rho_e) - detail::shannon(e.as_array());
  r.I_ew = mutual_information(rho, {0}, {1});
  r.degenerate = (e.b + e.c == 0.0);
  return r;
}

inline SwapReport full_swap_unitary(const EnginePopulations& e, double p_w) {
  return partial_swap(e, p_w, std::numbers::pi / 2.0);
}

// Battery population for which the swap leaves the battery entropy unchanged:
// c + a p_w = 1 − p_w.
inline double entropy_preserving_pw(double a, double c) { return (1.0 - c) / (1.0 + a); }
inline double entropy_preserving_pw(const EnginePopulations& e) { return entropy_preserving_pw(e.a, e.c); }

// Battery population with zero energy exchange, c/(b+c); unset for b + c = 0.
inline std::optional<double> zero_energy_pw(double b, double c) {
  if (b + c == 0.0) return std::nullopt;
  return c / (b + c);
}
inline std::optional<double> zero_energy_pw(const EnginePopulations& e) { return zero_energy_pw(e.b, e.c); }

struct ChargingWindow {
  double p_lo{0.0};
  double p_hi{0.0};
  bool empty{true};
};

// Battery populations for which the full swap both charges (dE_w > 0) and
// purifies (dS_w < 0) the battery. Requires inversion c > b.
inline ChargingWindow charging_purifying_window(const EnginePopulations& e) {
  ChargingWindow w;
  w.p_lo = entropy_preserving_pw(e);
  const auto hi = zero_energy_pw(e);
  w.p_hi = hi.value_or(w.p_lo);
  w.empty = !(e.c > e.b) || !(w.p_hi > w.p_lo);
  return w;
}

// Qutrit battery prepared in diag(a, c, b), fully swapped with the engine
// (battery levels share the engine spectrum).
inline SwapReport qutrit_battery_swap(const EnginePopulations& e) {
  const SubsystemLayout layout{3, 3};
  const DensityMatrix engine = DensityMatrix::diagonal(SubsystemLayout{3}, {e.a, e.b, e.c});
  const DensityMatrix batt = DensityMatrix::diagonal(SubsystemLayout{3}, {e.a, e.c, e.b});
  Matrix swap = Matrix::Zero(9, 9);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) swap(j * 3 + i, i * 3 + j) = 1.0;
  }
  const DensityMatrix after = apply(UnitaryOperator(layout, swap), tensor(engine, batt));
  const DensityMatrix e_out = partial_trace(after, {0});
  const DensityMatrix w_out = partial_trace(after, {1});

  SwapReport r;
  r.p_w_in = e.b;  // initial top-level population of the battery
  const auto pe = e_out.populations();
  r.engine_out = {pe[0], pe[1], pe[2]};
  r.battery_out = w_out.populations();
  // levels (0, E_c, E_h) with Δp_2 = −Δp_3, so ΔE = E_w Δp_3
  r.dE_w = (r.battery_out[2] - e.b);
  r.dS_w = von_neumann_entropy(w_out) - von_neumann_entropy(batt);
  r.dS_e = von_neumann_entropy(e_out) - von_neumann_entropy(engine);
  r.I_ew = mutual_information(after, {0}, {1});
  return r;
}

// Energy change of the qutrit battery with level energies (0, E_c, E_h).
inline double qutrit_energy_change(const SwapReport& r, const EnginePopulations& e, const EngineSpec& engine) {
  return engine.cold_gap() * (r.battery_out[1] - e.c) + engine.hot_gap() * (r.battery_out[2] - e.b);
}

inline std::vector<SwapReport> sweep_battery(const EnginePopulations& e, const std::vector<double>& grid) {
  std::vector<SwapReport> rows;
  rows.reserve(grid.size());
  for (double p : grid) {
    detail::require_population(p);
    rows.push_back(full_swap(e, p));
  }
  return rows;
}

}  // namespace qhx::battery
