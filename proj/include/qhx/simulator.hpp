// simulator.hpp: cycle-by-cycle propagation with fresh terminal particles,
// thermodynamic ledgers and limit-cycle search.

#pragma once

#include "qhx/core.hpp"
#include "qhx/machine.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qhx {

// Energy changes of each subsystem over one cycle (positive = energy gained by
// that subsystem). Heat delivered to the engine by the hot bath is −heat_hot.
struct CycleLedger {
  double heat_cold{0.0};
  double heat_hot{0.0};
  double work{0.0};          // dE_w, battery energy change
  double engine_energy{0.0}; // dE_e
  double battery_entropy{0.0};
  std::optional<double> pollution;  // dS_w / dE_w, unset when |dE_w| < 1e-14
  double engine_battery_information{0.0};

  double first_law_residual() const { return heat_cold + heat_hot + work + engine_energy; }
};

struct CycleOutcome {
  DensityMatrix engine;          // reduced engine state after the cycle
  DensityMatrix terminals_after; // reduced cold ⊗ hot ⊗ work state after the cycle (discarded by the machine)
  CycleLedger ledger;
  double residual;               // trace norm of the engine-state change
};

struct LimitCycleResult {
  DensityMatrix rho_e_bar;
  std::size_t n_iterations{0};
  double residual{0.0};
  CycleLedger steady;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual, std::size_t iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  std::size_t iterations_;
};

inline constexpr double default_limit_cycle_tolerance = 1e-12;
inline constexpr std::size_t default_max_iterations = 100000;

namespace detail {

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

}  // namespace detail

// One machine cycle as a fixed program of unitary and dephasing steps acting on
// engine ⊗ cold ⊗ hot ⊗ work, starting from fresh terminals every cycle.
class CyclePropagator {
 public:
  explicit CyclePropagator(const MachineSpec& m)
      : CyclePropagator(cycle_strokes(m.type, m.engine, m.couplings), m.dephasing, m.engine,
                        fresh_terminals(m)) {}

  static DensityMatrix fresh_terminals(const MachineSpec& m) {
    return tensor(tensor(m.cold.initial_state(), m.hot.initial_state()), m.work.initial_state());
  }

  // Arbitrary stroke sequence (application order) with explicit fresh terminals.
  CyclePropagator(const StrokeSequence& strokes, DephasingPolicy policy, const EngineSpec& engine,
                  const DensityMatrix& terminals)
      : engine_(engine), environment_(terminals) {
    if (terminals.layout() != SubsystemLayout{2, 2, 2}) {
      throw std::invalid_argument("CyclePropagator: terminals must be cold ⊗ hot ⊗ work qubits");
    }
    const auto& layout = machine_layout();
    if (policy.scope == DephasingPolicy::Scope::engine_only) {
      dephase_sites_ = {site::engine};
    } else {
      dephase_sites_ = {site::engine, site::cold, site::hot, site::work};
    }
    for (const auto& s : strokes) {
      if (!(s.unitary.layout() == layout)) throw std::invalid_argument("CyclePropagator: stroke layout mismatch");
      switch (policy.kind) {
        case DephasingPolicy::Kind::none:
          steps_.push_back(s.unitary.deviation());
          break;
        case DephasingPolicy::Kind::between_strokes:
          steps_.push_back(s.unitary.deviation());
          steps_.emplace_back();
          break;
        case DephasingPolicy::Kind::continuous: {
          if (policy.n_slices < 1) throw std::invalid_argument("continuous dephasing needs n_slices >= 1");
          const Matrix slice =
              evolve(s.generator, s.duration / static_cast<double>(policy.n_slices)).deviation();
          for (std::size_t n = 0; n < policy.n_slices; ++n) {
            steps_.push_back(slice);
            steps_.emplace_back();
          }
          break;
        }
      }
    }
    const auto lv = engine.levels();
    const auto dim = layout.total_dim();
    energy_engine_.resize(dim);
    for (auto& v : energy_terminal_) v.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      energy_engine_[i] = lv[layout.digit(i, site::engine)];
      for (std::size_t k = 0; k < 3; ++k) {
        energy_terminal_[k][i] = engine.gap(all_terminals[k]) * static_cast<double>(layout.digit(i, k + 1));
      }
    }
  }

  const DensityMatrix& terminals() const noexcept { return environment_; }
  const EngineSpec& engine() const noexcept { return engine_; }
  std::size_t step_count() const noexcept { return steps_.size(); }

  // Δρ_tot for the full program applied to rho_tot (any matrix; linear in it).
  Matrix total_increment(const Matrix& rho_tot) const {
    Matrix delta = Matrix::Zero(rho_tot.rows(), rho_tot.cols());
    for (const auto& d : steps_) {
      const Matrix current = rho_tot + delta;
      if (d.size() == 0) {
        delta -= current - detail::dephase(current, dephase_sites_, machine_layout());
      } else {
        delta += detail::conjugation_increment(d, current);
      }
    }
    return delta;
  }

  Matrix initial_total(const Matrix& rho_e) const { return detail::kron(rho_e, environment_.matrix()); }

  // Linear one-cycle increment of the engine state: tr_env[Δρ_tot].
  Matrix engine_increment(const Matrix& rho_e) const {
    static const std::array<std::size_t, 1> keep{site::engine};
    return detail::partial_trace(total_increment(initial_total(rho_e)), keep, machine_layout());
  }

  CycleOutcome run_cycle(const DensityMatrix& rho_e) const {
    if (rho_e.layout() != SubsystemLayout{3}) throw std::invalid_argument("run_cycle: engine state must be 3x3");
    const auto& layout = machine_layout();
    const Matrix rho0 = initial_total(rho_e.matrix());
    const Matrix delta = total_increment(rho0);

    CycleLedger led;
    const auto dim = layout.total_dim();
    for (std::size_t i = 0; i < dim; ++i) {
      const double dp = delta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
      led.engine_energy += dp * energy_engine_[i];
      led.heat_cold += dp * energy_terminal_[0][i];
      led.heat_hot += dp * energy_terminal_[1][i];
      led.work += dp * energy_terminal_[2][i];
    }

    static const std::array<std::size_t, 1> keep_e{site::engine};
    static const std::array<std::size_t, 1> keep_w{site::work};
    static const std::array<std::size_t, 2> keep_ew{site::engine, site::work};
    static const std::array<std::size_t, 3> keep_env{site::cold, site::hot, site::work};

    const Matrix d_e = detail::partial_trace(delta, keep_e, layout);
    DensityMatrix engine_after(SubsystemLayout{3}, rho_e.matrix() + d_e);

    const Matrix w0 = detail::partial_trace(rho0, keep_w, layout);
    const Matrix w1 = w0 + detail::partial_trace(delta, keep_w, layout);
    led.battery_entropy = detail::entropy_of(detail::hermitian_part(w1)) - detail::entropy_of(w0);
    if (std::abs(led.work) >= 1e-14) led.pollution = led.battery_entropy / led.work;

    const Matrix ew =
        detail::partial_trace(rho0, keep_ew, layout) + detail::partial_trace(delta, keep_ew, layout);
    led.engine_battery_information =
        mutual_information(DensityMatrix(SubsystemLayout{3, 2}, ew), {0}, {1});

    const Matrix env_after = environment_.matrix() + detail::partial_trace(delta, keep_env, layout);
    return CycleOutcome{std::move(engine_after), DensityMatrix(SubsystemLayout{2, 2, 2}, env_after), led,
                        detail::trace_norm(d_e)};
  }

  std::vector<CycleOutcome> run_n_cycles(const DensityMatrix& rho_e0, std::size_t n) const {
    if (n < 1) throw std::invalid_argument("run_n_cycles: n must be >= 1");
    std::vector<CycleOutcome> out;
    out.reserve(n);
    out.push_back(run_cycle(rho_e0));
    for (std::size_t k = 1; k < n; ++k) out.push_back(run_cycle(out.back().engine));
    return out;
  }

  double residual(const DensityMatrix& rho_e) const {
    return detail::trace_norm(engine_increment(rho_e.matrix()));
  }

  // 9x9 matrix of the increment map on column-major vec(rho_e).
  Matrix increment_superoperator() const {
    Matrix sup(9, 9);
    for (Eigen::Index j = 0; j < 3; ++j) {
      for (Eigen::Index i = 0; i < 3; ++i) {
        Matrix basis = Matrix::Zero(3, 3);
        basis(i, j) = 1.0;
        const Matrix image = engine_increment(basis);
        sup.col(i + 3 * j) = Eigen::Map<const Eigen::VectorXcd>(image.data(), 9);
      }
    }
    return sup;
  }

  // Engine state with ρ' = ρ after one cycle. Solves the increment map's null
  // space directly when the fixed point is unique; otherwise accepts the
  // initial state or iterates from it.
  LimitCycleResult find_limit_cycle(double tol = default_limit_cycle_tolerance,
                                    std::size_t max_iter = default_max_iterations,
                                    std::optional<DensityMatrix> initial = std::nullopt) const {
    if (!(tol > 0.0)) throw std::invalid_argument("find_limit_cycle: tol must be > 0");
    if (max_iter < 1) throw std::invalid_argument("find_limit_cycle: max_iter must be >= 1");
    DensityMatrix rho = initial.value_or(DensityMatrix::maximally_mixed(SubsystemLayout{3}));

    double res = residual(rho);
    std::size_t iterations = 1;
    if (auto solved = solve_fixed_point()) {
      const double solved_res = residual(*solved);
      if (solved_res < tol && solved_res <= res) return finish(*solved, iterations, solved_res);
    }
    if (res < tol) return finish(rho, iterations, res);
    while (iterations < max_iter) {
      rho = DensityMatrix(SubsystemLayout{3},
                          detail::hermitian_part(rho.matrix() + engine_increment(rho.matrix())));
      ++iterations;
      res = residual(rho);
      if (res < tol) return finish(rho, iterations, res);
    }
    throw ConvergenceError("find_limit_cycle: no convergence within " + std::to_string(max_iter) +
                               " iterations (residual " + std::to_string(res) + ")",
                           res, iterations);
  }

 private:
  LimitCycleResult finish(const DensityMatrix& rho, std::size_t iterations, double res) const {
    return LimitCycleResult{rho, iterations, res, run_cycle(rho).ledger};
  }

  std::optional<DensityMatrix> solve_fixed_point() const {
    Matrix sup = increment_superoperator();
    const double scale = sup.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) return std::nullopt;
    sup /= scale;
    Eigen::JacobiSVD<Matrix> svd(sup, Eigen::ComputeFullV);
    const RealVector& sv = svd.singularValues();
    // unique null vector: smallest singular value at round-off, next one clearly nonzero
    if (!(sv(8) < 1e-10 * sv(0)) || !(sv(7) > 1e-8 * sv(0))) return std::nullopt;
    const Eigen::VectorXcd v = svd.matrixV().col(8);
    Matrix x = Eigen::Map<const Matrix>(v.data(), 3, 3);
    const Complex tr = x.trace();
    if (std::abs(tr) < 1e-8) return std::nullopt;
    x = detail::hermitian_part(x / tr);
    try {
      return DensityMatrix(SubsystemLayout{3}, x);
    } catch (const InvalidState&) {
      return std::nullopt;
    }
  }

  EngineSpec engine_;
  DensityMatrix environment_;
  std::vector<Matrix> steps_;  // empty matrix marks a dephasing step
  std::vector<std::size_t> dephase_sites_;
  std::vector<double> energy_engine_;
  std::array<std::vector<double>, 3> energy_terminal_;
};

// --------------------------- free-function surface --------------------------

inline CycleOutcome run_cycle(const DensityMatrix& rho_e, const MachineSpec& machine) {
  return CyclePropagator(machine).run_cycle(rho_e);
}

inline std::vector<CycleOutcome> run_n_cycles(const DensityMatrix& rho_e0, const MachineSpec& machine,
                                              std::size_t n) {
  return CyclePropagator(machine).run_n_cycles(rho_e0, n);
}

inline LimitCycleResult find_limit_cycle(const MachineSpec& machine, double tol = default_limit_cycle_tolerance,
                                         std::size_t max_iter = default_max_iterations,
                                         std::optional<DensityMatrix> initial = std::nullopt) {
  return CyclePropagator(machine).find_limit_cycle(tol, max_iter, std::move(initial));
}

// Battery energy gain per unit time at the limit cycle.
inline double steady_power(const MachineSpec& machine, double tol = default_limit_cycle_tolerance,
                           std::size_t max_iter = default_max_iterations) {
  return find_limit_cycle(machine, tol, max_iter).steady.work / machine.couplings.cycle_time();
}

}  // namespace qhx
