// machine.hpp: engine qutrit, terminal qubits, energy-conserving couplings
// and the per-cycle stroke sequences of each machine type.

#pragma once

#include "qhx/core.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace qhx {

enum class Terminal { cold, hot, work };

inline constexpr std::array<Terminal, 3> all_terminals{Terminal::cold, Terminal::hot, Terminal::work};

inline std::string_view to_string(Terminal k) {
  switch (k) {
    case Terminal::cold: return "cold";
    case Terminal::hot: return "hot";
    case Terminal::work: return "work";
  }
  return "?";
}

// Canonical interaction-zone layout: engine qutrit, cold, hot, work qubits.
namespace site {
inline constexpr std::size_t engine = 0;
inline constexpr std::size_t cold = 1;
inline constexpr std::size_t hot = 2;
inline constexpr std::size_t work = 3;
}  // namespace site

inline const SubsystemLayout& machine_layout() {
  static const SubsystemLayout layout{3, 2, 2, 2};
  return layout;
}

inline std::size_t site_of(Terminal k) {
  switch (k) {
    case Terminal::cold: return site::cold;
    case Terminal::hot: return site::hot;
    case Terminal::work: return site::work;
  }
  throw std::logic_error("site_of: bad terminal");
}

// Engine level pair (lower, upper) coupled to each terminal.
inline std::pair<std::size_t, std::size_t> manifold(Terminal k) {
  switch (k) {
    case Terminal::cold: return {0, 1};
    case Terminal::hot: return {0, 2};
    case Terminal::work: return {1, 2};
  }
  throw std::logic_error("manifold: bad terminal");
}

// Level energies (0, E_c, E_h); the work gap is E_h − E_c.
class EngineSpec {
 public:
  EngineSpec(double cold_gap, double hot_gap) : cold_gap_(cold_gap), hot_gap_(hot_gap) {
    if (!(cold_gap > 0.0) || !(hot_gap > cold_gap) || !std::isfinite(hot_gap)) {
      throw std::invalid_argument("EngineSpec: require E_h > E_c > 0");
    }
  }

  double cold_gap() const noexcept { return cold_gap_; }
  double hot_gap() const noexcept { return hot_gap_; }
  double work_gap() const noexcept { return hot_gap_ - cold_gap_; }

  double gap(Terminal k) const noexcept {
    switch (k) {
      case Terminal::cold: return cold_gap();
      case Terminal::hot: return hot_gap();
      case Terminal::work: return work_gap();
    }
    return 0.0;
  }

  std::array<double, 3> levels() const noexcept { return {0.0, cold_gap_, hot_gap_}; }

 private:
  double cold_gap_;
  double hot_gap_;
};

struct Temperature {
  double value;
};
struct ExcitedPopulation {
  double value;
};

inline constexpr double infinite_temperature = std::numeric_limits<double>::infinity();

// Excited-state population of a qubit of the given gap in a Gibbs state.
inline double gibbs_excited_population(double gap, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("thermal state: temperature must be > 0");
  if (std::isinf(temperature)) return 0.5;
  return 1.0 / (1.0 + std::exp(gap / temperature));
}

inline DensityMatrix qubit_state(double excited) {
  if (!(excited >= 0.0 && excited <= 1.0)) {
    throw std::invalid_argument("qubit_state: population outside [0,1]");
  }
  return DensityMatrix::diagonal(SubsystemLayout{2}, {1.0 - excited, excited});
}

inline DensityMatrix thermal_qubit(double gap, double temperature) {
  return qubit_state(gibbs_excited_population(gap, temperature));
}

class TerminalSpec {
 public:
  using Init = std::variant<Temperature, ExcitedPopulation>;

  TerminalSpec(Terminal kind, double gap, Init init) : kind_(kind), gap_(gap), init_(init) {
    if (!(gap > 0.0)) throw std::invalid_argument("TerminalSpec: gap must be > 0");
    if (const auto* t = std::get_if<Temperature>(&init_)) {
      if (!(t->value > 0.0)) throw std::invalid_argument("TerminalSpec: temperature must be > 0");
    } else {
      const double p = std::get<ExcitedPopulation>(init_).value;
      if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("TerminalSpec: battery population outside [0,1]");
      }
    }
  }

  Terminal kind() const noexcept { return kind_; }
  double gap() const noexcept { return gap_; }
  const Init& init() const noexcept { return init_; }

  double excited_population() const {
    if (const auto* t = std::get_if<Temperature>(&init_)) return gibbs_excited_population(gap_, t->value);
    return std::get<ExcitedPopulation>(init_).value;
  }

  DensityMatrix initial_state() const { return qubit_state(excited_population()); }

 private:
  Terminal kind_;
  double gap_;
  Init init_;
};

class CouplingSpec {
 public:
  CouplingSpec(double eps_cold, double eps_hot, double eps_work, double cycle_time)
      : eps_{eps_cold, eps_hot, eps_work}, cycle_time_(cycle_time) {
    for (double e : eps_) {
      if (!(e >= 0.0) || !std::isfinite(e)) throw std::invalid_argument("CouplingSpec: coupling must be >= 0");
    }
    if (!(cycle_time > 0.0) || !std::isfinite(cycle_time)) {
      throw std::invalid_argument("CouplingSpec: cycle time must be > 0");
    }
  }

  double coupling(Terminal k) const noexcept { return eps_[static_cast<std::size_t>(k)]; }
  double cycle_time() const noexcept { return cycle_time_; }
  double coupling_sum() const noexcept { return eps_[0] + eps_[1] + eps_[2]; }

  CouplingSpec with_cycle_time(double t) const {
    return CouplingSpec(eps_[0], eps_[1], eps_[2], t);
  }
  CouplingSpec scaled(double energy_factor) const {
    return CouplingSpec(eps_[0] * energy_factor, eps_[1] * energy_factor, eps_[2] * energy_factor,
                        cycle_time_);
  }

 private:
  std::array<double, 3> eps_;
  double cycle_time_;
};

enum class MachineType { simultaneous, two_stroke, four_stroke, six_stroke_yoshida };

inline constexpr std::array<MachineType, 4> all_machine_types{
    MachineType::simultaneous, MachineType::two_stroke, MachineType::four_stroke,
    MachineType::six_stroke_yoshida};

inline std::string_view to_string(MachineType t) {
  switch (t) {
    case MachineType::simultaneous: return "Simultaneous";
    case MachineType::two_stroke: return "TwoStroke";
    case MachineType::four_stroke: return "FourStroke";
    case MachineType::six_stroke_yoshida: return "SixStrokeYoshida";
  }
  return "?";
}

inline std::optional<MachineType> parse_machine_type(std::string_view s) {
  for (auto t : all_machine_types) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

struct DephasingPolicy {
  enum class Kind { none, between_strokes, continuous };
  enum class Scope { interaction_zone, engine_only };

  Kind kind{Kind::none};
  std::size_t n_slices{1};
  Scope scope{Scope::interaction_zone};

  static DephasingPolicy none() { return {}; }
  static DephasingPolicy between_strokes(Scope scope = Scope::interaction_zone) {
    return {Kind::between_strokes, 1, scope};
  }
  static DephasingPolicy continuous(std::size_t n, Scope scope = Scope::interaction_zone) {
    if (n < 1) throw std::invalid_argument("DephasingPolicy: continuous dephasing needs n_slices >= 1");
    return {Kind::continuous, n, scope};
  }
};

// Full thermalization of exchanger particles is assumed; sizes are metadata.
struct ExchangerSpec {
  std::size_t cold_particles{1};
  std::size_t hot_particles{1};
  static constexpr bool full_thermalization = true;
};

// --------------------------- Hamiltonians -----------------------------------

inline HermitianOperator engine_hamiltonian(const EngineSpec& engine) {
  const auto lv = engine.levels();
  return HermitianOperator::diagonal(SubsystemLayout{3}, {lv[0], lv[1], lv[2]});
}

inline HermitianOperator terminal_hamiltonian(double gap) {
  return HermitianOperator::diagonal(SubsystemLayout{2}, {0.0, gap});
}

namespace detail {

// |g><e|_terminal ⊗ |upper><lower|_engine + h.c., embedded on the layout.
inline Matrix exchange_operator(Terminal kind, const SubsystemLayout& layout, std::size_t engine_site,
                                std::size_t terminal_site) {
  const auto [lo, up] = manifold(kind);
  Matrix local = Matrix::Zero(6, 6);  // engine (3) ⊗ terminal (2)
  const Eigen::Index from = static_cast<Eigen::Index>(lo * 2 + 1);  // engine lower, terminal excited
  const Eigen::Index to = static_cast<Eigen::Index>(up * 2 + 0);    // engine upper, terminal ground
  local(to, from) = 1.0;
  local(from, to) = 1.0;
  const std::array<std::size_t, 2> sites{engine_site, terminal_site};
  return embed(local, sites, layout);
}

}  // namespace detail

// Energy-conserving exchange between engine manifold `kind` and its terminal.
// Throws if [H_ek, H_e + H_k] != 0, i.e. the terminal gap does not match.
inline HermitianOperator interaction_hamiltonian(Terminal kind, double coupling, const EngineSpec& engine,
                                                 double terminal_gap, const SubsystemLayout& layout,
                                                 std::size_t engine_site, std::size_t terminal_site) {
  if (layout.dim(engine_site) != 3 || layout.dim(terminal_site) != 2) {
    throw std::invalid_argument("interaction_hamiltonian: layout needs an engine qutrit and a terminal qubit");
  }
  const Matrix shape = detail::exchange_operator(kind, layout, engine_site, terminal_site);
  const std::array<std::size_t, 1> es{engine_site}, ts{terminal_site};
  const Matrix bare = detail::embed(engine_hamiltonian(engine).matrix(), es, layout) +
                      detail::embed(terminal_hamiltonian(terminal_gap).matrix(), ts, layout);
  const double comm = (shape * bare - bare * shape).cwiseAbs().maxCoeff();
  if (comm > 1e-12) {
    throw std::invalid_argument("interaction_hamiltonian: coupling does not conserve energy (terminal gap " +
                                std::to_string(terminal_gap) + " vs manifold gap " +
                                std::to_string(engine.gap(kind)) + ")");
  }
  return HermitianOperator(layout, coupling * shape);
}

inline HermitianOperator interaction_hamiltonian(Terminal kind, double coupling, const EngineSpec& engine,
                                                 double terminal_gap) {
  return interaction_hamiltonian(kind, coupling, engine, terminal_gap, machine_layout(), site::engine,
                                 site_of(kind));
}

// H_e + H_c + H_h + H_w on the canonical layout.
inline HermitianOperator total_bare_hamiltonian(const EngineSpec& engine) {
  const auto& layout = machine_layout();
  HermitianOperator h = embed(engine_hamiltonian(engine), {site::engine}, layout);
  for (auto k : all_terminals) {
    h = h + embed(terminal_hamiltonian(engine.gap(k)), {site_of(k)}, layout);
  }
  return h;
}

inline HermitianOperator bare_hamiltonian_of(Terminal k, const EngineSpec& engine) {
  return embed(terminal_hamiltonian(engine.gap(k)), {site_of(k)}, machine_layout());
}

inline HermitianOperator bare_engine_hamiltonian(const EngineSpec& engine) {
  return embed(engine_hamiltonian(engine), {site::engine}, machine_layout());
}

// --------------------------- strokes ----------------------------------------

struct YoshidaCoefficients {
  double x0;
  double x1;
};

// Real solution of x0 + 2 x1 = 1, x0^3 + 2 x1^3 = 0.
inline YoshidaCoefficients yoshida_coefficients() {
  const double c = std::cbrt(2.0);
  const double x1 = 1.0 / (2.0 - c);
  return {-c * x1, x1};
}

struct Stroke {
  std::string label;
  HermitianOperator generator;
  double duration;
  UnitaryOperator unitary;

  Stroke(std::string l, HermitianOperator h, double t)
      : label(std::move(l)), generator(std::move(h)), duration(t), unitary(evolve(generator, t)) {}
};

// Strokes in application order: front() acts first.
using StrokeSequence = std::vector<Stroke>;

struct InteractionSet {
  HermitianOperator cold;
  HermitianOperator hot;
  HermitianOperator work;
};

inline InteractionSet interaction_set(const EngineSpec& engine, const CouplingSpec& couplings) {
  return {interaction_hamiltonian(Terminal::cold, couplings.coupling(Terminal::cold), engine, engine.cold_gap()),
          interaction_hamiltonian(Terminal::hot, couplings.coupling(Terminal::hot), engine, engine.hot_gap()),
          interaction_hamiltonian(Terminal::work, couplings.coupling(Terminal::work), engine, engine.work_gap())};
}

namespace detail {

inline void append_two_stroke_cell(StrokeSequence& seq, const InteractionSet& h, double t) {
  seq.emplace_back("work/2", h.work, 0.5 * t);
  seq.emplace_back("cold+hot", h.cold + h.hot, t);
  seq.emplace_back("work/2", h.work, 0.5 * t);
}

}  // namespace detail

inline StrokeSequence cycle_strokes(MachineType type, const EngineSpec& engine, const CouplingSpec& couplings) {
  const InteractionSet h = interaction_set(engine, couplings);
  const double t = couplings.cycle_time();
  StrokeSequence seq;
  switch (type) {
    case MachineType::simultaneous:
      seq.emplace_back("cold+hot+work", h.cold + h.hot + h.work, t);
      break;
    case MachineType::two_stroke:
      detail::append_two_stroke_cell(seq, h, t);
      break;
    case MachineType::four_stroke:
      seq.emplace_back("hot/2", h.hot, 0.5 * t);
      seq.emplace_back("work/2", h.work, 0.5 * t);
      seq.emplace_back("cold", h.cold, t);
      seq.emplace_back("work/2", h.work, 0.5 * t);
      seq.emplace_back("hot/2", h.hot, 0.5 * t);
      break;
    case MachineType::six_stroke_yoshida: {
      const auto [x0, x1] = yoshida_coefficients();
      detail::append_two_stroke_cell(seq, h, x1 * t);
      detail::append_two_stroke_cell(seq, h, x0 * t);
      detail::append_two_stroke_cell(seq, h, x1 * t);
      break;
    }
  }
  return seq;
}

// Product of the strokes (last applied is leftmost).
inline UnitaryOperator compose(const StrokeSequence& strokes, const SubsystemLayout& layout) {
  UnitaryOperator u = UnitaryOperator::identity(layout);
  for (const auto& s : strokes) u = s.unitary * u;
  return u;
}

inline UnitaryOperator cycle_operator(MachineType type, const EngineSpec& engine, const CouplingSpec& couplings) {
  return compose(cycle_strokes(type, engine, couplings), machine_layout());
}

// s = (|H_ec| + |H_eh| + |H_ew|) tau_cyc with spectral norms.
inline double engine_action(const CouplingSpec& couplings, const EngineSpec& engine) {
  const InteractionSet h = interaction_set(engine, couplings);
  return (spectral_norm(h.cold) + spectral_norm(h.hot) + spectral_norm(h.work)) * couplings.cycle_time();
}

// --------------------------- MachineSpec ------------------------------------

struct MachineSpec {
  EngineSpec engine;
  TerminalSpec cold;
  TerminalSpec hot;
  TerminalSpec work;
  CouplingSpec couplings;
  MachineType type{MachineType::simultaneous};
  DephasingPolicy dephasing{};
  ExchangerSpec exchangers{};

  MachineSpec(EngineSpec e, TerminalSpec c, TerminalSpec h, TerminalSpec w, CouplingSpec k,
              MachineType t = MachineType::simultaneous, DephasingPolicy d = {})
      : engine(e), cold(c), hot(h), work(w), couplings(k), type(t), dephasing(d) {
    validate();
  }

  // Thermal cold/hot terminals at T_c, T_h and a battery with excited population p_w.
  static MachineSpec standard(const EngineSpec& e, double t_cold, double t_hot, double p_w,
                              const CouplingSpec& k, MachineType t = MachineType::simultaneous,
                              DephasingPolicy d = {}) {
    return MachineSpec(e, TerminalSpec(Terminal::cold, e.cold_gap(), Temperature{t_cold}),
                       TerminalSpec(Terminal::hot, e.hot_gap(), Temperature{t_hot}),
                       TerminalSpec(Terminal::work, e.work_gap(), ExcitedPopulation{p_w}), k, t, d);
  }

  void validate() const {
    const std::array<const TerminalSpec*, 3> ts{&cold, &hot, &work};
    for (std::size_t i = 0; i < 3; ++i) {
      const Terminal k = all_terminals[i];
      if (ts[i]->kind() != k) throw std::invalid_argument("MachineSpec: terminal kind mismatch");
      if (std::abs(ts[i]->gap() - engine.gap(k)) > 1e-12 * std::max(1.0, engine.gap(k))) {
        throw std::invalid_argument("MachineSpec: " + std::string(to_string(k)) +
                                    " terminal gap must equal the engine manifold gap");
      }
    }
    if (dephasing.kind == DephasingPolicy::Kind::continuous && dephasing.n_slices < 1) {
      throw std::invalid_argument("MachineSpec: continuous dephasing needs n_slices >= 1");
    }
  }

  MachineSpec with_type(MachineType t) const {
    MachineSpec m = *this;
    m.type = t;
    return m;
  }
  MachineSpec with_dephasing(DephasingPolicy d) const {
    MachineSpec m = *this;
    m.dephasing = d;
    return m;
  }
  MachineSpec with_cycle_time(double t) const {
    MachineSpec m = *this;
    m.couplings = couplings.with_cycle_time(t);
    return m;
  }
  MachineSpec with_battery_population(double p) const {
    MachineSpec m = *this;
    m.work = TerminalSpec(Terminal::work, engine.work_gap(), ExcitedPopulation{p});
    return m;
  }

  double action() const { return engine_action(couplings, engine); }
};

}  // namespace qhx
