#include "qhx/battery.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qhx;
using battery::EnginePopulations;

namespace {

// Listed example triple and its proportional normalization.
constexpr double fig_a = 0.056, fig_b = 0.074, fig_c = 0.4;
const EnginePopulations fig_normalized(fig_a / 0.53, fig_b / 0.53, fig_c / 0.53);

double h2(double p) {
  double s = 0;
  for (double x : {p, 1 - p})
    if (x > 0) s -= x * std::log(x);
  return s;
}

}  // namespace

TEST(EnginePopulations, Validation) {
  EXPECT_THROW(EnginePopulations(0.5, 0.6, -0.1), std::invalid_argument);
  EXPECT_THROW(EnginePopulations(fig_a, fig_b, fig_c), std::invalid_argument);  // sums to 0.53
  EXPECT_NO_THROW(EnginePopulations(0.2, 0.3, 0.5));
}

TEST(FullSwap, ClosedFormPopulations) {
  const EnginePopulations e(0.2, 0.3, 0.5);
  const double p = 0.35;
  const auto r = battery::full_swap(e, p);
  EXPECT_NEAR(r.engine_out[0], 0.2, 1e-15);
  EXPECT_NEAR(r.engine_out[1], 0.8 * 0.65, 1e-15);
  EXPECT_NEAR(r.engine_out[2], 0.8 * 0.35, 1e-15);
  EXPECT_NEAR(r.battery_out[0], 0.3 + 0.2 * 0.65, 1e-15);
  EXPECT_NEAR(r.battery_out[1], 0.5 + 0.2 * 0.35, 1e-15);
  EXPECT_NEAR(r.dE_w, 0.5 + 0.2 * 0.35 - 0.35, 1e-15);
  EXPECT_THROW(battery::full_swap(e, 1.2), std::invalid_argument);
  EXPECT_THROW(battery::full_swap(e, -0.1), std::invalid_argument);
}

TEST(FullSwap, GroundStateEngineDoesNothing) {
  const auto r = battery::full_swap(EnginePopulations(1, 0, 0), 0.3);
  EXPECT_NEAR(r.battery_out[1], 0.3, 1e-15);
  EXPECT_NEAR(r.dE_w, 0.0, 1e-15);
  EXPECT_TRUE(r.degenerate);
}

TEST(FullSwap, EmptyGroundLevelIsRegularSwap) {
  const auto r = battery::full_swap(EnginePopulations(0, 0.3, 0.7), 0.2);
  EXPECT_NEAR(r.battery_out[0], 0.3, 1e-15);
  EXPECT_NEAR(r.battery_out[1], 0.7, 1e-15);
  EXPECT_NEAR(r.engine_out[1], 0.8, 1e-15);
  EXPECT_NEAR(r.engine_out[2], 0.2, 1e-15);
  EXPECT_NEAR(r.I_ew, 0.0, 1e-12);
}

TEST(FullSwap, PopulationChangesAreOpposite) {
  const EnginePopulations e(0.15, 0.25, 0.6);
  for (double p : {0.0, 0.3, 0.77, 1.0}) {
    const auto r = battery::full_swap(e, p);
    EXPECT_NEAR(r.engine_out[1] - e.b, -(r.battery_out[0] - (1 - p)), 1e-15);
    EXPECT_NEAR(r.engine_out[2] - e.c, -(r.battery_out[1] - p), 1e-15);
  }
}

TEST(FullSwap, ClosedFormMatchesUnitarySwap) {
  for (const EnginePopulations& e : {fig_normalized, EnginePopulations(0.2, 0.3, 0.5), EnginePopulations(0, 0.4, 0.6)}) {
    for (int k = 0; k <= 20; ++k) {
      const double p = k / 20.0;
      const auto c = battery::full_swap(e, p);
      const auto u = battery::full_swap_unitary(e, p);
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(c.engine_out[i], u.engine_out[i], 1e-10);
      for (int i = 0; i < 2; ++i) EXPECT_NEAR(c.battery_out[i], u.battery_out[i], 1e-10);
      EXPECT_NEAR(c.dS_w, u.dS_w, 1e-10);
      EXPECT_NEAR(c.dS_e, u.dS_e, 1e-10);
      EXPECT_NEAR(c.I_ew, u.I_ew, 1e-10);
      // joint populations element-wise
      const auto joint = battery::full_swap_joint(e, p);
      const auto rho = battery::swap_evolution(e, p, std::numbers::pi / 2);
      for (int i = 0; i < 6; ++i) EXPECT_NEAR(joint[i], rho.matrix()(i, i).real(), 1e-10);
    }
  }
}

TEST(EntropyPreserving, FormulaValues) {
  EXPECT_NEAR(battery::entropy_preserving_pw(EnginePopulations(0, 0.3, 0.7)), 0.3, 1e-15);
  EXPECT_NEAR(battery::entropy_preserving_pw(fig_a, fig_c), 0.6 / 1.056, 1e-15);
  EXPECT_NEAR(battery::entropy_preserving_pw(fig_a, fig_c), 0.568182, 1e-6);
}

TEST(EntropyPreserving, BatteryEntropyUnchangedEngineEntropyGrows) {
  for (const EnginePopulations& e : {fig_normalized, EnginePopulations(0.2, 0.3, 0.5), EnginePopulations(0.4, 0.1, 0.5)}) {
    const double p = battery::entropy_preserving_pw(e);
    const auto r = battery::full_swap(e, p);
    EXPECT_LT(std::abs(r.dS_w), 1e-12);
    EXPECT_NEAR(r.battery_out[1], 1 - p, 1e-15);
    EXPECT_GE(r.dS_e, 0.0);
  }
}

TEST(ZeroEnergy, FormulaValuesAndFixedPoint) {
  EXPECT_NEAR(*battery::zero_energy_pw(fig_b, fig_c), 0.843882, 1e-6);
  EXPECT_NEAR(*battery::zero_energy_pw(EnginePopulations(0.6, 0.4, 0.0)), 0.0, 0.0);
  EXPECT_FALSE(battery::zero_energy_pw(EnginePopulations(1, 0, 0)).has_value());
  for (const EnginePopulations& e : {fig_normalized, EnginePopulations(0.2, 0.3, 0.5)}) {
    const auto r = battery::full_swap(e, *battery::zero_energy_pw(e));
    EXPECT_LT(std::abs(r.dE_w), 1e-12);
    EXPECT_LT(std::abs(r.dS_w), 1e-12);
  }
}

TEST(Window, NormalizedExampleChargesAndPurifiesInside) {
  const auto w = battery::charging_purifying_window(fig_normalized);
  ASSERT_FALSE(w.empty);
  EXPECT_NEAR(w.p_lo, 0.221843, 1e-6);
  EXPECT_NEAR(w.p_hi, 0.843882, 1e-6);
  const int n = 2000;
  for (int k = 1; k < n; ++k) {
    const double p = w.p_lo + (w.p_hi - w.p_lo) * k / n;
    const auto r = battery::full_swap(fig_normalized, p);
    ASSERT_GT(r.dE_w, 0.0) << p;
    ASSERT_LT(r.dS_w, 0.0) << p;
  }
  const auto mid = battery::full_swap(fig_normalized, 0.5 * (w.p_lo + w.p_hi));
  EXPECT_GT(mid.dE_w, 0.0);
  EXPECT_LT(mid.dS_w, 0.0);
}

TEST(Window, SignPatternOutsideWindow) {
  const auto w = battery::charging_purifying_window(fig_normalized);
  EXPECT_LT(battery::full_swap(fig_normalized, 0.95).dE_w, 0.0);
  EXPECT_GT(battery::full_swap(fig_normalized, 0.1).dS_w, 0.0);
  EXPECT_GT(battery::full_swap(fig_normalized, w.p_lo - 1e-3).dS_w, 0.0);
}

TEST(Window, NoInversionMeansEmptyWindow) {
  const EnginePopulations e(0.4, 0.3, 0.3);
  const auto w = battery::charging_purifying_window(e);
  EXPECT_TRUE(w.empty);
  // with b = c and a + b + c = 1 both boundaries coincide: (1-c)/(1+a) = 1/2 = c/(b+c)
  EXPECT_NEAR(w.p_lo, 0.5, 1e-15);
  EXPECT_NEAR(w.p_hi, 0.5, 1e-15);
  EXPECT_TRUE(battery::charging_purifying_window(EnginePopulations(0.2, 0.5, 0.3)).empty);
}

TEST(Qutrit, SwapCreatesNoCorrelation) {
  for (const EnginePopulations& e : {fig_normalized, EnginePopulations(0.2, 0.3, 0.5)}) {
    const auto r = battery::qutrit_battery_swap(e);
    EXPECT_LT(r.I_ew, 1e-12);
    EXPECT_GE(r.I_ew, -1e-10);
    // the battery ends in the engine's initial state
    const double s_engine = -(e.a * std::log(e.a) + e.b * std::log(e.b) + e.c * std::log(e.c));
    const double s_batt = -(r.battery_out[0] * std::log(r.battery_out[0]) + r.battery_out[1] * std::log(r.battery_out[1]) +
                            r.battery_out[2] * std::log(r.battery_out[2]));
    EXPECT_NEAR(s_batt, s_engine, 1e-12);
    EXPECT_NEAR(r.battery_out[1], e.b, 1e-15);
    EXPECT_NEAR(r.battery_out[2], e.c, 1e-15);
    const EngineSpec eng(1.0, 4.0);
    const double de_w = battery::qutrit_energy_change(r, e, eng);
    const double de_e = eng.cold_gap() * (r.engine_out[1] - e.b) + eng.hot_gap() * (r.engine_out[2] - e.c);
    EXPECT_NEAR(de_w, -de_e, 1e-14);
    EXPECT_NEAR(de_w, eng.work_gap() * r.dE_w, 1e-14);
  }
}

TEST(Sweep, EnergyIsAffineInBatteryPopulation) {
  std::vector<double> grid;
  for (int k = 0; k <= 50; ++k) grid.push_back(k / 50.0);
  const auto rows = battery::sweep_battery(fig_normalized, grid);
  const double slope = rows.back().dE_w - rows.front().dE_w;
  for (const auto& r : rows) EXPECT_NEAR(r.dE_w, rows.front().dE_w + slope * r.p_w_in, 1e-12);
  EXPECT_THROW(battery::sweep_battery(fig_normalized, {0.5, 1.5}), std::invalid_argument);
  EXPECT_EQ(battery::sweep_battery(fig_normalized, {0.5}).size(), 1u);
}

TEST(Sweep, EntropyChangeCrossesZeroAtBothBoundaries) {
  const double lo = battery::entropy_preserving_pw(fig_normalized);
  const double hi = *battery::zero_energy_pw(fig_normalized);
  for (double root : {lo, hi}) {
    EXPECT_NEAR(battery::full_swap(fig_normalized, root).dS_w, 0.0, 1e-12);
  }
  EXPECT_GT(battery::full_swap(fig_normalized, lo - 1e-6).dS_w, 0.0);
  EXPECT_LT(battery::full_swap(fig_normalized, lo + 1e-6).dS_w, 0.0);
  EXPECT_LT(battery::full_swap(fig_normalized, hi - 1e-6).dS_w, 0.0);
  EXPECT_GT(battery::full_swap(fig_normalized, hi + 1e-6).dS_w, 0.0);
}

TEST(Sweep, WeakSwapFromMixedBatteryHasVanishingPollution) {
  const EnginePopulations e(0.1, 0.2, 0.7);
  double prev = std::numeric_limits<double>::infinity();
  for (double area : {1e-1, 1e-2, 1e-3}) {
    const auto r = battery::partial_swap(e, 0.5, area);
    ASSERT_GT(r.dE_w, 0.0);
    const double ratio = std::abs(r.dS_w / r.dE_w);
    EXPECT_LT(ratio, prev);
    prev = ratio;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(Invariants, EngineEntropyAndCorrelations) {
  for (const EnginePopulations& e : {fig_normalized, EnginePopulations(0.2, 0.3, 0.5)}) {
    const double p0 = *battery::zero_energy_pw(e);
    const double s_e = -(e.a * std::log(e.a) + e.b * std::log(e.b) + e.c * std::log(e.c));
    for (int k = 0; k <= 100; ++k) {
      const double p = k / 100.0;
      const auto r = battery::full_swap(e, p);
      // the work manifold ends in the battery's split of its weight b + c
      EXPECT_NEAR(r.dS_e, (e.b + e.c) * (h2(p) - h2(p0)), 1e-12);
      EXPECT_GE(r.I_ew, -1e-10);
      if (std::abs(p - p0) > 1e-3) {
        EXPECT_GT(r.I_ew, 0.0);
      }
      const double joint = (r.dS_e + s_e) + (r.dS_w + h2(p)) - r.I_ew;
      EXPECT_NEAR(joint, s_e + h2(p), 1e-10);
    }
    EXPECT_GT(battery::full_swap(e, battery::entropy_preserving_pw(e)).dS_e, 0.0);
  }
}
