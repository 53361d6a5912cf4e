#include <gtest/gtest.h>

#include <cmath>

#include "deposim/bricklayer.hpp"
#include "deposim/estimators.hpp"

using namespace deposim;

namespace {

ModelSpec bl(double beta = 0.5) { return ModelSpec::bricklayers(GrowthFunction::exponential(beta)); }

double row_sum(const TableRows& r) { return r[0] + r[1] + r[2] + r[3]; }

}  // namespace

// Each table splits one configuration's clock; rows must add up to that rate.
TEST(Tables, RowsAddUpToOwnRates) {
  for (double beta : {0.5, 1.0, 2.0}) {
    const auto f = GrowthFunction::exponential(beta);
    for (int lo = -4; lo <= 4; ++lo)
      for (int hi = lo + 1; hi <= lo + 5; ++hi) {
        EXPECT_NEAR(row_sum(upper_right_rows(f, lo, hi)), f(hi), 1e-12 * f(hi));
        EXPECT_NEAR(row_sum(upper_left_rows(f, lo, hi)), f(-lo), 1e-12 * f(-lo));
        EXPECT_NEAR(row_sum(lower_right_rows(f, lo, hi)), f(hi), 1e-12 * f(hi));
        EXPECT_NEAR(row_sum(lower_left_rows(f, lo, hi)), f(-lo), 1e-12 * f(-lo));
      }
  }
}

TEST(Tables, ConvexRatesGiveNonnegativeRows) {
  for (double beta : {0.5, 1.0, 2.0}) {
    const auto f = GrowthFunction::exponential(beta);
    for (int lo = -6; lo <= 6; ++lo)
      for (int hi = lo + 1; hi <= lo + 6; ++hi) {
        EXPECT_TRUE(rows_nonnegative(upper_right_rows(f, lo, hi)));
        EXPECT_TRUE(rows_nonnegative(upper_left_rows(f, lo, hi)));
        EXPECT_TRUE(rows_nonnegative(lower_right_rows(f, lo, hi)));
        EXPECT_TRUE(rows_nonnegative(lower_left_rows(f, lo, hi)));
      }
  }
  const auto lin = GrowthFunction::zr_linear();
  for (int lo = 0; lo <= 6; ++lo)
    for (int hi = lo + 1; hi <= lo + 6; ++hi) EXPECT_TRUE(rows_nonnegative(upper_right_rows(lin, lo, hi)));
}

TEST(Tables, ConcaveRatesAreCaught) {
  const auto f = GrowthFunction::zr_table({1.0, 1.5, 1.75, 1.8});
  EXPECT_FALSE(rows_nonnegative(upper_right_rows(f, 1, 4)));
}

TEST(System, SingleConfigurationRatesMatchModel) {
  const auto spec = bl();
  const auto m = build_marginal(spec, 0.2);
  auto rng = make_rng(3, 0);
  BricklayerSystem sys(spec, {sample_configuration(m, 25, rng)});
  for (int k = 0; k < 500; ++k) {
    double want = 0;
    const auto& w = sys.config(0);
    for (std::size_t i = 0; i < w.size(); ++i) want += spec.rate(w[i], w[(i + 1) % w.size()]);
    ASSERT_NEAR(sys.total_rate(), want, 1e-9 * want);
    sys.step(rng);
  }
}

TEST(System, SlopeMovesRightwardsAcrossLaidColumn) {
  const auto spec = bl();
  auto rng = make_rng(4, 0);
  const auto w0 = sample_configuration(build_marginal(spec, -0.3), 30, rng);
  BricklayerSystem sys(spec, {w0});
  for (int k = 0; k < 5000; ++k) sys.step(rng);
  const std::size_t L = 30;
  for (std::size_t i = 0; i < L; ++i)
    EXPECT_EQ(sys.config(0)[i] - w0[i], sys.bricks(0)[(i + L - 1) % L] - sys.bricks(0)[i]);
}

TEST(System, MeanColumnFluxIsStationaryFlux) {
  const auto spec = bl();
  const double th = 0.5;
  const auto m = build_marginal(spec, th);
  const double Er = moments(m, spec).Er;
  RunningStats st;
  const double t = 5.0;
  for (std::uint64_t r = 0; r < 1500; ++r) {
    auto rng = make_rng(31, r);
    BricklayerSystem sys(spec, {sample_configuration(m, 40, rng)});
    run_events(sys, t, rng, [] {});
    st.push(sys.bricks(0)[0] / t);
  }
  EXPECT_NEAR(st.mean(), Er, 5 * st.stderr_mean());
}

TEST(System, OrderPreservedAcrossManyConfigurations) {
  for (const auto& spec : {bl(), ModelSpec::zero_range(GrowthFunction::zr_linear())}) {
    std::vector<Marginal> ms;
    for (double th : {-0.6, -0.1, 0.3, 0.8}) ms.push_back(build_marginal(spec, th));
    auto rng = make_rng(6, 0);
    std::vector<std::vector<int>> cfg(ms.size(), std::vector<int>(32));
    for (std::size_t i = 0; i < 32; ++i) {
      const double u = uniform01(rng);
      for (std::size_t k = 0; k < ms.size(); ++k) cfg[k][i] = ms[k].quantile(u);
    }
    BricklayerSystem sys(spec, cfg);
    std::vector<std::int64_t> mass;
    for (std::size_t k = 0; k < ms.size(); ++k) mass.push_back(sys.mass(k));
    for (int e = 0; e < 20000; ++e) {
      sys.step(rng);
      for (std::size_t k = 0; k + 1 < ms.size(); ++k) ASSERT_TRUE(sys.ordered(k, k + 1)) << spec.name();
    }
    for (std::size_t k = 0; k < ms.size(); ++k) EXPECT_EQ(sys.mass(k), mass[k]);
  }
}

TEST(System, RejectsUnsupportedFamily) {
  const auto se = ModelSpec::simple_exclusion();
  EXPECT_THROW(BricklayerSystem(se, {{0, 1}}), Unsupported);
}

TEST(Swarm, WalkerStaysOnItsLabel) {
  const auto spec = bl();
  auto rng = make_rng(12, 0);
  auto sys = swarm_init(spec, build_marginal(spec, -0.2), build_marginal(spec, 0.4), 64, rng);
  const auto total = sys.walker(0).count;
  for (int e = 0; e < 30000; ++e) {
    sys.step(rng);
    const auto& w = sys.walker(0);
    ASSERT_TRUE(sys.walker_consistent(w));
    ASSERT_GT(sys.discrepancy(w, static_cast<std::size_t>(floor_mod(w.position, 64))), 0);
  }
  EXPECT_EQ(sys.mass(1) - sys.mass(0), total);
}

TEST(Swarm, DiscrepancyStartRequired) {
  const auto spec = bl();
  BricklayerSystem sys(spec, {{0, 0, 0}, {0, 1, 0}});
  EXPECT_THROW(sys.add_swarm(0, 1, Placement::Upper, 0), std::logic_error);
  EXPECT_NO_THROW(sys.add_swarm(0, 1, Placement::Upper, 1));
  EXPECT_THROW(sys.add_defect(0, 1, 0), std::logic_error);
}

TEST(Sandwich, JointRunsStayOrdered) {
  for (const auto& spec : {bl(), ModelSpec::zero_range(GrowthFunction::zr_linear())}) {
    const bool zr = spec.family() == Family::ZR;
    const double t1 = zr ? -0.5 : 0.0, t = zr ? 0.0 : 0.5, t2 = zr ? 0.5 : 1.0;
    for (std::uint64_t r = 0; r < 30; ++r) {
      auto rng = make_rng(99, r);
      const auto tally = sandwich_run(spec, t1, t, t2, 64, 8.0, rng);
      EXPECT_EQ(tally.violations, 0u) << spec.name();
      EXPECT_EQ(tally.negative_rows, 0u) << spec.name();
      EXPECT_GT(tally.events, 0u);
    }
  }
}

TEST(Sandwich, InitialLayout) {
  const auto spec = bl();
  auto rng = make_rng(1, 2);
  auto [sys, idx] = sandwich_init(spec, SandwichMode::Joint, 0.0, 0.5, 1.0, 32, rng);
  EXPECT_EQ(sys.count(), 4u);
  EXPECT_TRUE(sys.ordered(0, 2));
  EXPECT_TRUE(sys.ordered(1, 3));
  EXPECT_TRUE(sys.ordered(1, 2));
  EXPECT_EQ(sys.defect(idx.defect).position, 0);
  EXPECT_LE(sys.walker(*idx.lower_walker).position, 0);
  EXPECT_GE(sys.walker(*idx.upper_walker).position, 0);
  EXPECT_THROW(sandwich_init(spec, SandwichMode::Upper, 0.0, 0.5, 0.2, 32, rng), std::invalid_argument);
}

TEST(Tracers, OrderedEnvironmentsKeepTracersOrdered) {
  const auto row = tracer_order_row(bl(), 0.0, 0.6, 64, 10.0, 40, 5, 1);
  EXPECT_TRUE(row.pass);
  EXPECT_EQ(row.estimate, 0.0);
}
