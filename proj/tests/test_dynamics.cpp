#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "deposim/dynamics.hpp"
#include "deposim/stats.hpp"

using namespace deposim;

namespace {

// h_k(t) - h_0(0) read from the current slopes: the origin column's bricks minus the
// slope between 0 and k at time t.
std::int64_t current_from_heights(const RingState& s, double V, double t) {
  const auto L = static_cast<std::int64_t>(s.size());
  const auto k = static_cast<std::int64_t>(V >= 0 ? std::floor(V * t) : std::ceil(V * t));
  std::int64_t j = s.bricks()[0];
  if (k >= 0)
    for (std::int64_t i = 1; i <= k; ++i) j -= s.omega()[static_cast<std::size_t>(floor_mod(i, L))];
  else
    for (std::int64_t i = k + 1; i <= 0; ++i) j += s.omega()[static_cast<std::size_t>(floor_mod(i, L))];
  return j;
}

}  // namespace

TEST(RateTree, SamplesProportionally) {
  RateTree tree(5);
  const double r[5] = {1.0, 0.0, 3.0, 0.5, 0.5};
  for (std::size_t i = 0; i < 5; ++i) tree.set(i, r[i]);
  EXPECT_DOUBLE_EQ(tree.total(), 5.0);
  auto rng = make_rng(3, 0);
  std::vector<int> hits(5, 0);
  const int n = 100000;
  for (int k = 0; k < n; ++k) ++hits[tree.sample(uniform01(rng) * tree.total())];
  EXPECT_EQ(hits[1], 0);
  for (std::size_t i = 0; i < 5; ++i) {
    const double p = r[i] / 5.0;
    EXPECT_NEAR(hits[i] / double(n), p, 5 * std::sqrt(p * (1 - p) / n) + 1e-12);
  }
}

TEST(Ring, MassConservedAndRatesConsistent) {
  const auto spec = ModelSpec::bricklayers(GrowthFunction::exponential(0.5));
  const auto m = build_marginal(spec, 0.3);
  auto rng = make_rng(11, 0);
  auto ring = init_ring(spec, m, 50, rng);
  const auto mass0 = std::accumulate(ring.omega().begin(), ring.omega().end(), 0LL);
  for (int k = 0; k < 20000; ++k) ring.step(rng);
  EXPECT_EQ(std::accumulate(ring.omega().begin(), ring.omega().end(), 0LL), mass0);
  EXPECT_TRUE(ring.rates_consistent());
  EXPECT_EQ(ring.events(), 20000u);
}

TEST(Ring, SlopeChangeMatchesBrickDifferences) {
  const auto spec = ModelSpec::particle_antiparticle(0.3, 1.0);
  auto rng = make_rng(5, 1);
  auto ring = init_ring(spec, build_marginal(spec, 0.0), 20, rng);
  for (int k = 0; k < 3000; ++k) ring.step(rng);
  const std::size_t L = ring.size();
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t left = (i + L - 1) % L;
    EXPECT_EQ(ring.omega()[i] - ring.initial()[i], ring.bricks()[left] - ring.bricks()[i]);
  }
}

TEST(Ring, StaysInsideSupport) {
  const auto spec = ModelSpec::particle_antiparticle(0.2, 0.8);
  auto rng = make_rng(9, 2);
  auto ring = init_ring(spec, build_marginal(spec, 0.4), 16, rng);
  for (int k = 0; k < 5000; ++k) {
    ring.step(rng);
    for (int z : ring.omega()) ASSERT_TRUE(spec.support().contains(z));
  }
}

TEST(Current, AgreesWithHeightRoute) {
  const auto spec = ModelSpec::simple_exclusion();
  auto rng = make_rng(1, 4);
  auto ring = init_ring(spec, build_marginal(spec, 0.2), 128, rng);
  run_until(ring, 30.0, rng);
  for (double V : {-1.5, -0.4, 0.0, 0.3, 1.9}) EXPECT_EQ(current(ring, V, 30.0), current_from_heights(ring, V, 30.0)) << V;
  EXPECT_EQ(current(ring, 0.0, 30.0), ring.bricks()[0]);
}

TEST(Current, WindowGuard) {
  const auto spec = ModelSpec::simple_exclusion();
  auto rng = make_rng(1, 5);
  auto ring = init_ring(spec, build_marginal(spec, 0.0), 40, rng);
  EXPECT_THROW(current(ring, 1.0, 20.0), WindowWrap);
  EXPECT_NO_THROW(current(ring, 1.0, 19.0));
}

TEST(Ring, FrozenConfiguration) {
  const auto spec = ModelSpec::simple_exclusion();
  RingState ring(spec, std::vector<int>(8, 1));
  auto rng = make_rng(0, 0);
  EXPECT_EQ(ring.total_rate(), 0.0);
  EXPECT_TRUE(ring.step(rng).frozen);
  run_until(ring, 5.0, rng);
  EXPECT_EQ(ring.now(), 5.0);
  EXPECT_THROW(RingState(spec, std::vector<int>{0, 2}), std::invalid_argument);
}

TEST(RunUntil, ObservesEachTimeOnceInOrder) {
  const auto spec = ModelSpec::simple_exclusion();
  auto rng = make_rng(2, 0);
  auto ring = init_ring(spec, build_marginal(spec, 0.0), 32, rng);
  const std::vector<double> times{0.0, 0.5, 2.0, 7.0};
  std::vector<double> seen;
  std::vector<std::uint64_t> ev;
  run_until(ring, 7.0, times, [&](double t) { seen.push_back(t); ev.push_back(ring.events()); }, rng);
  EXPECT_EQ(seen, times);
  EXPECT_EQ(ev.front(), 0u);
  EXPECT_TRUE(std::is_sorted(ev.begin(), ev.end()));
}

TEST(Ring, SameSeedSameTrajectory) {
  const auto spec = ModelSpec::zero_range(GrowthFunction::zr_linear());
  const auto m = build_marginal(spec, 0.0);
  auto a_rng = make_rng(42, 3), b_rng = make_rng(42, 3);
  auto a = init_ring(spec, m, 30, a_rng), b = init_ring(spec, m, 30, b_rng);
  run_until(a, 10.0, a_rng);
  run_until(b, 10.0, b_rng);
  EXPECT_EQ(a.bricks(), b.bricks());
  EXPECT_EQ(a.omega(), b.omega());
}

// Stationary mean flux through the origin column: E J(t) = t E r.
TEST(Ring, MeanCurrentIsStationaryFlux) {
  const auto spec = ModelSpec::simple_exclusion();
  const double rho = 0.3, th = std::log(rho / (1 - rho));
  const auto m = build_marginal(spec, th);
  RunningStats st;
  const double t = 10.0;
  for (std::uint64_t r = 0; r < 2000; ++r) {
    auto rng = make_rng(77, r);
    auto ring = init_ring(spec, m, 64, rng);
    run_until(ring, t, rng);
    st.push(static_cast<double>(ring.bricks()[0]) / t);
  }
  EXPECT_NEAR(st.mean(), rho * (1 - rho), 5 * st.stderr_mean());
}
