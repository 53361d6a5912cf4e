#include <gtest/gtest.h>

#include <cmath>

#include "deposim/oracle.hpp"

using namespace deposim;
using namespace deposim::oracle;

namespace {

ModelSpec pa() { return ModelSpec::particle_antiparticle(0.3, 1.0); }

}  // namespace

TEST(Space, EncodeDecodeRoundTrip) {
  StateSpace s(5, -1, 1);
  EXPECT_EQ(s.size(), 243u);
  for (std::size_t x = 0; x < s.size(); ++x) ASSERT_EQ(s.encode(s.decode(x)), x);
  EXPECT_EQ(s.decode(1), (std::vector<int>{0, -1, -1, -1, -1}));
  EXPECT_THROW(StateSpace(20, -1, 1), SpaceTooLarge);
  EXPECT_TRUE(StateSpace::for_model(ModelSpec::zero_range(GrowthFunction::zr_linear()), 3, 4)
                  .truncated(ModelSpec::zero_range(GrowthFunction::zr_linear())));
}

TEST(Generator, RowsSumToZeroAndMassIsConserved) {
  for (const auto& spec : {ModelSpec::simple_exclusion(), pa()}) {
    const StateSpace space = StateSpace::for_model(spec, 5, 8);
    const auto g = build_generator(spec, space);
    EXPECT_LT(g.max_row_sum(), 1e-14);
    EXPECT_TRUE(g.offdiag_nonnegative());
    EXPECT_TRUE(sectors_invariant(g, space));
    for (double l : g.leak) EXPECT_EQ(l, 0.0);
  }
}

TEST(Generator, CappedAlphabetRecordsLeak) {
  const auto zr = ModelSpec::zero_range(GrowthFunction::zr_linear());
  const StateSpace space = StateSpace::for_model(zr, 3, 2);
  const auto g = build_generator(zr, space);
  // (2, 2, 0): site 0 would push site 1 to 3
  EXPECT_DOUBLE_EQ(g.leak[space.encode({2, 2, 0})], 2.0);
  EXPECT_TRUE(sectors_invariant(g, space));
}

class Stationary : public ::testing::TestWithParam<std::tuple<int, double, int>> {};

TEST_P(Stationary, ProductMeasureIsInvariant) {
  const auto [which, theta, L] = GetParam();
  const auto spec = which == 0 ? ModelSpec::simple_exclusion() : pa();
  const auto r = stationarity(spec, theta, static_cast<std::size_t>(L));
  EXPECT_LT(r.residual, 1e-12);
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(r.leak_mass, 0.0);
}

INSTANTIATE_TEST_SUITE_P(Rings, Stationary,
                         ::testing::Combine(::testing::Values(0, 1), ::testing::Values(-0.8, 0.0, 0.847),
                                            ::testing::Values(3, 4, 5, 6, 7)));

TEST(Stationary, DetectsRatesOutsideTheClass) {
  const auto bad = ModelSpec::custom({0, 2}, [](int z, int y) { return double(z * z * (2 - y)); });
  ASSERT_TRUE(validate_monotonicity(bad).passed());
  ASSERT_FALSE(validate_sum_rule(bad).passed());
  EXPECT_GT(stationarity_residual(bad, 0.2, 4), 1e-4);
}

TEST(Stationary, ZeroRangeTruncationIsReported) {
  const auto zr = ModelSpec::zero_range(GrowthFunction::zr_linear());
  const auto r = stationarity(zr, -1.0, 3, 10);
  EXPECT_TRUE(r.truncated);
  EXPECT_GT(r.leak_mass, 0.0);
  EXPECT_LT(r.residual, 1e-4);
}

// Two-state chain: P_t = Pi + e^{-(a+b)t}(I - Pi).
TEST(Uniformisation, TwoStateClosedForm) {
  const double a = 1.3, b = 0.4, t = 2.2;
  Generator g;
  g.n = 2;
  g.row_start = {0, 1, 2};
  g.col = {1, 0};
  g.val = {a, b};
  g.diag = {-a, -b};
  g.leak = {0, 0};
  const auto u = expm_action(g, {1.0, 0.0}, t);
  const double e = std::exp(-(a + b) * t), pi0 = b / (a + b);
  EXPECT_NEAR(u.value[0], pi0 + e * (1 - pi0), 1e-12);
  EXPECT_NEAR(u.value[1], pi0 - e * pi0, 1e-12);
  EXPECT_LT(u.tail_bound, 1e-12);
  const auto l = expm_action(g, {1.0, 0.0}, t, true);
  EXPECT_NEAR(l.value[0] + l.value[1], 1.0, 1e-12);
  EXPECT_NEAR(l.value[1], (1 - pi0) * (1 - e), 1e-12);
  EXPECT_THROW(expm_action(g, {1.0, 0.0}, 1000.0), std::domain_error);
  EXPECT_EQ(expm_action(g, {3.0, 4.0}, 0.0).value, (std::vector<double>{3.0, 4.0}));
}

TEST(Correlation, TimeZeroIsDiagonal) {
  const auto se = ModelSpec::simple_exclusion();
  const double th = std::log(0.3 / 0.7);
  EXPECT_NEAR(exact_correlation(se, th, 6, 0, 0.0), 0.21, 1e-12);
  EXPECT_NEAR(exact_correlation(se, th, 6, 2, 0.0), 0.0, 1e-12);
}

TEST(Correlation, SumOverOffsetsIsConserved) {
  for (const auto& spec : {ModelSpec::simple_exclusion(), pa()}) {
    const double th = 0.4;
    const double var = moments(build_marginal(spec, th), spec).var;
    for (double t : {0.3, 1.0, 2.5}) {
      double s = 0;
      for (int n = 0; n < 6; ++n) s += exact_correlation(spec, th, 6, n, t);
      EXPECT_NEAR(s, var, 1e-10) << spec.name() << " " << t;
    }
  }
}

TEST(Correlation, TranslationOnTheRing) {
  const auto se = ModelSpec::simple_exclusion();
  EXPECT_NEAR(exact_correlation(se, 0.3, 6, -1, 0.8), exact_correlation(se, 0.3, 6, 5, 0.8), 1e-14);
}

TEST(Adjoint, ReversedGeneratorIsTheAdjoint) {
  for (const auto& spec : {ModelSpec::simple_exclusion(), pa()}) {
    const auto rep = adjoint_check(spec, 0.3, 5, 20, 4);
    EXPECT_EQ(rep.trials, 20u);
    EXPECT_LT(rep.max_discrepancy, 1e-12) << spec.name();
    EXPECT_GT(rep.min_dirichlet, 0.0);
  }
}

TEST(SmallTime, SimulatorMatchesOneStepLaw) {
  const auto se = ModelSpec::simple_exclusion();
  const auto rep = simulator_smalltime_check(se, {1, 0, 1, 1, 0, 0}, 0.05, 40000, 2);
  EXPECT_EQ(rep.replicas, 40000u);
  EXPECT_LT(rep.tv, 0.02);
}
