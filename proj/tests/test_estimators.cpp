#include <gtest/gtest.h>

#include <cmath>

#include "deposim/estimators.hpp"

using namespace deposim;

namespace {

double logit(double rho) { return std::log(rho / (1 - rho)); }

ExperimentConfig tiny(std::string family = "SE") {
  ExperimentConfig c;
  c.family = std::move(family);
  c.L = 64;
  c.t = {0.0, 4.0};
  c.V = {0.0, 0.5};
  c.replicas = 60;
  c.seed = 3;
  c.threads = 1;
  c.n = {0, 1};
  c.n_max = 4;
  return c;
}

}  // namespace

// (|V - C| - |C|) var, checked against the one-sided forms case by case.
TEST(Slant, CorrectionEqualsDifferenceOfAbsoluteValues) {
  for (double C : {-1.3, -0.4, 0.0, 0.2, 0.9})
    for (double V = -2.0; V <= 2.0001; V += 0.1)
      EXPECT_NEAR(slanted_correction(V, C, 0.7), (std::abs(V - C) - std::abs(C)) * 0.7, 1e-12) << V << " " << C;
}

TEST(Slant, KnownValues) {
  EXPECT_DOUBLE_EQ(slanted_correction(0.0, 0.4, 1.0), 0.0);
  EXPECT_NEAR(slanted_correction(0.2, 0.4, 1.0), -0.2, 1e-15);
  EXPECT_NEAR(slanted_correction(1.0, 0.4, 1.0), 0.2, 1e-15);
  EXPECT_NEAR(slanted_correction(-0.5, 0.4, 1.0), 0.5, 1e-15);
}

TEST(Targets, SimpleExclusionVariance) {
  const auto se = ModelSpec::simple_exclusion();
  EXPECT_NEAR(variance_target(se, logit(0.3), 0.0), 0.21 * 0.4, 1e-12);
  EXPECT_NEAR(variance_target(se, logit(0.3), 0.4), 0.0, 1e-12);
  EXPECT_NEAR(variance_target(se, logit(0.5), 0.0), 0.0, 1e-12);
}

TEST(Targets, SimpleExclusionSwarmSpeed) {
  const auto se = ModelSpec::simple_exclusion();
  for (double r1 : {0.1, 0.3})
    for (double r2 : {0.5, 0.8}) {
      EXPECT_NEAR(swarm_speed_target(se, logit(r1), logit(r2)), 1 - r1 - r2, 1e-10);
      EXPECT_NEAR(swarm_current_target(se, logit(r1), logit(r2)), r2 * (1 - r2) - r1 * (1 - r1), 1e-12);
    }
}

TEST(Targets, SwarmSpeedTendsToCharacteristicSpeed) {
  for (const auto& spec : {ModelSpec::simple_exclusion(), ModelSpec::bricklayers(GrowthFunction::exponential(0.5)),
                           ModelSpec::zero_range(GrowthFunction::zr_linear()),
                           ModelSpec::particle_antiparticle(0.3, 1.0)}) {
    const auto row = sspeed_limit_row(spec, -1.0, 1.0);
    EXPECT_TRUE(row.pass) << spec.name() << " " << row.estimate;
    EXPECT_TRUE(row.asserted);
  }
}

TEST(Plain, SameSeedSameEnsembleAcrossThreads) {
  const auto spec = ModelSpec::bricklayers(GrowthFunction::exponential(0.5));
  const auto a = simulate_plain(spec, 0.2, 48, {1.0, 3.0}, {0.0, -0.7}, {0, 2}, 30, 9, 1);
  const auto b = simulate_plain(spec, 0.2, 48, {1.0, 3.0}, {0.0, -0.7}, {0, 2}, 30, 9, 3);
  for (std::size_t r = 0; r < 30; ++r) {
    EXPECT_EQ(a.runs[r].J, b.runs[r].J);
    EXPECT_EQ(a.runs[r].corr, b.runs[r].corr);
  }
  const auto c = simulate_plain(spec, 0.2, 48, {1.0, 3.0}, {0.0, -0.7}, {0, 2}, 30, 10, 1);
  EXPECT_NE(a.currents(1, 0), c.currents(1, 0));
}

TEST(Plain, WindowGuardEnforced) {
  EXPECT_THROW(simulate_plain(ModelSpec::simple_exclusion(), 0.0, 20, {10.0}, {1.0}, {}, 2, 1, 1), WindowWrap);
}

TEST(Plain, CorrelationAtTimeZeroIsVarianceAtOrigin) {
  const auto spec = ModelSpec::zero_range(GrowthFunction::zr_linear());
  const auto e = simulate_plain(spec, 0.0, 128, {0.0}, {0.0}, {0, 1, -3}, 400, 2, 1);
  const auto rows = correlation_rows(spec, 0.0, 128, e, false);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(rows[0].target, 1.0, 1e-9);
  EXPECT_EQ(rows[1].target, 0.0);
  for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.params.dump() << " " << r.estimate;
}

TEST(Plain, LlnRowsAtModestSize) {
  const auto spec = ModelSpec::simple_exclusion();
  const auto e = simulate_plain(spec, logit(0.3), 128, {10.0}, {0.0, 0.5, -1.0}, {}, 800, 4, 1);
  for (const auto& r : lln_rows(spec, logit(0.3), 128, e)) EXPECT_TRUE(r.pass) << r.params.dump();
}

TEST(Clt, SkipsDegenerateCases) {
  const auto se = ModelSpec::simple_exclusion();
  EXPECT_TRUE(clt_statistic(se, 0.0, {1, 2, 3}, 0.0, 5.0).skipped);  // C = 0 at rho = 1/2
  EXPECT_TRUE(clt_statistic(se, logit(0.3), {1, 2, 3}, 0.0, 0.0).skipped);
  EXPECT_FALSE(clt_statistic(se, logit(0.3), {1, 2, 3}, 0.0, 5.0).skipped);
}

TEST(Decomposition, OffsetsAreSymmetric) {
  const auto ns = decomposition_offsets(3);
  EXPECT_EQ(ns.size(), 23u);
  EXPECT_EQ(ns.front(), -11);
  EXPECT_EQ(ns.back(), 11);
}

// With uncorrelated increments both lines reduce to their drift terms, whose difference
// is 2t(E r* w0 + E r* w1) = 2t C var.
TEST(Decomposition, DriftTermsDifferByCharacteristicSpeed) {
  const auto spec = ModelSpec::bricklayers(GrowthFunction::exponential(0.5));
  const auto mt = moments(build_marginal(spec, 0.3), spec);
  const auto d = decomposition_lines(mt, 2.0, [](int) { return 0.0; }, 5);
  EXPECT_NEAR(d.line2 - d.line1, 2 * 2.0 * characteristic_speed(spec, 0.3) * mt.var, 1e-10);
}

TEST(Decomposition, RejectsOversizedTruncation) {
  const auto spec = ModelSpec::simple_exclusion();
  const auto e = simulate_plain(spec, 0.0, 16, {1.0}, {0.0}, decomposition_offsets(0), 5, 1, 1);
  EXPECT_THROW(decomposition_rows(spec, 0.0, 16, e, 4), ConfigError);
}

TEST(Defect, SkipTopLeavesReplicasUnsimulated) {
  const auto se = ModelSpec::simple_exclusion();
  const auto e = simulate_defect(se, 0.0, 32, {2.0}, 200, 5, 1, true);
  std::size_t skipped = 0;
  for (const auto& r : e.runs) {
    if (r.skipped) {
      ++skipped;
      EXPECT_TRUE(r.Q.empty());
      EXPECT_EQ(r.omega0, 1);
    } else {
      EXPECT_EQ(r.Q.size(), 1u);
    }
  }
  EXPECT_GT(skipped, 60u);
  EXPECT_LT(skipped, 140u);
  const auto f = simulate_defect(se, 0.0, 32, {2.0}, 50, 5, 1, false);
  for (const auto& r : f.runs) EXPECT_FALSE(r.skipped);
}

TEST(Cor32, KernelTotalIsVariance) {
  const auto se = ModelSpec::simple_exclusion();
  const auto p = simulate_plain(se, 0.0, 32, {1.0}, {0.0}, {0, 1}, 50, 1, 1);
  const auto d = simulate_defect(se, 0.0, 32, {1.0}, 50, 1, 1, true);
  const auto rows = corollary32_rows(se, 0.0, 32, p, d);
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0].check, "cor32_kernel_total");
  EXPECT_NEAR(rows[0].estimate, 0.25, 1e-12);
  EXPECT_TRUE(rows[0].pass);
}

TEST(Dispatch, EveryCheckRunsOnTinyConfig) {
  for (const auto& name : check_names()) {
    auto cfg = tiny(name == "sspeed" || name == "sandwich" ? "BL" : "SE");
    if (name == "sspeed") {
      cfg.theta1 = 0.0;
      cfg.theta2 = 0.5;
    }
    if (name == "soak") cfg.replicas = 2000;
    std::vector<ReportRow> rows;
    ASSERT_NO_THROW(rows = run_check(name, cfg)) << name;
    EXPECT_FALSE(rows.empty()) << name;
  }
  EXPECT_THROW(run_check("nope", tiny()), ConfigError);
}

TEST(Dispatch, SspeedNeedsOrderedThetas) {
  auto cfg = tiny("BL");
  EXPECT_THROW(run_check("sspeed", cfg), ConfigError);
  cfg.theta1 = 0.5;
  cfg.theta2 = 0.1;
  EXPECT_THROW(run_check("sspeed", cfg), ConfigError);
}

TEST(Soak, ShortSoakIsClean) {
  for (const auto& spec : {ModelSpec::simple_exclusion(), ModelSpec::particle_antiparticle(0.3, 1.0)}) {
    const auto s = coupling_soak(spec, -0.4, 0.4, 32, 20000, 1);
    EXPECT_EQ(s.events, 20000u);
    EXPECT_EQ(s.order_violations, 0u);
    EXPECT_EQ(s.conservation_violations, 0u);
  }
}

TEST(Streams, DistinctPerKind) {
  EXPECT_NE(stream_seed(1, Stream::Plain), stream_seed(1, Stream::Defect));
  EXPECT_NE(stream_seed(1, Stream::Plain), stream_seed(2, Stream::Plain));
}
