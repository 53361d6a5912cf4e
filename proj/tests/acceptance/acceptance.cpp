// One PASS/FAIL line per acceptance criterion. Targets are computed here from closed forms
// rather than read back from the library wherever a closed form exists.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "deposim/deposim.hpp"

using namespace deposim;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, double seconds) {
  std::printf("criterion %2d: %s  %s  [%.1fs]\n", id, pass ? "PASS" : "FAIL", what.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

double logit(double rho) { return std::log(rho / (1 - rho)); }

template <class Fn>
void timed(int id, Fn&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  std::string what;
  try {
    std::tie(pass, what) = body();
  } catch (const std::exception& e) {
    what = std::string("exception: ") + e.what();
  }
  report(id, pass, what, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::vector<double> grid21() {
  std::vector<double> g;
  for (int k = 0; k <= 20; ++k) g.push_back(-1.0 + 0.1 * k);
  return g;
}

ModelSpec bl() { return ModelSpec::bricklayers(GrowthFunction::exponential(0.5)); }
ModelSpec zr() { return ModelSpec::zero_range(GrowthFunction::zr_linear()); }
ModelSpec pa() { return ModelSpec::particle_antiparticle(0.3, 1.0); }

}  // namespace

int main() {
  const unsigned threads = resolve_threads(0);
  std::printf("acceptance run, %u worker thread(s)\n", threads);

  // Criteria 1, 2 and 4 share one SE ensemble.
  const double rho = 0.3, th = logit(rho);
  const auto se = ModelSpec::simple_exclusion();
  PlainEnsemble plain;
  double plain_seconds = 0;
  {
    const auto t0 = std::chrono::steady_clock::now();
    plain = simulate_plain(se, th, 512, {100.0, 200.0}, {0.0, 0.4}, {}, 5000, 13, threads);
    plain_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  timed(1, [&] {
    const double target = rho * (1 - rho) * std::abs(1 - 2 * rho);
    const double v100 = variance_rate_estimate(plain.currents(0, 0), 100.0).first;
    const auto [v200, se200] = variance_rate_estimate(plain.currents(1, 0), 200.0);
    const double rel = std::abs(v200 - target) / target;
    const bool trend = std::abs(v200 - target) < std::abs(v100 - target);
    return std::pair{rel < 0.12 && trend,
                     fmt("SE Var(J0)/t: t=100 %.4f, t=200 %.4f (se %.4f), target %.4f, rel err %.3f < 0.12, "
                         "closer at t=200: %s (ensemble %.1fs)",
                         v100, v200, se200, target, rel, trend ? "yes" : "no", plain_seconds)};
  });

  timed(2, [&] {
    const double v0 = variance_rate_estimate(plain.currents(1, 0), 200.0).first;
    const double v4 = variance_rate_estimate(plain.currents(1, 1), 200.0).first;
    const double v4_100 = variance_rate_estimate(plain.currents(0, 1), 100.0).first;
    const double ratio = v4 / v0;
    return std::pair{ratio < 0.25, fmt("SE Var(J^0.4)/t at t=200 %.4f (t=100 %.4f) vs V=0 %.4f: ratio %.3f < 0.25",
                                       v4, v4_100, v0, ratio)};
  });

  timed(3, [&] {
    struct Case {
      const char* name;
      ModelSpec spec;
      double theta, t, target, tol;
      std::size_t L;
    };
    const std::vector<Case> cases{{"SE rho=0.3", se, th, 200.0, 1 - 2 * rho, 0.03, 1152},
                                  {"BL theta=0", bl(), 0.0, 100.0, 0.0, 0.05, 400},
                                  {"ZR theta=0", zr(), 0.0, 100.0, 1.0, 0.05, 800}};
    bool ok = true;
    std::string what;
    for (const auto& c : cases) {
      const auto e = simulate_defect(c.spec, c.theta, c.L, {c.t}, 2000, 3, threads);
      RunningStats q;
      for (const auto& r : e.runs) q.push(static_cast<double>(r.Q[0]) / c.t);
      const bool pass = std::abs(q.mean() - c.target) <= c.tol;
      ok = ok && pass;
      what += fmt("%s: Q/t=%.4f (se %.4f, t=%g, L=%zu) target %.2f+-%.2f %s; ", c.name, q.mean(), q.stderr_mean(), c.t,
                  c.L, c.target, c.tol, pass ? "ok" : "off");
    }
    return std::pair{ok, what};
  });

  timed(4, [&] {
    const auto c = clt_statistic(se, th, plain.currents(1, 0), 0.0, 200.0);
    return std::pair{!c.skipped && c.ks_lattice < 0.05,
                     fmt("SE V=0 t=200 KS (continuity corrected) %.4f < 0.05; uncorrected %.4f", c.ks_lattice,
                         c.ks_raw)};
  });

  timed(5, [&] {
    double worst = 0;
    for (const auto& spec : {se, zr(), bl()})
      for (double t : grid21())
        worst = std::max(worst, std::abs(characteristic_speed_static(spec, build_marginal(spec, t)) -
                                         characteristic_speed_closed(spec, t)));
    // closed forms themselves, written out here
    double worst_closed = 0;
    for (double t : grid21()) {
      const double r = 1 / (1 + std::exp(-t));
      worst_closed = std::max(worst_closed, std::abs(characteristic_speed_closed(se, t) - (1 - 2 * r)));
      worst_closed = std::max(worst_closed, std::abs(characteristic_speed_closed(zr(), t) - 1.0));
    }
    return std::pair{worst < 1e-9 && worst_closed < 1e-9,
                     fmt("max |C_static - C_closed| over SE, ZR, BL 21-point grids %.2e < 1e-9 "
                         "(SE/ZR closed forms vs 1-2rho and 1: %.2e)",
                         worst, worst_closed)};
  });

  timed(6, [&] {
    const double r_se = oracle::stationarity_residual(se, th, 6);
    const double r_pa = oracle::stationarity_residual(pa(), 0.0, 6);
    const auto a_se = oracle::adjoint_check(se, th, 6, 100, 61);
    const auto a_pa = oracle::adjoint_check(pa(), 0.0, 6, 100, 62);
    const double adj = std::max(a_se.max_discrepancy, a_pa.max_discrepancy);
    const bool pass = r_se < 1e-10 && r_pa < 1e-10 && adj < 1e-9 && a_se.min_dirichlet >= 0 && a_pa.min_dirichlet >= 0;
    return std::pair{pass, fmt("stationarity residual SE %.2e, PA %.2e < 1e-10; adjoint max discrepancy %.2e < 1e-9 "
                               "over 2x100 pairs; min Dirichlet form %.3g",
                               r_se, r_pa, adj, std::min(a_se.min_dirichlet, a_pa.min_dirichlet))};
  });

  timed(7, [&] {
    const auto tv = oracle::simulator_smalltime_check(se, {1, 0, 1, 1, 0, 0}, 0.01, 1000000, 71);
    const auto e = simulate_plain(se, th, 6, {0.5, 1.0}, {0.0}, {0, 1}, 200000, 72, threads);
    bool ok = tv.tv < 5e-3;
    std::string what = fmt("small-time TV %.2e < 5e-3; ", tv.tv);
    for (std::size_t ti = 0; ti < 2; ++ti)
      for (std::size_t ni = 0; ni < 2; ++ni) {
        const auto s = summarize(e.correlations(ti, ni));
        const double exact = oracle::exact_correlation(se, th, 6, e.ns[ni], e.times[ti]);
        const double z = (s.mean() - exact) / s.stderr_mean();
        ok = ok && std::abs(z) < 3;
        what += fmt("(n=%d,t=%g) MC %.5f exact %.5f z=%.2f; ", e.ns[ni], e.times[ti], s.mean(), exact, z);
      }
    return std::pair{ok, what};
  });

  timed(8, [&] {
    const double th8 = 0.0;  // rho = 1/2
    const auto p = simulate_plain(se, th8, 64, {4.0}, {0.0}, {-2, -1, 0, 1, 2}, 50000, 81, threads);
    const auto d = simulate_defect(se, th8, 64, {4.0}, 50000, 82, threads, true);
    const auto rows = corollary32_rows(se, th8, 64, p, d);
    bool ok = true;
    double worst = 0;
    std::string what;
    for (const auto& r : rows) {
      if (r.check == "cor32_kernel_total") {
        const bool k = std::abs(r.estimate - 0.25) < 1e-9;
        ok = ok && k;
        what += fmt("kernel total %.12f vs Var = 0.25; ", r.estimate);
      } else if (r.check == "cor32") {
        worst = std::max(worst, std::abs(r.zscore()));
        ok = ok && std::abs(r.zscore()) < 3;
        what += fmt("n=%d z=%.2f ", r.params["n"].get<int>(), r.zscore());
      }
    }
    what += fmt("; max |z| %.2f < 3", worst);
    return std::pair{ok, what};
  });

  timed(9, [&] {
    bool ok = true;
    std::string what;
    const std::vector<std::pair<const char*, ModelSpec>> fams{{"SE", se}, {"PA", pa()}, {"ZR", zr()}, {"BL", bl()}};
    for (const auto& [name, spec] : fams) {
      SoakTally s;
      bool negative = false;
      try {
        s = coupling_soak(spec, -0.5, 0.5, 64, 1000000, 91);
      } catch (const NegativeChannelRate&) {
        negative = true;
      }
      const bool pass = !negative && s.events == 1000000 && s.order_violations == 0 && s.conservation_violations == 0;
      ok = ok && pass;
      what += fmt("%s soak %llu events, %llu order / %llu conservation violations%s; ", name,
                  static_cast<unsigned long long>(s.events), static_cast<unsigned long long>(s.order_violations),
                  static_cast<unsigned long long>(s.conservation_violations), negative ? ", NEGATIVE CHANNEL" : "");
    }
    for (const auto& [name, spec] : std::vector<std::pair<const char*, ModelSpec>>{{"BL", bl()}, {"ZR", zr()}}) {
      const auto rows = sandwich_rows(spec, {-0.5, 0.0, 0.5}, 128, 20.0, 1000, 92, threads);
      const auto order = tracer_order_row(spec, -0.5, 0.5, 128, 20.0, 200, 93, threads);
      const double viol = rows[0].estimate, neg = rows[1].estimate;
      const bool pass = viol == 0 && neg == 0 && order.estimate == 0;
      ok = ok && pass;
      what += fmt("%s sandwich 1000 runs (%s events, %s coincidences): %g order violations, %g negative table rows, "
                  "%g tracer-order violations; ",
                  name, rows[0].params["events"].dump().c_str(), rows[0].params["coincidences"].dump().c_str(), viol,
                  neg, order.estimate);
    }
    return std::pair{ok, what};
  });

  timed(10, [&] {
    // Er = 2 cosh theta for the exponential bricklayers, and rho(0) = 0, rho(1/2) = 1.
    const double j_target = 2 * (std::cosh(0.5) - 1.0);
    const double s_target = j_target / (1.0 - 0.0);
    const double t = 100.0;
    const auto runs = simulate_swarm(bl(), 0.0, 0.5, 512, {t}, 500, 101, threads);
    RunningStats s, j;
    for (const auto& r : runs) {
      s.push(static_cast<double>(r.S[0]) / t);
      j.push(static_cast<double>(r.J2[0]) / t);
    }
    const double zs = (s.mean() - s_target) / s.stderr_mean(), zj = (j.mean() - j_target) / j.stderr_mean();
    return std::pair{std::abs(zs) < 3 && std::abs(zj) < 3,
                     fmt("BL swarm t=%g: J2/t %.4f (se %.4f) vs %.4f z=%.2f; S/t %.4f (se %.4f) vs %.4f z=%.2f", t,
                         j.mean(), j.stderr_mean(), j_target, zj, s.mean(), s.stderr_mean(), s_target, zs)};
  });

  timed(11, [&] {
    double bl_min = INFINITY, zr_max = 0;
    for (double t : grid21()) {
      bl_min = std::min(bl_min, convexity_certificate(bl(), t));
      zr_max = std::max(zr_max, std::abs(convexity_certificate(zr(), t)));
    }
    return std::pair{bl_min > 0 && zr_max < 1e-10,
                     fmt("BL certificate min %.4f > 0 on [-1,1]; ZR |certificate| max %.2e < 1e-10", bl_min, zr_max)};
  });

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
