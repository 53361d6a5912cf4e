#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bricklayer.hpp"
#include "coupling.hpp"
#include "dynamics.hpp"
#include "equilibrium.hpp"
#include "experiment.hpp"
#include "models.hpp"
#include "oracle.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace deposim {

// Independent random streams for the different simulation kinds of one config.
enum class Stream : std::uint64_t { Plain = 1, Defect = 2, Swarm = 3, Sandwich = 4, Soak = 5, Tracers = 6 };

inline std::uint64_t stream_seed(std::uint64_t master, Stream s) {
  return mix64(master ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(s)));
}

// ---------------------------------------------------------------------------
// Plain equilibrium runs: currents J^(V)(t) and translation-averaged correlations

struct PlainReplica {
  std::vector<std::int64_t> J;  // [ti * nV + vi]
  std::vector<double> corr;     // [ti * nN + ni]
};

struct PlainEnsemble {
  std::vector<double> times, V;
  std::vector<int> ns;
  std::vector<PlainReplica> runs;

  std::size_t replicas() const { return runs.size(); }
  std::size_t v_index(double v) const {
    for (std::size_t k = 0; k < V.size(); ++k)
      if (V[k] == v) return k;
    throw std::out_of_range("speed not simulated");
  }
  std::size_t n_index(int n) const {
    for (std::size_t k = 0; k < ns.size(); ++k)
      if (ns[k] == n) return k;
    throw std::out_of_range("offset not simulated");
  }
  std::vector<double> currents(std::size_t ti, std::size_t vi) const {
    std::vector<double> x(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) x[r] = static_cast<double>(runs[r].J[ti * V.size() + vi]);
    return x;
  }
  std::vector<double> correlations(std::size_t ti, std::size_t ni) const {
    std::vector<double> x(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) x[r] = runs[r].corr[ti * ns.size() + ni];
    return x;
  }
};

// (1/L) sum_i (w0_i - rho)(w_{i+n} - rho)
inline double ring_correlation(const std::vector<int>& w0, const std::vector<int>& w, double rho, int n) {
  const auto L = static_cast<std::int64_t>(w.size());
  double s = 0;
  for (std::int64_t i = 0; i < L; ++i)
    s += (w0[static_cast<std::size_t>(i)] - rho) * (w[static_cast<std::size_t>(floor_mod(i + n, L))] - rho);
  return s / static_cast<double>(L);
}

inline PlainEnsemble simulate_plain(const ModelSpec& spec, double theta, std::size_t L, std::vector<double> times,
                                    std::vector<double> Vs, std::vector<int> ns, std::size_t replicas,
                                    std::uint64_t seed, unsigned threads = 0) {
  const Marginal m = build_marginal(spec, theta);
  const double rho = m.mean();
  PlainEnsemble e{std::move(times), std::move(Vs), std::move(ns), {}};
  for (double v : e.V)
    for (double t : e.times)
      if (!(std::abs(v) * t < 0.5 * static_cast<double>(L))) throw WindowWrap("window guard |V| t < L/2 violated");
  const double t_end = e.times.empty() ? 0.0 : e.times.back();
  const std::uint64_t master = stream_seed(seed, Stream::Plain);
  e.runs = run_replicas(replicas, resolve_threads(threads), [&](std::size_t r) {
    Rng rng = make_rng(master, r);
    RingState s = init_ring(spec, m, L, rng);
    PlainReplica out;
    out.J.reserve(e.times.size() * e.V.size());
    out.corr.reserve(e.times.size() * e.ns.size());
    run_until(s, t_end, e.times, [&](double t) {
      for (double v : e.V) out.J.push_back(current(s, v, t));
      for (int n : e.ns) out.corr.push_back(ring_correlation(s.initial(), s.omega(), rho, n));
    }, rng);
    return out;
  });
  return e;
}

// ---------------------------------------------------------------------------
// Defect-coupled runs: omega and omega + delta_0, tracer Q

struct DefectReplica {
  std::vector<std::int64_t> Q;  // per time; empty when skipped
  int omega0 = 0;
  bool skipped = false;    // omega_0 at the top of the support, no defect possible
  bool resampled = false;  // site 0 redrawn below the top
};

struct DefectEnsemble {
  std::vector<double> times;
  std::vector<DefectReplica> runs;
  std::size_t replicas() const { return runs.size(); }
};

// With skip_top, replicas whose omega_0 sits at the top of the support are kept unsimulated
// (their contribution to the correlation identity is zero); otherwise site 0 is redrawn
// below the top.
inline DefectEnsemble simulate_defect(const ModelSpec& spec, double theta, std::size_t L, std::vector<double> times,
                                      std::size_t replicas, std::uint64_t seed, unsigned threads = 0,
                                      bool skip_top = false) {
  const Marginal m = build_marginal(spec, theta);
  DefectEnsemble e{std::move(times), {}};
  const double t_end = e.times.empty() ? 0.0 : e.times.back();
  const auto& top = spec.support().omega_max;
  const std::uint64_t master = stream_seed(seed, Stream::Defect);
  e.runs = run_replicas(replicas, resolve_threads(threads), [&](std::size_t r) {
    Rng rng = make_rng(master, r);
    std::vector<int> omega = sample_configuration(m, L, rng);
    DefectReplica out;
    out.omega0 = omega[0];
    if (skip_top && top && omega[0] >= *top) {
      out.skipped = true;
      return out;
    }
    DefectStart d = attach_defect(spec, m, std::move(omega), rng);
    out.resampled = d.resampled;
    out.omega0 = d.state.lower()[0];
    run_until(d.state, t_end, e.times, [&](double) { out.Q.push_back(*d.state.tracer()); }, rng);
    return out;
  });
  return e;
}

// ---------------------------------------------------------------------------
// Two-density swarm runs

struct SwarmReplica {
  std::vector<std::int64_t> S, J2;  // walker position and second-class current through column 0
};

inline std::vector<SwarmReplica> simulate_swarm(const ModelSpec& spec, double theta1, double theta2, std::size_t L,
                                                const std::vector<double>& times, std::size_t replicas,
                                                std::uint64_t seed, unsigned threads = 0) {
  const Marginal m1 = build_marginal(spec, theta1), m2 = build_marginal(spec, theta2);
  const double t_end = times.empty() ? 0.0 : times.back();
  const std::uint64_t master = stream_seed(seed, Stream::Swarm);
  return run_replicas(replicas, resolve_threads(threads), [&](std::size_t r) {
    Rng rng = make_rng(master, r);
    BricklayerSystem sys = swarm_init(spec, m1, m2, L, rng);
    SwarmReplica out;
    run_until(sys, t_end, times, [&](double) {
      out.S.push_back(sys.walker(0).position);
      out.J2.push_back(sys.second_class_current(sys.walker(0), 0));
    }, rng);
    return out;
  });
}

// ---------------------------------------------------------------------------
// Row helpers

inline json base_params(const ModelSpec& spec, double theta, std::size_t L, std::size_t replicas) {
  return json{{"family", spec.name()}, {"theta", theta}, {"L", L}, {"replicas", replicas}};
}

inline double mean_of(std::span<const double> x) { return summarize(x).mean(); }

// Mean and standard error of x / t.
inline std::pair<double, double> scaled_mean(const std::vector<double>& x, double t) {
  const RunningStats s = summarize(x);
  return {s.mean() / t, s.stderr_mean() / t};
}

// ---------------------------------------------------------------------------
// Checks on plain runs

// lim J^(V)(t)/t = E r - V rho
inline std::vector<ReportRow> lln_rows(const ModelSpec& spec, double theta, std::size_t L, const PlainEnsemble& e) {
  const MomentTable mt = moments(build_marginal(spec, theta), spec);
  std::vector<ReportRow> rows;
  for (std::size_t ti = 0; ti < e.times.size(); ++ti) {
    const double t = e.times[ti];
    if (t <= 0) continue;
    for (std::size_t vi = 0; vi < e.V.size(); ++vi) {
      auto [mean, se] = scaled_mean(e.currents(ti, vi), t);
      json p = base_params(spec, theta, L, e.replicas());
      p["t"] = t;
      p["V"] = e.V[vi];
      rows.push_back(stat_row("lln", p, mean, se, mt.Er - e.V[vi] * mt.rho));
    }
  }
  return rows;
}

inline double variance_target(const ModelSpec& spec, double theta, double V) {
  const double var = moments(build_marginal(spec, theta), spec).var;
  return std::abs(V - characteristic_speed(spec, theta)) * var;
}

// Var(J^(V)(t))/t with a grouped-jackknife standard error.
inline std::pair<double, double> variance_rate_estimate(const std::vector<double>& x, double t) {
  const double v = summarize(x).variance() / t;
  const double se = jackknife_se(x.size(), [&](std::size_t a, std::size_t b) { return variance_excluding(x, a, b) / t; });
  return {v, se};
}

inline std::vector<ReportRow> variance_rows(const ModelSpec& spec, double theta, std::size_t L,
                                            const PlainEnsemble& e) {
  std::vector<ReportRow> rows;
  for (std::size_t ti = 0; ti < e.times.size(); ++ti) {
    const double t = e.times[ti];
    if (t <= 0) continue;
    for (std::size_t vi = 0; vi < e.V.size(); ++vi) {
      auto [v, se] = variance_rate_estimate(e.currents(ti, vi), t);
      json p = base_params(spec, theta, L, e.replicas());
      p["t"] = t;
      p["V"] = e.V[vi];
      rows.push_back(stat_row("variance", p, v, se, variance_target(spec, theta, e.V[vi])));
    }
  }
  return rows;
}

struct CltResult {
  double ks_lattice = 0;  // continuity-corrected, gates the check
  double ks_raw = 0;      // plain KS of the standardised sample
  bool skipped = false;
  std::string reason;
};

// Standardises by the sample mean and sqrt(D_J t), D_J = |V - C| var.
inline CltResult clt_statistic(const ModelSpec& spec, double theta, const std::vector<double>& J, double V, double t) {
  CltResult out;
  const double D = variance_target(spec, theta, V);
  if (t <= 0) {
    out.skipped = true;
    out.reason = "t = 0";
    return out;
  }
  if (!(D > 1e-12)) {
    out.skipped = true;
    out.reason = "D_J = 0";
    return out;
  }
  const double centre = summarize(J).mean(), scale = std::sqrt(D * t);
  std::vector<std::int64_t> k(J.size());
  std::vector<double> z(J.size());
  for (std::size_t i = 0; i < J.size(); ++i) {
    k[i] = static_cast<std::int64_t>(std::llround(J[i]));
    z[i] = (J[i] - centre) / scale;
  }
  out.ks_lattice = ks_normal_lattice(k, centre, scale);
  out.ks_raw = ks_normal(std::move(z));
  return out;
}

inline std::vector<ReportRow> clt_rows(const ModelSpec& spec, double theta, std::size_t L, const PlainEnsemble& e,
                                       double limit = 0.05) {
  std::vector<ReportRow> rows;
  for (std::size_t ti = 0; ti < e.times.size(); ++ti)
    for (std::size_t vi = 0; vi < e.V.size(); ++vi) {
      const auto c = clt_statistic(spec, theta, e.currents(ti, vi), e.V[vi], e.times[ti]);
      json p = base_params(spec, theta, L, e.replicas());
      p["t"] = e.times[ti];
      p["V"] = e.V[vi];
      if (c.skipped) {
        p["skipped"] = c.reason;
        ReportRow r{"clt", p, std::nan(""), 0.0, limit, true, false};
        r.has_z = false;
        rows.push_back(r);
        continue;
      }
      p["ks_raw"] = c.ks_raw;
      rows.push_back(threshold_row("clt", p, c.ks_lattice, limit));
    }
  return rows;
}

inline std::vector<ReportRow> correlation_rows(const ModelSpec& spec, double theta, std::size_t L,
                                               const PlainEnsemble& e, bool oracle_target, int cap = 8) {
  const double var = moments(build_marginal(spec, theta), spec).var;
  std::vector<ReportRow> rows;
  for (std::size_t ti = 0; ti < e.times.size(); ++ti)
    for (std::size_t ni = 0; ni < e.ns.size(); ++ni) {
      const double t = e.times[ti];
      const int n = e.ns[ni];
      const auto s = summarize(e.correlations(ti, ni));
      double target = std::nan("");
      if (t == 0) target = floor_mod(n, static_cast<std::int64_t>(L)) == 0 ? var : 0.0;
      else if (oracle_target) target = oracle::exact_correlation(spec, theta, L, n, t, cap);
      json p = base_params(spec, theta, L, e.replicas());
      p["t"] = t;
      p["n"] = n;
      rows.push_back(stat_row("corr", p, s.mean(), s.stderr_mean(), target));
    }
  return rows;
}

// Both lines of the variance decomposition, truncated at |n| <= n_max, for one replica
// subset given by the correlation means.
struct DecompositionLines {
  double line1 = 0, line2 = 0;
};

inline DecompositionLines decomposition_lines(const MomentTable& mt, double t, const std::function<double(int)>& corr,
                                              int n_max) {
  DecompositionLines d;
  d.line1 = t * mt.Er - 2 * t * mt.Erstar_w1;
  d.line2 = t * mt.Er + 2 * t * mt.Erstar_w0;
  for (int n = 1; n <= n_max; ++n) {
    d.line1 += 2.0 * n * corr(n);
    d.line2 += 2.0 * n * corr(-n);
  }
  return d;
}

// Offsets needed by the decomposition check with its truncation-stability probe.
inline std::vector<int> decomposition_offsets(int n_max) {
  std::vector<int> ns;
  for (int n = -(n_max + 8); n <= n_max + 8; ++n) ns.push_back(n);
  return ns;
}

inline std::vector<ReportRow> decomposition_rows(const ModelSpec& spec, double theta, std::size_t L,
                                                 const PlainEnsemble& e, int n_max) {
  if (2 * (n_max + 8) >= static_cast<int>(L)) throw ConfigError("n_max + 8 must stay below L/2");
  const MomentTable mt = moments(build_marginal(spec, theta), spec);
  const std::size_t v0 = e.v_index(0.0);
  std::vector<ReportRow> rows;
  for (std::size_t ti = 0; ti < e.times.size(); ++ti) {
    const double t = e.times[ti];
    json p = base_params(spec, theta, L, e.replicas());
    p["t"] = t;
    p["n_max"] = n_max;
    if (t == 0) {
      // no correlations enter at t = 0 beyond n = 0, and Var(J(0)) = 0
      rows.push_back(exact_row("decomp_line1", p, 0.0, 0.0, 0.0));
      rows.push_back(exact_row("decomp_line2", p, 0.0, 0.0, 0.0));
      continue;
    }
    const auto J = e.currents(ti, v0);
    std::map<int, std::vector<double>> cols;
    for (std::size_t ni = 0; ni < e.ns.size(); ++ni) cols[e.ns[ni]] = e.correlations(ti, ni);
    auto lines_excluding = [&](std::size_t a, std::size_t b, int nm) {
      auto corr = [&](int n) {
        RunningStats s;
        const auto& c = cols.at(n);
        for (std::size_t i = 0; i < c.size(); ++i)
          if (i < a || i >= b) s.push(c[i]);
        return s.mean();
      };
      return decomposition_lines(mt, t, corr, nm);
    };
    const std::size_t R = J.size();
    const double direct = summarize(J).variance();
    const auto full = lines_excluding(R, R, n_max);
    const auto wide = lines_excluding(R, R, n_max + 8);
    const double se1 = jackknife_se(R, [&](std::size_t a, std::size_t b) {
      return lines_excluding(a, b, n_max).line1 - variance_excluding(J, a, b);
    });
    const double se2 = jackknife_se(R, [&](std::size_t a, std::size_t b) {
      return lines_excluding(a, b, n_max).line2 - variance_excluding(J, a, b);
    });
    json p1 = p, p2 = p;
    p1["truncation_delta"] = wide.line1 - full.line1;
    p2["truncation_delta"] = wide.line2 - full.line2;
    p1["truncation_stable"] = std::abs(wide.line1 - full.line1) < 1.96 * se1;
    p2["truncation_stable"] = std::abs(wide.line2 - full.line2) < 1.96 * se2;
    rows.push_back(stat_row("decomp_line1", p1, full.line1, se1, direct));
    rows.push_back(stat_row("decomp_line2", p2, full.line2, se2, direct));
  }
  return rows;
}

// Correction to Var(J^(V))/t relative to V = 0, read literally from the two one-sided forms.
inline double slanted_correction(double V, double C, double var) {
  const double Cp = std::max(C, 0.0), Cm = std::max(-C, 0.0);
  if (V > 0) return (2 * std::max(V - Cp, 0.0) - V) * var;
  if (V < 0) return (2 * std::max(-(V + Cm), 0.0) + V) * var;
  return 0.0;
}

inline std::vector<ReportRow> slanted_rows(const ModelSpec& spec, double theta, std::size_t L, const PlainEnsemble& e) {
  const double var = moments(build_marginal(spec, theta), spec).var;
  const double C = characteristic_speed(spec, theta);
  const std::size_t v0 = e.v_index(0.0);
  std::vector<ReportRow> rows;
  for (std::size_t ti = 0; ti < e.times.size(); ++ti) {
    const double t = e.times[ti];
    if (t <= 0) continue;
    const auto J0 = e.currents(ti, v0);
    for (std::size_t vi = 0; vi < e.V.size(); ++vi) {
      if (vi == v0) continue;
      const auto JV = e.currents(ti, vi);
      const double est = (summarize(JV).variance() - summarize(J0).variance()) / t;
      const double se = jackknife_se(JV.size(), [&](std::size_t a, std::size_t b) {
        return (variance_excluding(JV, a, b) - variance_excluding(J0, a, b)) / t;
      });
      json p = base_params(spec, theta, L, e.replicas());
      p["t"] = t;
      p["V"] = e.V[vi];
      p["C"] = C;
      rows.push_back(stat_row("slant", p, est, se, slanted_correction(e.V[vi], C, var)));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checks on defect runs

inline std::vector<ReportRow> qspeed_rows(const ModelSpec& spec, double theta, std::size_t L, const DefectEnsemble& e) {
  const double C = characteristic_speed(spec, theta);
  std::vector<ReportRow> rows;
  for (std::size_t ti = 0; ti < e.times.size(); ++ti) {
    const double t = e.times[ti];
    if (t <= 0) continue;
    std::vector<RunningStats> mom(4);
    for (const auto& r : e.runs) {
      if (r.skipped) continue;
      const double q = static_cast<double>(r.Q[ti]) / t;
      double x = 1;
      for (auto& s : mom) s.push(x *= q);
    }
    json p = base_params(spec, theta, L, e.replicas());
    p["t"] = t;
    rows.push_back(stat_row("qspeed", p, mom[0].mean(), mom[0].stderr_mean(), C));
    for (int k = 2; k <= 4; ++k) {
      json pk = p;
      pk["moment"] = k;
      rows.push_back(stat_row("qspeed_moment", pk, mom[k - 1].mean(), mom[k - 1].stderr_mean(), std::nan("")));
    }
  }
  return rows;
}

// E(w~_0(0) w~_n(t)) against E(1{Q(t) = n} kernel(w_0(0))) on independent runs.
inline std::vector<ReportRow> corollary32_rows(const ModelSpec& spec, double theta, std::size_t L,
                                               const PlainEnsemble& plain, const DefectEnsemble& defect) {
  const Marginal m = build_marginal(spec, theta);
  const MomentTable mt = moments(m, spec);
  std::vector<ReportRow> rows;

  double total = 0;
  for (int z = m.z_lo; z <= m.z_hi; ++z) total += m.pmf(z) * correlation_kernel(m, mt.rho, z);
  rows.push_back(exact_row("cor32_kernel_total", base_params(spec, theta, L, 0), total, mt.var, 1e-9));

  const std::size_t R = defect.replicas();
  std::vector<double> kern(R);
  for (std::size_t r = 0; r < R; ++r) kern[r] = correlation_kernel(m, mt.rho, defect.runs[r].omega0);
  {
    const auto s = summarize(kern);
    rows.push_back(stat_row("cor32_rhs_total", base_params(spec, theta, L, R), s.mean(), s.stderr_mean(), mt.var));
  }

  for (std::size_t ti = 0; ti < defect.times.size(); ++ti) {
    const double t = defect.times[ti];
    const auto pti = std::find(plain.times.begin(), plain.times.end(), t);
    if (pti == plain.times.end()) continue;
    const std::size_t pt = static_cast<std::size_t>(pti - plain.times.begin());
    for (std::size_t ni = 0; ni < plain.ns.size(); ++ni) {
      const int n = plain.ns[ni];
      const auto lhs = summarize(plain.correlations(pt, ni));
      RunningStats rhs, hit;
      for (std::size_t r = 0; r < R; ++r) {
        const auto& d = defect.runs[r];
        const bool at = !d.skipped && d.Q[ti] == n;
        rhs.push(at ? kern[r] : 0.0);
        hit.push(at ? 1.0 : 0.0);
      }
      const double se = std::sqrt(lhs.stderr_mean() * lhs.stderr_mean() + rhs.stderr_mean() * rhs.stderr_mean());
      json p = base_params(spec, theta, L, R);
      p["t"] = t;
      p["n"] = n;
      p["lhs"] = lhs.mean();
      p["lhs_se"] = lhs.stderr_mean();
      p["rhs_se"] = rhs.stderr_mean();
      p["p_hit"] = hit.mean();
      p["insufficient"] = hit.mean() < 10.0 / static_cast<double>(R);
      rows.push_back(stat_row("cor32", p, rhs.mean(), se, lhs.mean()));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Second-class swarm

inline double swarm_speed_target(const ModelSpec& spec, double theta1, double theta2) {
  const auto a = moments(build_marginal(spec, theta1), spec), b = moments(build_marginal(spec, theta2), spec);
  return (b.Er - a.Er) / (b.rho - a.rho);
}

inline double swarm_current_target(const ModelSpec& spec, double theta1, double theta2) {
  return moments(build_marginal(spec, theta2), spec).Er - moments(build_marginal(spec, theta1), spec).Er;
}

inline std::vector<ReportRow> sspeed_rows(const ModelSpec& spec, double theta1, double theta2, std::size_t L,
                                          const std::vector<double>& times, const std::vector<SwarmReplica>& runs) {
  std::vector<ReportRow> rows;
  const double c = swarm_speed_target(spec, theta1, theta2);
  const double j = swarm_current_target(spec, theta1, theta2);
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const double t = times[ti];
    if (t <= 0) continue;
    std::vector<RunningStats> mom(4);
    RunningStats cur;
    for (const auto& r : runs) {
      const double s = static_cast<double>(r.S[ti]) / t;
      double x = 1;
      for (auto& m : mom) m.push(x *= s);
      cur.push(static_cast<double>(r.J2[ti]) / t);
    }
    json p{{"family", spec.name()}, {"theta1", theta1}, {"theta2", theta2}, {"L", L}, {"replicas", runs.size()}, {"t", t}};
    rows.push_back(stat_row("sspeed", p, mom[0].mean(), mom[0].stderr_mean(), c));
    rows.push_back(stat_row("sspeed_current", p, cur.mean(), cur.stderr_mean(), j));
    for (int k = 2; k <= 4; ++k) {
      json pk = p;
      pk["moment"] = k;
      rows.push_back(stat_row("sspeed_moment", pk, mom[k - 1].mean(), mom[k - 1].stderr_mean(), std::nan("")));
    }
  }
  return rows;
}

// c(theta - h, theta + h) against C(theta) on a grid.
inline ReportRow sspeed_limit_row(const ModelSpec& spec, double lo, double hi, double h = 5e-3, double tol = 1e-2) {
  double worst = 0;
  std::size_t points = 0;
  for (double th = lo; th <= hi + 1e-12; th += 2 * h, ++points)
    worst = std::max(worst, std::abs(swarm_speed_target(spec, th - h, th + h) - characteristic_speed(spec, th)));
  json p{{"family", spec.name()}, {"theta_lo", lo}, {"theta_hi", hi}, {"spacing", 2 * h}, {"points", points}};
  return exact_row("sspeed_limit", p, worst, 0.0, tol);
}

// ---------------------------------------------------------------------------
// Pathwise audits

struct SandwichTally {
  std::uint64_t events = 0, violations = 0, negative_rows = 0, coincidences = 0;
  double Q = 0, S = 0, Sp = 0;  // positions at t
};

// Fires events of any system up to t, calling after() after each one.
template <class System, class After>
void run_events(System& sys, double t, Rng& rng, After&& after) {
  for (;;) {
    const double R = sys.total_rate();
    if (!(R > 0)) break;
    const double tn = sys.now() + exponential(rng, R);
    if (tn > t) break;
    sys.set_time(tn);
    sys.fire(rng);
    after();
  }
  sys.set_time(t);
}

// S' <= Q <= S checked after every event of one joint sandwich run.
inline SandwichTally sandwich_run(const ModelSpec& spec, double theta1, double theta, double theta2, std::size_t L,
                                  double t, Rng& rng) {
  auto [sys, idx] = sandwich_init(spec, SandwichMode::Joint, theta1, theta, theta2, L, rng);
  SandwichTally out;
  auto check = [&, &sys = sys, &idx = idx] {
    const auto q = sys.defect(idx.defect).position;
    const auto s = sys.walker(*idx.upper_walker).position, sp = sys.walker(*idx.lower_walker).position;
    if (!(sp <= q && q <= s)) ++out.violations;
    if (!sys.walker_consistent(sys.walker(*idx.upper_walker)) || !sys.walker_consistent(sys.walker(*idx.lower_walker)))
      ++out.violations;
  };
  check();
  try {
    run_events(sys, t, rng, check);
  } catch (const NegativeChannelRate&) {
    out.negative_rows = 1;
  }
  out.events = sys.events();
  out.coincidences = sys.coincidences_checked();
  out.Q = static_cast<double>(sys.defect(idx.defect).position);
  out.S = static_cast<double>(sys.walker(*idx.upper_walker).position);
  out.Sp = static_cast<double>(sys.walker(*idx.lower_walker).position);
  return out;
}

struct SandwichDefaults {
  double theta1, theta, theta2;
};

inline std::vector<ReportRow> sandwich_rows(const ModelSpec& spec, SandwichDefaults th, std::size_t L, double t,
                                            std::size_t replicas, std::uint64_t seed, unsigned threads = 0) {
  const std::uint64_t master = stream_seed(seed, Stream::Sandwich);
  const auto runs = run_replicas(replicas, resolve_threads(threads), [&](std::size_t r) {
    Rng rng = make_rng(master, r);
    return sandwich_run(spec, th.theta1, th.theta, th.theta2, L, t, rng);
  });
  SandwichTally sum;
  RunningStats q, s, sp;
  for (const auto& r : runs) {
    sum.events += r.events;
    sum.violations += r.violations;
    sum.negative_rows += r.negative_rows;
    sum.coincidences += r.coincidences;
    q.push(r.Q / t);
    s.push(r.S / t);
    sp.push(r.Sp / t);
  }
  json p{{"family", spec.name()}, {"theta1", th.theta1}, {"theta", th.theta}, {"theta2", th.theta2},
         {"L", L},                {"t", t},              {"replicas", replicas}, {"events", sum.events},
         {"coincidences", sum.coincidences}};
  std::vector<ReportRow> rows;
  rows.push_back(exact_row("sandwich_violations", p, static_cast<double>(sum.violations), 0.0, 0.0));
  rows.push_back(exact_row("sandwich_negative_rows", p, static_cast<double>(sum.negative_rows), 0.0, 0.0));
  rows.push_back(stat_row("sandwich_Q", p, q.mean(), q.stderr_mean(), characteristic_speed(spec, th.theta)));
  rows.push_back(stat_row("sandwich_S", p, s.mean(), s.stderr_mean(), swarm_speed_target(spec, th.theta, th.theta2)));
  rows.push_back(stat_row("sandwich_Sprime", p, sp.mean(), sp.stderr_mean(), swarm_speed_target(spec, th.theta1, th.theta)));
  return rows;
}

// Two tracers in ordered environments: Q <= Q' after every event.
inline ReportRow tracer_order_row(const ModelSpec& spec, double theta, double theta_prime, std::size_t L, double t,
                                  std::size_t replicas, std::uint64_t seed, unsigned threads = 0) {
  const std::uint64_t master = stream_seed(seed, Stream::Tracers);
  const auto runs = run_replicas(replicas, resolve_threads(threads), [&](std::size_t r) {
    Rng rng = make_rng(master, r);
    BricklayerSystem sys = ordered_tracers_init(spec, theta, theta_prime, L, rng);
    std::uint64_t bad = 0;
    run_events(sys, t, rng, [&] {
      if (sys.defect(0).position > sys.defect(1).position) ++bad;
    });
    return bad;
  });
  std::uint64_t bad = 0;
  for (auto b : runs) bad += b;
  json p{{"family", spec.name()}, {"theta", theta}, {"theta_prime", theta_prime}, {"L", L}, {"t", t},
         {"replicas", replicas}};
  return exact_row("tracer_order_violations", p, static_cast<double>(bad), 0.0, 0.0);
}

struct SoakTally {
  std::uint64_t events = 0, order_violations = 0, conservation_violations = 0;
};

// Basic coupling of quantile-coupled densities: order and discrepancy count after every event.
inline SoakTally coupling_soak(const ModelSpec& spec, double theta1, double theta2, std::size_t L,
                               std::uint64_t events, std::uint64_t seed) {
  const Marginal m1 = build_marginal(spec, theta1), m2 = build_marginal(spec, theta2);
  Rng rng = make_rng(stream_seed(seed, Stream::Soak), 0);
  CoupledState cs = two_density_init(spec, m1, m2, L, rng);
  const std::int64_t d0 = cs.recount_discrepancy();
  SoakTally out;
  while (out.events < events) {
    const auto ev = cs.basic_step(rng);
    if (ev.frozen) break;
    ++out.events;
    if (!cs.ordered()) ++out.order_violations;
    if (cs.recount_discrepancy() != d0 || cs.discrepancy_total() != d0) ++out.conservation_violations;
  }
  return out;
}

inline std::vector<ReportRow> soak_rows(const ModelSpec& spec, double theta1, double theta2, std::size_t L,
                                        std::uint64_t events, std::uint64_t seed) {
  const auto s = coupling_soak(spec, theta1, theta2, L, events, seed);
  json p{{"family", spec.name()}, {"theta1", theta1}, {"theta2", theta2}, {"L", L}, {"events", s.events}};
  return {exact_row("soak_order", p, static_cast<double>(s.order_violations), 0.0, 0.0),
          exact_row("soak_conservation", p, static_cast<double>(s.conservation_violations), 0.0, 0.0)};
}

// ---------------------------------------------------------------------------
// Config-driven entry points

inline const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{"lln",   "variance", "clt",    "qspeed",   "corr", "cor32",
                                              "decomp", "slant",   "sspeed", "sandwich", "soak"};
  return names;
}

inline std::vector<double> with_zero(std::vector<double> v) {
  if (std::find(v.begin(), v.end(), 0.0) == v.end()) v.insert(v.begin(), 0.0);
  return v;
}

inline std::vector<ReportRow> run_check(const std::string& name, const ExperimentConfig& cfg) {
  const ModelSpec spec = cfg.model();
  const unsigned th = cfg.threads;
  auto theta = [&] { return cfg.resolved_theta(spec); };
  auto plain = [&](std::vector<double> Vs, std::vector<int> ns) {
    return simulate_plain(spec, theta(), cfg.L, cfg.t, std::move(Vs), std::move(ns), cfg.replicas, cfg.seed, th);
  };
  if (name == "lln") return lln_rows(spec, theta(), cfg.L, plain(cfg.V, {}));
  if (name == "variance") return variance_rows(spec, theta(), cfg.L, plain(cfg.V, {}));
  if (name == "clt") return clt_rows(spec, theta(), cfg.L, plain(cfg.V, {}));
  if (name == "corr") return correlation_rows(spec, theta(), cfg.L, plain({0.0}, cfg.n), cfg.oracle, cfg.cap);
  if (name == "decomp") {
    if (std::any_of(cfg.t.begin(), cfg.t.end(), [](double t) { return t > 0; }) && cfg.replicas < 40)
      throw ConfigError("decomp needs at least 40 replicas for its jackknife");
    return decomposition_rows(spec, theta(), cfg.L, plain({0.0}, decomposition_offsets(cfg.n_max)), cfg.n_max);
  }
  if (name == "slant") return slanted_rows(spec, theta(), cfg.L, plain(with_zero(cfg.V), {}));
  if (name == "qspeed")
    return qspeed_rows(spec, theta(), cfg.L, simulate_defect(spec, theta(), cfg.L, cfg.t, cfg.replicas, cfg.seed, th));
  if (name == "cor32") {
    const auto p = plain({0.0}, cfg.n);
    const auto d = simulate_defect(spec, theta(), cfg.L, cfg.t, cfg.replicas, cfg.seed, th, true);
    return corollary32_rows(spec, theta(), cfg.L, p, d);
  }
  if (name == "sspeed") {
    if (!cfg.theta1 || !cfg.theta2) throw ConfigError("sspeed needs theta1 and theta2");
    if (!(*cfg.theta1 < *cfg.theta2)) throw ConfigError("sspeed needs theta1 < theta2");
    auto rows = sspeed_rows(spec, *cfg.theta1, *cfg.theta2, cfg.L, cfg.t,
                            simulate_swarm(spec, *cfg.theta1, *cfg.theta2, cfg.L, cfg.t, cfg.replicas, cfg.seed, th));
    rows.push_back(sspeed_limit_row(spec, *cfg.theta1, *cfg.theta2));
    return rows;
  }
  if (name == "sandwich") {
    const double t0 = theta();
    const SandwichDefaults d{cfg.theta1.value_or(t0 - 0.5), t0, cfg.theta2.value_or(t0 + 0.5)};
    auto rows = sandwich_rows(spec, d, cfg.L, cfg.t_max(), cfg.replicas, cfg.seed, th);
    rows.push_back(tracer_order_row(spec, d.theta1, d.theta2, cfg.L, cfg.t_max(), cfg.replicas, cfg.seed, th));
    return rows;
  }
  if (name == "soak") {
    const double t0 = theta();
    return soak_rows(spec, cfg.theta1.value_or(t0 - 0.5), cfg.theta2.value_or(t0 + 0.5), cfg.L,
                     static_cast<std::uint64_t>(cfg.replicas), cfg.seed);
  }
  throw ConfigError("unknown check '" + name + "'");
}

}  // namespace deposim
