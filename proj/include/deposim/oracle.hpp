#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "equilibrium.hpp"
#include "models.hpp"
#include "rng.hpp"

namespace deposim::oracle {

class SpaceTooLarge : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline constexpr std::size_t kMaxStates = 200000;

// Full product space {lo..hi}^L, indexed in mixed radix with site 0 least significant.
class StateSpace {
 public:
  StateSpace(std::size_t L, int lo, int hi) : L_(L), lo_(lo), hi_(hi) {
    if (L < 2) throw std::invalid_argument("L must be at least 2");
    if (hi < lo) throw std::invalid_argument("empty alphabet");
    const std::size_t A = alphabet();
    std::size_t n = 1;
    for (std::size_t i = 0; i < L; ++i) {
      if (n > kMaxStates / A) throw SpaceTooLarge("state space exceeds " + std::to_string(kMaxStates) + " states");
      n *= A;
    }
    size_ = n;
  }

  // Alphabet from the support, with unbounded directions capped at +-cap.
  static StateSpace for_model(const ModelSpec& spec, std::size_t L, int cap) {
    const auto& s = spec.support();
    const int lo = s.omega_min ? static_cast<int>(*s.omega_min) : -cap;
    const int hi = s.omega_max ? static_cast<int>(*s.omega_max) : cap;
    return StateSpace(L, lo, hi);
  }

  std::size_t L() const { return L_; }
  int lo() const { return lo_; }
  int hi() const { return hi_; }
  std::size_t alphabet() const { return static_cast<std::size_t>(hi_ - lo_ + 1); }
  std::size_t size() const { return size_; }
  bool truncated(const ModelSpec& spec) const {
    const auto& s = spec.support();
    return !(s.omega_min && s.omega_max);
  }

  std::vector<int> decode(std::size_t idx) const {
    std::vector<int> w(L_);
    const std::size_t A = alphabet();
    for (std::size_t i = 0; i < L_; ++i) {
      w[i] = lo_ + static_cast<int>(idx % A);
      idx /= A;
    }
    return w;
  }

  std::size_t encode(const std::vector<int>& w) const {
    std::size_t idx = 0;
    const std::size_t A = alphabet();
    for (std::size_t i = L_; i-- > 0;) idx = idx * A + static_cast<std::size_t>(w[i] - lo_);
    return idx;
  }

  bool contains(int z) const { return z >= lo_ && z <= hi_; }

 private:
  std::size_t L_;
  int lo_, hi_;
  std::size_t size_ = 0;
};

// Sparse generator in CSR form. Diagonal entries are stored separately; transitions that
// would leave the (capped) alphabet are dropped and their rate recorded in leak.
struct Generator {
  std::size_t n = 0;
  std::vector<std::size_t> row_start{0};
  std::vector<std::size_t> col;
  std::vector<double> val;
  std::vector<double> diag;
  std::vector<double> leak;

  double max_exit_rate() const {
    double m = 0;
    for (double d : diag) m = std::max(m, -d);
    return m;
  }

  // (G v)(x) = sum_y G(x, y) v(y)
  std::vector<double> apply(const std::vector<double>& v) const {
    std::vector<double> out(n);
    for (std::size_t x = 0; x < n; ++x) {
      double s = diag[x] * v[x];
      for (std::size_t k = row_start[x]; k < row_start[x + 1]; ++k) s += val[k] * v[col[k]];
      out[x] = s;
    }
    return out;
  }

  // (p G)(y) = sum_x p(x) G(x, y)
  std::vector<double> apply_left(const std::vector<double>& p) const {
    std::vector<double> out(n);
    for (std::size_t x = 0; x < n; ++x) {
      out[x] += diag[x] * p[x];
      for (std::size_t k = row_start[x]; k < row_start[x + 1]; ++k) out[col[k]] += p[x] * val[k];
    }
    return out;
  }

  double max_row_sum() const {
    double m = 0;
    for (std::size_t x = 0; x < n; ++x) {
      double s = diag[x];
      for (std::size_t k = row_start[x]; k < row_start[x + 1]; ++k) s += val[k];
      m = std::max(m, std::abs(s));
    }
    return m;
  }

  bool offdiag_nonnegative() const {
    return std::all_of(val.begin(), val.end(), [](double v) { return v >= 0; });
  }
};

enum class Direction { Forward, Reversed };

// Forward: edge i moves a unit from i to i+1 at rate r(w_i, w_{i+1}).
// Reversed: edge i moves a unit from i+1 to i at rate r*(w_i, w_{i+1}) = r(w_{i+1}, w_i).
inline Generator build_generator(const ModelSpec& spec, const StateSpace& space,
                                 Direction dir = Direction::Forward) {
  Generator g;
  g.n = space.size();
  g.diag.assign(g.n, 0.0);
  g.leak.assign(g.n, 0.0);
  const std::size_t L = space.L();
  std::vector<std::pair<std::size_t, double>> row;
  for (std::size_t x = 0; x < g.n; ++x) {
    std::vector<int> w = space.decode(x);
    row.clear();
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t j = (i + 1) % L;
      const double r = dir == Direction::Forward ? spec.rate(w[i], w[j]) : spec.rate(w[j], w[i]);
      if (!(r > 0)) continue;
      const int di = dir == Direction::Forward ? -1 : 1;
      if (!space.contains(w[i] + di) || !space.contains(w[j] - di)) {
        g.leak[x] += r;
        continue;
      }
      w[i] += di;
      w[j] -= di;
      row.emplace_back(space.encode(w), r);
      w[i] -= di;
      w[j] += di;
      g.diag[x] -= r;
    }
    std::sort(row.begin(), row.end());
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k > 0 && row[k].first == row[k - 1].first) {
        g.val.back() += row[k].second;
        continue;
      }
      g.col.push_back(row[k].first);
      g.val.push_back(row[k].second);
    }
    g.row_start.push_back(g.col.size());
  }
  return g;
}

inline Generator build_generator(const ModelSpec& spec, std::size_t L, int cap) {
  return build_generator(spec, StateSpace::for_model(spec, L, cap));
}

// Product measure with the marginal restricted to the alphabet and renormalised.
inline std::vector<double> product_measure(const ModelSpec& spec, const StateSpace& space, double theta) {
  const Marginal m = build_marginal(spec, theta);
  std::vector<double> site(space.alphabet());
  double z = 0;
  for (std::size_t a = 0; a < site.size(); ++a) z += site[a] = m.pmf(space.lo() + static_cast<int>(a));
  for (double& p : site) p /= z;
  std::vector<double> mu(space.size());
  const std::size_t A = space.alphabet();
  for (std::size_t x = 0; x < space.size(); ++x) {
    double p = 1.0;
    std::size_t idx = x;
    for (std::size_t i = 0; i < space.L(); ++i) {
      p *= site[idx % A];
      idx /= A;
    }
    mu[x] = p;
  }
  return mu;
}

// Particle-number sectors are invariant: every transition preserves sum(w).
inline bool sectors_invariant(const Generator& g, const StateSpace& space) {
  for (std::size_t x = 0; x < g.n; ++x) {
    const auto w = space.decode(x);
    long long s = 0;
    for (int z : w) s += z;
    for (std::size_t k = g.row_start[x]; k < g.row_start[x + 1]; ++k) {
      long long t = 0;
      for (int z : space.decode(g.col[k])) t += z;
      if (t != s) return false;
    }
  }
  return true;
}

struct StationarityResult {
  double residual = 0;   // max |mu^T G|
  double leak_mass = 0;  // sum_x mu(x) leak(x)
  bool truncated = false;
};

inline StationarityResult stationarity(const ModelSpec& spec, double theta, std::size_t L, int cap = 8) {
  const StateSpace space = StateSpace::for_model(spec, L, cap);
  const Generator g = build_generator(spec, space);
  const auto mu = product_measure(spec, space, theta);
  const auto r = g.apply_left(mu);
  StationarityResult out;
  for (double v : r) out.residual = std::max(out.residual, std::abs(v));
  for (std::size_t x = 0; x < g.n; ++x) out.leak_mass += mu[x] * g.leak[x];
  out.truncated = space.truncated(spec);
  return out;
}

inline double stationarity_residual(const ModelSpec& spec, double theta, std::size_t L, int cap = 8) {
  return stationarity(spec, theta, L, cap).residual;
}

// ---------------------------------------------------------------------------
// Uniformisation

struct UniformizationResult {
  std::vector<double> value;
  double tail_bound = 0;  // Poisson mass not summed, times sup|v|
  std::size_t terms = 0;
};

// exp(tG) v (left = false) or p exp(tG) (left = true), with the Poisson tail below tol.
inline UniformizationResult expm_action(const Generator& g, std::vector<double> v, double t, bool left = false,
                                        double tol = 1e-12) {
  if (t < 0) throw std::invalid_argument("t must be nonnegative");
  UniformizationResult out;
  const double lam = g.max_exit_rate();
  double sup = 0;
  for (double x : v) sup = std::max(sup, std::abs(x));
  if (t == 0 || lam == 0 || sup == 0) {
    out.value = std::move(v);
    return out;
  }
  const double q = lam * t;
  if (q > 600) throw std::domain_error("uniformisation horizon too long for a direct Poisson series");
  // P = I + G / lam
  auto step = [&](const std::vector<double>& x) {
    std::vector<double> y = left ? g.apply_left(x) : g.apply(x);
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = x[k] + y[k] / lam;
    return y;
  };
  double w = std::exp(-q), cum = w;
  std::vector<double> acc(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) acc[k] = w * v[k];
  std::size_t n = 0;
  while ((1.0 - cum) * sup > tol && n < 100000) {
    ++n;
    v = step(v);
    w *= q / static_cast<double>(n);
    cum += w;
    for (std::size_t k = 0; k < v.size(); ++k) acc[k] += w * v[k];
  }
  out.value = std::move(acc);
  out.tail_bound = std::max(0.0, 1.0 - cum) * sup;
  out.terms = n;
  return out;
}

struct CorrelationResult {
  double value = 0;
  double tail_bound = 0;
};

// E(w~_0(0) w~_n(t)) under the product measure on the ring, centred by the exact rho(theta).
inline CorrelationResult exact_correlation_detail(const ModelSpec& spec, double theta, std::size_t L, int n, double t,
                                                  int cap = 8) {
  const StateSpace space = StateSpace::for_model(spec, L, cap);
  const Generator g = build_generator(spec, space);
  const auto mu = product_measure(spec, space, theta);
  const double rho = build_marginal(spec, theta).mean();
  const auto site_n = static_cast<std::size_t>(floor_mod(n, static_cast<std::int64_t>(L)));
  std::vector<double> fn(space.size()), f0(space.size());
  for (std::size_t x = 0; x < space.size(); ++x) {
    const auto w = space.decode(x);
    fn[x] = w[site_n] - rho;
    f0[x] = w[0] - rho;
  }
  const auto u = expm_action(g, fn, t);
  CorrelationResult out;
  for (std::size_t x = 0; x < space.size(); ++x) out.value += mu[x] * f0[x] * u.value[x];
  double sup0 = 0;
  for (double v : f0) sup0 = std::max(sup0, std::abs(v));
  out.tail_bound = u.tail_bound * sup0;
  return out;
}

inline double exact_correlation(const ModelSpec& spec, double theta, std::size_t L, int n, double t, int cap = 8) {
  return exact_correlation_detail(spec, theta, L, n, t, cap).value;
}

// ---------------------------------------------------------------------------
// Adjointness E(psi L phi) = E(phi L* psi)

struct AdjointReport {
  std::size_t trials = 0;
  double max_discrepancy = 0;
  double min_dirichlet = std::numeric_limits<double>::infinity();  // min over trials of -E(phi L phi)
};

inline AdjointReport adjoint_check(const ModelSpec& spec, double theta, std::size_t L, std::size_t trials,
                                   std::uint64_t seed = 1, int cap = 8) {
  const StateSpace space = StateSpace::for_model(spec, L, cap);
  const Generator g = build_generator(spec, space, Direction::Forward);
  const Generator gs = build_generator(spec, space, Direction::Reversed);
  const auto mu = product_measure(spec, space, theta);
  AdjointReport rep;
  rep.trials = trials;
  for (std::size_t k = 0; k < trials; ++k) {
    Rng rng = make_rng(seed, k);
    std::vector<double> psi(space.size()), phi(space.size());
    for (auto& v : psi) v = 2 * uniform01(rng) - 1;
    for (auto& v : phi) v = 2 * uniform01(rng) - 1;
    const auto lphi = g.apply(phi), lspsi = gs.apply(psi);
    double a = 0, b = 0, d = 0;
    for (std::size_t x = 0; x < space.size(); ++x) {
      a += mu[x] * psi[x] * lphi[x];
      b += mu[x] * phi[x] * lspsi[x];
      d -= mu[x] * phi[x] * lphi[x];
    }
    rep.max_discrepancy = std::max(rep.max_discrepancy, std::abs(a - b));
    rep.min_dirichlet = std::min(rep.min_dirichlet, d);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Event engine against exp(eps G)

struct SmallTimeReport {
  double tv = 0;
  std::size_t replicas = 0;
  double eps = 0;
};

inline SmallTimeReport simulator_smalltime_check(const ModelSpec& spec, const std::vector<int>& start, double eps,
                                                 std::size_t replicas, std::uint64_t seed = 1, int cap = 8) {
  const StateSpace space = StateSpace::for_model(spec, start.size(), cap);
  for (int z : start)
    if (!space.contains(z)) throw std::invalid_argument("start state outside the alphabet");
  const Generator g = build_generator(spec, space);
  const std::size_t x0 = space.encode(start);
  std::vector<double> p(space.size(), 0.0);
  p[x0] = 1.0;
  const auto row = expm_action(g, p, eps, true).value;

  std::map<std::size_t, std::size_t> counts;
  std::size_t escaped = 0;  // runs that left a capped alphabet
  for (std::size_t r = 0; r < replicas; ++r) {
    Rng rng = make_rng(seed, r);
    RingState s(spec, start);
    run_until(s, eps, rng);
    if (std::all_of(s.omega().begin(), s.omega().end(), [&](int z) { return space.contains(z); }))
      ++counts[space.encode(s.omega())];
    else
      ++escaped;
  }
  double tv = static_cast<double>(escaped) / static_cast<double>(replicas);
  std::vector<double> emp(space.size(), 0.0);
  for (const auto& [x, c] : counts) emp[x] = static_cast<double>(c) / static_cast<double>(replicas);
  for (std::size_t x = 0; x < space.size(); ++x) tv += std::abs(emp[x] - row[x]);
  return {0.5 * tv, replicas, eps};
}

}  // namespace deposim::oracle
