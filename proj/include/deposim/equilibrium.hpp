#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "models.hpp"
#include "rng.hpp"

namespace deposim {

class DivisionByZeroRate : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};
class ThetaOutOfRange : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};
class Unsupported : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// f from the rates, gauge fixed by f(1) = f1. Defined for omega_min < z <= omega_max.
class RatioF {
 public:
  RatioF(const ModelSpec& spec, double f1) : spec_(&spec), f1_(f1) {
    if (!(f1 > 0)) throw InvalidParams("f1 must be positive");
  }
  double operator()(int z) const {
    const double den = spec_->rate(1, z - 1);
    if (den == 0.0) throw DivisionByZeroRate("r(1, " + std::to_string(z - 1) + ") vanishes");
    return spec_->rate(z, 0) / den * f1_;
  }

 private:
  const ModelSpec* spec_;
  double f1_;
};

inline RatioF f_from_rates(const ModelSpec& spec, double f1) { return RatioF(spec, f1); }

// The f entering the stationary weights: defining f for ZR/BL, rate ratios with f(1)=1 otherwise.
inline double gibbs_f(const ModelSpec& spec, int z) {
  if (spec.growth()) return (*spec.growth())(z);
  return RatioF(spec, 1.0)(z);
}

template <class F>
double log_f_factorial(const F& f, int z) {
  double s = 0.0;
  if (z > 0)
    for (int y = 1; y <= z; ++y) s += std::log(f(y));
  else
    for (int y = z + 1; y <= 0; ++y) s -= std::log(f(y));
  return s;
}

inline std::pair<double, double> theta_bounds(const ModelSpec& spec) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double lo = -inf, hi = inf;
  if (!spec.support().bounded_above()) {
    if (spec.growth()) hi = spec.growth()->log_limit_up();
    else hi = std::log(gibbs_f(spec, 1 << 20));
  }
  if (!spec.support().bounded_below()) {
    if (spec.growth()) lo = spec.growth()->log_limit_down();
    else lo = std::log(gibbs_f(spec, -(1 << 20)));
  }
  return {lo, hi};
}

struct Marginal {
  double theta = 0.0;
  int z_lo = 0, z_hi = 0;
  std::vector<double> weights;
  std::vector<double> cdf;
  double log_z = 0.0;
  double tail_bound = 0.0;

  bool in_window(long long z) const { return z >= z_lo && z <= z_hi; }
  double pmf(long long z) const { return in_window(z) ? weights[static_cast<std::size_t>(z - z_lo)] : 0.0; }
  double cdf_at(long long z) const {
    if (z < z_lo) return 0.0;
    if (z >= z_hi) return 1.0;
    return cdf[static_cast<std::size_t>(z - z_lo)];
  }
  int quantile(double u) const {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto k = std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1);
    return z_lo + static_cast<int>(k);
  }
  double mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) m += weights[k] * (z_lo + static_cast<int>(k));
    return m;
  }
};

namespace detail {
inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}
}  // namespace detail

inline Marginal build_marginal(const ModelSpec& spec, double theta, double eps = 1e-12,
                               int max_half_width = 1 << 20) {
  const auto [tlo, thi] = theta_bounds(spec);
  if (!(theta > tlo && theta < thi) || !std::isfinite(theta))
    throw ThetaOutOfRange("theta " + std::to_string(theta) + " outside (" + std::to_string(tlo) + ", " +
                          std::to_string(thi) + ")");
  const auto& sup = spec.support();
  // log weights relative to z = 0; grown outwards in both directions
  std::vector<double> up{0.0}, down;  // up[k] = lw(k), down[k] = lw(-k-1)
  double lse = 0.0;
  double tail_up = 0.0, tail_down = 0.0;

  for (int z = 0;; ++z) {
    if (sup.omega_max && z >= *sup.omega_max) break;
    const double lq = theta - std::log(gibbs_f(spec, z + 1));  // log mu(z+1)/mu(z)
    const double next = up.back() + lq;
    // Ratios decrease in z, so once below one the remainder is geometric.
    if (lq < 0) {
      const double q = std::exp(lq);
      const double bound = std::exp(next - lse) / (1.0 - q);
      // weighted so third moments are also accurate to eps
      if (bound * std::pow(2.0 + z, 3) < eps / 4) {
        tail_up = bound;
        break;
      }
    }
    if (z > max_half_width) throw ThetaOutOfRange("marginal window exceeds size limit");
    up.push_back(next);
    lse = detail::log_add(lse, next);
  }
  for (int z = 0;; --z) {
    if (sup.omega_min && z <= *sup.omega_min) break;
    const double lq = std::log(gibbs_f(spec, z)) - theta;  // log mu(z-1)/mu(z)
    const double prev = (down.empty() ? 0.0 : down.back());
    const double next = prev + lq;
    if (lq < 0) {
      const double q = std::exp(lq);
      const double bound = std::exp(next - lse) / (1.0 - q);
      if (bound * std::pow(2.0 - z, 3) < eps / 4) {
        tail_down = bound;
        break;
      }
    }
    if (-z > max_half_width) throw ThetaOutOfRange("marginal window exceeds size limit");
    down.push_back(next);
    lse = detail::log_add(lse, next);
  }

  Marginal m;
  m.theta = theta;
  m.z_lo = -static_cast<int>(down.size());
  m.z_hi = static_cast<int>(up.size()) - 1;
  std::vector<double> lw;
  lw.reserve(down.size() + up.size());
  for (auto it = down.rbegin(); it != down.rend(); ++it) lw.push_back(*it);
  lw.insert(lw.end(), up.begin(), up.end());
  const double mx = *std::max_element(lw.begin(), lw.end());
  double s = 0.0;
  m.weights.resize(lw.size());
  for (std::size_t k = 0; k < lw.size(); ++k) {
    m.weights[k] = std::exp(lw[k] - mx);
    s += m.weights[k];
  }
  for (auto& w : m.weights) w /= s;
  m.log_z = mx + std::log(s);  // relative to the z = 0 weight
  m.tail_bound = tail_up + tail_down;
  m.cdf.resize(m.weights.size());
  double c = 0.0;
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    c += m.weights[k];
    m.cdf[k] = c;
  }
  m.cdf.back() = 1.0;
  return m;
}

struct MomentTable {
  double rho = 0, var = 0, m3 = 0, Er = 0, Erstar_w0 = 0, Erstar_w1 = 0;
};

inline MomentTable moments(const Marginal& m, const ModelSpec& spec) {
  MomentTable t;
  const std::size_t n = m.weights.size();
  t.rho = m.mean();
  for (std::size_t k = 0; k < n; ++k) {
    const double d = (m.z_lo + static_cast<int>(k)) - t.rho;
    t.var += m.weights[k] * d * d;
    t.m3 += m.weights[k] * d * d * d;
  }
  for (std::size_t a = 0; a < n; ++a) {
    const int z = m.z_lo + static_cast<int>(a);
    for (std::size_t b = 0; b < n; ++b) {
      const int y = m.z_lo + static_cast<int>(b);
      const double w = m.weights[a] * m.weights[b];
      t.Er += w * spec.rate(z, y);
      const double rs = spec.rate(y, z);  // r*(z, y)
      t.Erstar_w0 += w * rs * (z - t.rho);
      t.Erstar_w1 += w * rs * (y - t.rho);
    }
  }
  return t;
}

inline double rho_of_theta(const ModelSpec& spec, double theta) { return build_marginal(spec, theta).mean(); }

inline double theta_of_rho(const ModelSpec& spec, double rho) {
  auto [lo, hi] = theta_bounds(spec);
  // bracket: expand towards infinite ends, creep towards finite ones
  auto pick_hi = [&](double k) { return std::isfinite(hi) ? hi - std::ldexp(1.0, -static_cast<int>(k)) : k; };
  auto pick_lo = [&](double k) { return std::isfinite(lo) ? lo + std::ldexp(1.0, -static_cast<int>(k)) : -k; };
  double a = 0, b = 0;
  bool found = false;
  for (int k = 1; k <= 60; ++k) {
    b = pick_hi(k);
    if (rho_of_theta(spec, b) > rho) {
      found = true;
      break;
    }
  }
  if (!found) throw ThetaOutOfRange("density " + std::to_string(rho) + " above range");
  found = false;
  for (int k = 1; k <= 60; ++k) {
    a = pick_lo(k);
    if (a < b && rho_of_theta(spec, a) < rho) {
      found = true;
      break;
    }
  }
  if (!found) throw ThetaOutOfRange("density " + std::to_string(rho) + " below range");
  while (b - a > 1e-12 * std::max(1.0, std::abs(a))) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    if (rho_of_theta(spec, mid) < rho) a = mid;
    else b = mid;
  }
  return 0.5 * (a + b);
}

inline double hydro_flux(const ModelSpec& spec, double rho) {
  const auto m = build_marginal(spec, theta_of_rho(spec, rho));
  return moments(m, spec).Er;
}

inline double reversed_rate(const ModelSpec& spec, int z, int y) { return spec.rate(y, z); }

// The conditional-expectation form mu(z+1)mu(y-1)/(mu(z)mu(y)) r(z+1, y-1), using the
// window weights where available and the exact ratios e^theta/f(z+1), f(y)/e^theta otherwise.
inline double reversed_rate_ratio_form(const ModelSpec& spec, const Marginal& m, int z, int y) {
  const auto& sup = spec.support();
  if (!sup.contains(z + 1) || !sup.contains(y - 1)) return 0.0;
  double up, down;
  if (m.in_window(z) && m.in_window(z + 1) && m.pmf(z) > 0) up = m.pmf(z + 1) / m.pmf(z);
  else up = std::exp(m.theta) / gibbs_f(spec, z + 1);
  if (m.in_window(y) && m.in_window(y - 1) && m.pmf(y) > 0) down = m.pmf(y - 1) / m.pmf(y);
  else down = gibbs_f(spec, y) / std::exp(m.theta);
  return up * down * spec.rate(z + 1, y - 1);
}

struct ReversedRateMismatch {
  int z, y;
  double direct, ratio_form;
};

inline std::vector<ReversedRateMismatch> verify_reversed_rates(const ModelSpec& spec, const Marginal& m,
                                                               int half_width = 12, double tol = 1e-10) {
  std::vector<ReversedRateMismatch> out;
  auto [lo, hi] = spec.support().box(half_width);
  lo = std::max(lo, m.z_lo);
  hi = std::min(hi, m.z_hi);
  for (int z = lo; z <= hi; ++z)
    for (int y = lo; y <= hi; ++y) {
      const double a = reversed_rate(spec, z, y), b = reversed_rate_ratio_form(spec, m, z, y);
      if (std::abs(a - b) > tol * std::max(1.0, std::abs(a))) out.push_back({z, y, a, b});
    }
  return out;
}

inline double characteristic_speed_closed(const ModelSpec& spec, double theta) {
  switch (spec.family()) {
    case Family::SE: {
      const double rho = 1.0 / (1.0 + std::exp(-theta));
      return 1.0 - 2.0 * rho;
    }
    case Family::ZR: return std::exp(theta) / moments(build_marginal(spec, theta), spec).var;
    case Family::BL: return 2.0 * std::sinh(theta) / moments(build_marginal(spec, theta), spec).var;
    default: throw Unsupported("no closed-form characteristic speed for " + spec.name());
  }
}

inline double characteristic_speed_static(const MomentTable& t) { return (t.Erstar_w0 + t.Erstar_w1) / t.var; }

inline double characteristic_speed_static(const ModelSpec& spec, const Marginal& m) {
  return characteristic_speed_static(moments(m, spec));
}

// Closed form where one exists, otherwise the static identity.
inline double characteristic_speed(const ModelSpec& spec, double theta) {
  if (spec.family() == Family::SE || spec.family() == Family::ZR || spec.family() == Family::BL)
    return characteristic_speed_closed(spec, theta);
  return characteristic_speed_static(spec, build_marginal(spec, theta));
}

inline double convexity_certificate(const ModelSpec& spec, double theta) {
  const auto t = moments(build_marginal(spec, theta), spec);
  switch (spec.family()) {
    case Family::BL:
      return (std::exp(theta) + std::exp(-theta)) * t.var - (std::exp(theta) - std::exp(-theta)) * t.m3;
    case Family::ZR: return std::exp(theta) * (t.var - t.m3);
    default: throw Unsupported("convexity certificate only for BL and ZR");
  }
}

// sum_{y > z} (y - rho) mu(y) / mu(z); zero at omega_max.
inline double correlation_kernel(const Marginal& m, double rho, int z) {
  if (m.pmf(z) <= 0) return 0.0;
  double s = 0.0;
  for (int y = std::max(z + 1, m.z_lo); y <= m.z_hi; ++y) s += (y - rho) * m.pmf(y);
  return s / m.pmf(z);
}

inline int sample_site(const Marginal& m, Rng& rng) { return m.quantile(uniform01(rng)); }

inline std::vector<int> sample_configuration(const Marginal& m, std::size_t L, Rng& rng) {
  std::vector<int> v(L);
  for (auto& x : v) x = sample_site(m, rng);
  return v;
}

}  // namespace deposim
