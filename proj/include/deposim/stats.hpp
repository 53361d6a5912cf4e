#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace deposim {

// Streaming mean and central moments (Welford / Pebay updates), mergeable.
class RunningStats {
 public:
  void push(double x) {
    const double n1 = static_cast<double>(n_);
    ++n_;
    const double n = static_cast<double>(n_);
    const double delta = x - mean_;
    const double dn = delta / n;
    const double term = delta * dn * n1;
    mean_ += dn;
    m3_ += term * dn * (n - 2) - 3 * dn * m2_;
    m2_ += term;
  }

  void merge(const RunningStats& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_), n = na + nb;
    const double delta = o.mean_ - mean_;
    const double m2 = m2_ + o.m2_ + delta * delta * na * nb / n;
    const double m3 = m3_ + o.m3_ + delta * delta * delta * na * nb * (na - nb) / (n * n) +
                      3 * delta * (na * o.m2_ - nb * m2_) / n;
    mean_ += delta * nb / n;
    m2_ = m2;
    m3_ = m3;
    n_ += o.n_;
  }

  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double population_variance() const { return n_ > 0 ? m2_ / static_cast<double>(n_) : 0.0; }
  double third_central() const { return n_ > 0 ? m3_ / static_cast<double>(n_) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
  double stderr_mean() const { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0, m2_ = 0, m3_ = 0;
};

inline RunningStats summarize(std::span<const double> xs) {
  RunningStats s;
  for (double x : xs) s.push(x);
  return s;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// sup_x |F_n(x) - Phi(x)| over the sample.
inline double ks_normal(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = normal_cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return d;
}

// KS distance for integer-valued data against Phi((k + 1/2 - centre) / scale), i.e. the
// continuity-corrected normal approximation of the lattice law: the empirical CDF at each
// integer k is compared with the normal CDF at the half-integer above it.
inline double ks_normal_lattice(std::span<const std::int64_t> ks, double centre, double scale) {
  if (ks.empty()) return 0.0;
  std::vector<std::int64_t> v(ks.begin(), ks.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  std::size_t i = 0;
  // lattice points between the extremes, plus one on either side
  for (std::int64_t k = v.front() - 1; k <= v.back(); ++k) {
    while (i < v.size() && v[i] <= k) ++i;
    const double Fn = static_cast<double>(i) / n;
    d = std::max(d, std::abs(Fn - normal_cdf((static_cast<double>(k) + 0.5 - centre) / scale)));
  }
  return d;
}

// Grouped delete-one jackknife: standard error of stat(sample) from G contiguous blocks.
template <class Stat>
double jackknife_se(std::size_t n, Stat&& stat_without_block, std::size_t groups = 20) {
  groups = std::min(groups, n);
  if (groups < 2) return 0.0;
  std::vector<double> th(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t a = g * n / groups, b = (g + 1) * n / groups;
    th[g] = stat_without_block(a, b);
  }
  double mean = 0;
  for (double t : th) mean += t;
  mean /= static_cast<double>(groups);
  double s = 0;
  for (double t : th) s += (t - mean) * (t - mean);
  return std::sqrt(s * static_cast<double>(groups - 1) / static_cast<double>(groups));
}

// Unbiased sample variance excluding indices [a, b).
inline double variance_excluding(std::span<const double> xs, std::size_t a, std::size_t b) {
  RunningStats s;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (i < a || i >= b) s.push(xs[i]);
  return s.variance();
}

}  // namespace deposim
