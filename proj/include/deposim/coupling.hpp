#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "equilibrium.hpp"
#include "models.hpp"
#include "rate_tree.hpp"
#include "rng.hpp"

namespace deposim {

class NegativeChannelRate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class StochasticOrderViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Channel { UpperOnly, LowerOnly, Joint };

struct ChannelRates {
  double upper_only = 0, lower_only = 0, joint = 0;
  double total() const { return upper_only + lower_only + joint; }
};

// Basic coupling on one edge for lower (eta) <= upper (zeta).
inline ChannelRates edge_channels(const ModelSpec& spec, int eta_i, int eta_j, int zeta_i, int zeta_j) {
  ChannelRates c;
  c.joint = spec.rate(eta_i, zeta_j);
  c.upper_only = spec.rate(zeta_i, zeta_j) - c.joint;
  c.lower_only = spec.rate(eta_i, eta_j) - c.joint;
  if (c.upper_only < 0 || c.lower_only < 0 || c.joint < 0)
    throw NegativeChannelRate("negative basic-coupling channel at slopes (" + std::to_string(eta_i) + "," +
                              std::to_string(eta_j) + ") <= (" + std::to_string(zeta_i) + "," +
                              std::to_string(zeta_j) + "); rates are not monotone");
  return c;
}

struct CouplingEvent {
  double time = 0.0;
  std::size_t edge = 0;
  Channel channel = Channel::Joint;
  bool frozen = false;
};

// Two ordered configurations driven by one clock.
class CoupledState {
 public:
  CoupledState(const ModelSpec& spec, std::vector<int> lower, std::vector<int> upper)
      : spec_(&spec),
        lower_(std::move(lower)),
        upper_(std::move(upper)),
        lower0_(lower_),
        upper0_(upper_),
        lower_bricks_(lower_.size(), 0),
        upper_bricks_(lower_.size(), 0),
        tree_(lower_.size()) {
    if (lower_.size() != upper_.size() || lower_.size() < 2) throw std::invalid_argument("coupled rings must match");
    for (std::size_t i = 0; i < size(); ++i) {
      if (lower_[i] > upper_[i]) throw StochasticOrderViolation("initial pair not ordered at site " + std::to_string(i));
      discrepancy_total_ += upper_[i] - lower_[i];
    }
    recompute_rates();
  }

  const ModelSpec& spec() const { return *spec_; }
  std::size_t size() const { return lower_.size(); }
  double now() const { return now_; }
  std::uint64_t events() const { return events_; }
  double total_rate() const { return tree_.total(); }
  const std::vector<int>& lower() const { return lower_; }
  const std::vector<int>& upper() const { return upper_; }
  const std::vector<int>& lower_initial() const { return lower0_; }
  const std::vector<int>& upper_initial() const { return upper0_; }
  const std::vector<std::int64_t>& lower_bricks() const { return lower_bricks_; }
  const std::vector<std::int64_t>& upper_bricks() const { return upper_bricks_; }
  int discrepancy(std::size_t i) const { return upper_[i] - lower_[i]; }
  std::int64_t discrepancy_total() const { return discrepancy_total_; }
  std::int64_t second_class_current(std::size_t i) const { return upper_bricks_[i] - lower_bricks_[i]; }
  ChannelRates channels(std::size_t i) const {
    const std::size_t j = next(i);
    return edge_channels(*spec_, lower_[i], lower_[j], upper_[i], upper_[j]);
  }

  // Unwrapped position of the single discrepancy, if a defect was attached.
  const std::optional<std::int64_t>& tracer() const { return tracer_; }
  void attach_tracer(std::int64_t q) {
    if (discrepancy_total_ != 1 || discrepancy(static_cast<std::size_t>(floor_mod(q, size()))) != 1)
      throw std::logic_error("tracer needs a single discrepancy at its site");
    tracer_ = q;
  }

  bool ordered() const {
    for (std::size_t i = 0; i < size(); ++i)
      if (lower_[i] > upper_[i]) return false;
    return true;
  }

  std::int64_t recount_discrepancy() const {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < size(); ++i) s += upper_[i] - lower_[i];
    return s;
  }

  void recompute_rates() {
    for (std::size_t i = 0; i < size(); ++i) tree_.set_leaf(i, channels(i).total());
    tree_.rebuild();
  }

  void set_time(double t) { now_ = t; }

  // Chooses an edge and a channel for the next event and applies it.
  CouplingEvent fire(Rng& rng) {
    const std::size_t i = tree_.sample(uniform01(rng) * tree_.total());
    const ChannelRates c = channels(i);
    const double u = uniform01(rng) * c.total();
    Channel ch = Channel::Joint;
    if (u < c.upper_only) ch = Channel::UpperOnly;
    else if (u < c.upper_only + c.lower_only) ch = Channel::LowerOnly;
    if (ch == Channel::UpperOnly && c.upper_only <= 0) ch = c.lower_only > 0 ? Channel::LowerOnly : Channel::Joint;
    if (ch == Channel::LowerOnly && c.lower_only <= 0) ch = Channel::Joint;
    apply(i, ch);
    return {now_, i, ch, false};
  }

  CouplingEvent basic_step(Rng& rng) {
    if (!(total_rate() > 0)) return {now_, 0, Channel::Joint, true};
    now_ += exponential(rng, total_rate());
    return fire(rng);
  }

 private:
  std::size_t next(std::size_t i) const { return i + 1 == size() ? 0 : i + 1; }

  void apply(std::size_t i, Channel ch) {
    const std::size_t L = size(), j = next(i);
    if (ch != Channel::LowerOnly) {
      --upper_[i];
      ++upper_[j];
      ++upper_bricks_[i];
    }
    if (ch != Channel::UpperOnly) {
      --lower_[i];
      ++lower_[j];
      ++lower_bricks_[i];
    }
    if (tracer_) {
      const auto site = static_cast<std::size_t>(floor_mod(*tracer_, static_cast<std::int64_t>(L)));
      if (ch == Channel::UpperOnly && site == i) ++*tracer_;
      else if (ch == Channel::LowerOnly && site == j) --*tracer_;
    }
    ++events_;
    if (events_ % kExactRecomputeInterval == 0) {
      recompute_rates();
      return;
    }
    const std::size_t h = (i + L - 1) % L;
    tree_.set(h, channels(h).total());
    tree_.set(i, channels(i).total());
    tree_.set(j, channels(j).total());
  }

  const ModelSpec* spec_;
  std::vector<int> lower_, upper_, lower0_, upper0_;
  std::vector<std::int64_t> lower_bricks_, upper_bricks_;
  RateTree tree_;
  std::optional<std::int64_t> tracer_;
  std::int64_t discrepancy_total_ = 0;
  double now_ = 0.0;
  std::uint64_t events_ = 0;
};

struct DefectStart {
  CoupledState state;
  bool resampled = false;
};

// zeta = omega + delta_0. When omega_0 is at the top of the support, site 0 is redrawn
// from the marginal conditioned below the top.
inline DefectStart attach_defect(const ModelSpec& spec, const Marginal& m, std::vector<int> omega, Rng& rng) {
  bool resampled = false;
  const auto& top = spec.support().omega_max;
  if (top && omega[0] >= *top) {
    const double mass = m.cdf_at(*top - 1);
    if (!(mass > 0)) throw std::domain_error("marginal has no mass below omega_max");
    omega[0] = m.quantile(uniform01(rng) * mass);
    resampled = true;
  }
  std::vector<int> upper = omega;
  ++upper[0];
  DefectStart out{CoupledState(spec, std::move(omega), std::move(upper)), resampled};
  out.state.attach_tracer(0);
  return out;
}

// ---------------------------------------------------------------------------
// Joint laws of an ordered pair at one site

struct PairAtom {
  int lower, upper;
  double p;
};

class PairLaw {
 public:
  explicit PairLaw(std::vector<PairAtom> atoms) : atoms_(std::move(atoms)) {
    double c = 0;
    cdf_.reserve(atoms_.size());
    for (const auto& a : atoms_) cdf_.push_back(c += a.p);
    if (!cdf_.empty()) total_ = c;
  }
  const std::vector<PairAtom>& atoms() const { return atoms_; }
  double total() const { return total_; }
  double mean_gap() const {
    double s = 0;
    for (const auto& a : atoms_) s += a.p * (a.upper - a.lower);
    return s / total_;
  }
  double gap_moment(int k) const {
    double s = 0;
    for (const auto& a : atoms_) s += a.p * std::pow(a.upper - a.lower, k);
    return s / total_;
  }
  double upper_marginal(int y) const {
    double s = 0;
    for (const auto& a : atoms_)
      if (a.upper == y) s += a.p;
    return s / total_;
  }
  double lower_marginal(int x) const {
    double s = 0;
    for (const auto& a : atoms_)
      if (a.lower == x) s += a.p;
    return s / total_;
  }
  const PairAtom& sample(Rng& rng) const {
    const double u = uniform01(rng) * total_;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return atoms_[static_cast<std::size_t>(it - cdf_.begin())];
  }

 private:
  std::vector<PairAtom> atoms_;
  std::vector<double> cdf_;
  double total_ = 0;
};

// Monotone coupling: both coordinates are quantiles of one uniform.
inline PairLaw quantile_coupling(const Marginal& m1, const Marginal& m2) {
  std::vector<PairAtom> atoms;
  std::size_t i = 0, j = 0;
  double prev = 0.0;
  while (i < m1.cdf.size() && j < m2.cdf.size()) {
    const double c1 = m1.cdf[i], c2 = m2.cdf[j];
    const double c = std::min(c1, c2);
    const double p = c - prev;
    const int x = m1.z_lo + static_cast<int>(i), y = m2.z_lo + static_cast<int>(j);
    if (p > 0) {
      if (x > y) {
        // rounding slivers of the two cumulative sums are tolerated, real inversions are not
        if (p > 1e-13) throw StochasticOrderViolation("quantile coupling inverted at (" + std::to_string(x) + "," + std::to_string(y) + ")");
      } else {
        atoms.push_back({x, y, p});
      }
    }
    prev = c;
    if (c1 <= c) ++i;
    if (c2 <= c) ++j;
  }
  return PairLaw(std::move(atoms));
}

// Size-biased law mu(x,y)(y-x) / E(y-x).
inline PairLaw palm_reweight(const PairLaw& mu) {
  const double g = mu.mean_gap();
  if (!(g > 0)) throw std::domain_error("Palm reweighting needs a positive mean gap");
  std::vector<PairAtom> atoms;
  for (const auto& a : mu.atoms())
    if (a.upper > a.lower) atoms.push_back({a.lower, a.upper, a.p / mu.total() * (a.upper - a.lower) / g});
  return PairLaw(std::move(atoms));
}

// mu'(x,y) = mu(x,y) mu2(y-1)/mu2(y): the upper coordinate becomes mu2 shifted up by one.
inline PairLaw shifted_origin_measure(const PairLaw& mu, const ModelSpec& spec, double theta2) {
  std::vector<PairAtom> atoms;
  for (const auto& a : mu.atoms()) {
    if (spec.support().omega_min && a.upper <= *spec.support().omega_min) continue;  // mu2(y-1) = 0
    const double ratio = gibbs_f(spec, a.upper) / std::exp(theta2);
    atoms.push_back({a.lower, a.upper, a.p / mu.total() * ratio});
  }
  return PairLaw(std::move(atoms));
}

inline CoupledState two_density_init(const ModelSpec& spec, const Marginal& m1, const Marginal& m2, std::size_t L,
                                     Rng& rng) {
  std::vector<int> lo(L), hi(L);
  for (std::size_t i = 0; i < L; ++i) {
    const double u = uniform01(rng);
    lo[i] = m1.quantile(u);
    hi[i] = m2.quantile(u);
    if (lo[i] > hi[i]) throw StochasticOrderViolation("quantile draw inverted at site " + std::to_string(i));
  }
  return CoupledState(spec, std::move(lo), std::move(hi));
}

}  // namespace deposim
