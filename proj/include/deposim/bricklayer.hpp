#pragma once

// Several configurations of a bricklayer-type model (BL, totally asymmetric ZR) driven
// by shared clocks. The bricklayer at site i lays on its right column at rate f(x_i) and on
// its left column at rate f(-x_i). One uniform u per clock ring decides which configurations
// lay: by default configuration k lays iff u < its own rate, the graphical form of the basic
// coupling. Defect tracers and S-walkers are read off the same u.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coupling.hpp"
#include "dynamics.hpp"
#include "models.hpp"
#include "rate_tree.hpp"
#include "rng.hpp"

namespace deposim {

enum class Side : std::uint8_t { Right, Left };

// Channel rows at a site shared by the tracer and the walker, in table order.
using TableRows = std::array<double, 4>;

// Upper coupling, left moves at i = S = Q (omega carries Q, zeta >= omega + 1).
template <class F>
TableRows upper_left_rows(const F& f, int omega, int zeta) {
  const double n = zeta - omega, d = f(-omega) - f(-zeta);
  return {f(-omega - 1) - f(-zeta), (f(-omega) - f(-omega - 1)) - d / n, d / n, f(-zeta)};
}
// Upper coupling, right moves.
template <class F>
TableRows upper_right_rows(const F& f, int omega, int zeta) {
  const double n = zeta - omega, d = f(zeta) - f(omega);
  return {(n - 1) / n * d, d / n - (f(omega + 1) - f(omega)), f(omega + 1) - f(omega), f(omega)};
}
// Lower coupling, left moves at i = S' = Q (zeta' = omega + delta_Q).
template <class F>
TableRows lower_left_rows(const F& f, int eta, int zeta) {
  const double n = zeta - eta, d = f(-eta) - f(-zeta);
  return {(n - 1) / n * d, d / n - (f(-zeta + 1) - f(-zeta)), f(-zeta + 1) - f(-zeta), f(-zeta)};
}
// Lower coupling, right moves.
template <class F>
TableRows lower_right_rows(const F& f, int eta, int zeta) {
  const double n = zeta - eta, d = f(zeta) - f(eta);
  return {f(zeta - 1) - f(eta), (f(zeta) - f(zeta - 1)) - d / n, d / n, f(eta)};
}

inline bool rows_nonnegative(const TableRows& r) {
  double scale = 1.0;
  for (double x : r) scale = std::max(scale, std::abs(x));
  for (double x : r)
    if (x < -1e-12 * scale) return false;
  return true;
}

enum class Placement { Upper, Lower };

struct DefectLink {
  std::size_t lower, upper;  // upper = lower + delta_position
  std::int64_t position;     // unwrapped
};

// Distinguished label riding the discrepancies between two configurations.
struct SwarmWalker {
  std::size_t lower, upper;
  Placement placement;
  std::optional<std::size_t> linked_defect;
  std::vector<std::int64_t> m0;  // boundary indices at time 0
  std::int64_t count = 0;        // total discrepancy on the ring
  std::int64_t label = 0;        // s
  std::int64_t position = 0;     // S, unwrapped
};

struct BricklayerEvent {
  double time = 0.0;
  std::size_t site = 0;
  Side side = Side::Right;
  std::uint32_t laid = 0;
  bool frozen = false;
};

class BricklayerSystem {
 public:
  BricklayerSystem(const ModelSpec& spec, std::vector<std::vector<int>> configs)
      : spec_(&spec), f_(growth_of(spec)), configs_(std::move(configs)) {
    if (configs_.empty() || configs_.size() > 32) throw std::invalid_argument("1..32 configurations");
    L_ = configs_[0].size();
    if (L_ < 2) throw std::invalid_argument("ring needs at least two sites");
    for (const auto& c : configs_)
      if (c.size() != L_) throw std::invalid_argument("configurations must share the ring");
    bricks_.assign(configs_.size(), std::vector<std::int64_t>(L_, 0));
    tree_.resize(2 * L_);
    recompute_rates();
  }

  static const GrowthFunction& growth_of(const ModelSpec& spec) {
    if ((spec.family() != Family::BL && spec.family() != Family::ZR) || !spec.growth())
      throw Unsupported("bricklayer couplings need BL or totally asymmetric ZR");
    return *spec.growth();
  }

  const ModelSpec& spec() const { return *spec_; }
  std::size_t size() const { return L_; }
  std::size_t count() const { return configs_.size(); }
  double now() const { return now_; }
  void set_time(double t) { now_ = t; }
  std::uint64_t events() const { return events_; }
  double total_rate() const { return tree_.total(); }
  const std::vector<int>& config(std::size_t k) const { return configs_[k]; }
  const std::vector<std::int64_t>& bricks(std::size_t k) const { return bricks_[k]; }
  const DefectLink& defect(std::size_t k) const { return defects_[k]; }
  const SwarmWalker& walker(std::size_t k) const { return walkers_[k]; }
  std::size_t negative_rows_seen() const { return negative_rows_; }
  std::size_t coincidences_checked() const { return coincidences_; }

  std::size_t add_defect(std::size_t lower, std::size_t upper, std::int64_t position) {
    const std::size_t site = wrap(position);
    for (std::size_t i = 0; i < L_; ++i) {
      const int d = configs_[upper][i] - configs_[lower][i];
      if (d != (i == site ? 1 : 0)) throw std::logic_error("defect pair must differ by one unit at its site");
    }
    defects_.push_back({lower, upper, position});
    audit_tables();
    return defects_.size() - 1;
  }

  // Walker starts at `position`, which must carry a discrepancy. Upper placement takes the
  // lowest label there, lower placement the highest.
  std::size_t add_swarm(std::size_t lower, std::size_t upper, Placement placement, std::int64_t position,
                        std::optional<std::size_t> linked_defect = std::nullopt) {
    SwarmWalker w;
    w.lower = lower;
    w.upper = upper;
    w.placement = placement;
    w.linked_defect = linked_defect;
    w.m0.resize(L_);
    std::int64_t c = -1;
    for (std::size_t i = 0; i < L_; ++i) {
      const int d = configs_[upper][i] - configs_[lower][i];
      if (d < 0) throw StochasticOrderViolation("swarm configurations are not ordered");
      c += d;
      w.m0[i] = c;
    }
    w.count = c + 1;
    w.position = position;
    if (configs_[upper][wrap(position)] - configs_[lower][wrap(position)] <= 0)
      throw std::logic_error("walker must start on a discrepancy");
    walkers_.push_back(std::move(w));
    auto& ref = walkers_.back();
    ref.label = placement == Placement::Upper ? boundary(ref, position - 1) + 1 : boundary(ref, position);
    audit_tables();
    return walkers_.size() - 1;
  }

  // Remark-5.10 layout: defect a sits on a configuration below that of defect b.
  void order_defects(std::size_t a, std::size_t b) { ordered_pair_ = {a, b}; }

  // m_i for an unwrapped site index.
  std::int64_t boundary(const SwarmWalker& w, std::int64_t i) const {
    const std::size_t s = wrap(i);
    const std::int64_t j = bricks_[w.upper][s] - bricks_[w.lower][s];
    const std::int64_t L = static_cast<std::int64_t>(L_);
    const std::int64_t winding = (i - static_cast<std::int64_t>(s)) / L;
    return w.m0[s] - j + winding * w.count;
  }

  int discrepancy(const SwarmWalker& w, std::size_t site) const {
    return configs_[w.upper][site] - configs_[w.lower][site];
  }

  bool walker_consistent(const SwarmWalker& w) const {
    return boundary(w, w.position - 1) < w.label && w.label <= boundary(w, w.position);
  }

  bool ordered(std::size_t lo, std::size_t hi) const {
    for (std::size_t i = 0; i < L_; ++i)
      if (configs_[lo][i] > configs_[hi][i]) return false;
    return true;
  }

  std::int64_t mass(std::size_t k) const {
    std::int64_t s = 0;
    for (int x : configs_[k]) s += x;
    return s;
  }

  std::int64_t second_class_current(const SwarmWalker& w, std::size_t column) const {
    return bricks_[w.upper][column] - bricks_[w.lower][column];
  }

  void recompute_rates() {
    for (std::size_t i = 0; i < L_; ++i) {
      tree_.set_leaf(2 * i, site_rate(i, Side::Right));
      tree_.set_leaf(2 * i + 1, site_rate(i, Side::Left));
    }
    tree_.rebuild();
  }

  BricklayerEvent fire(Rng& rng) {
    const std::size_t leaf = tree_.sample(uniform01(rng) * tree_.total());
    const std::size_t i = leaf / 2;
    const Side side = (leaf & 1) ? Side::Left : Side::Right;
    const double u = uniform01(rng) * tree_.get(leaf);
    const std::uint32_t laid = apply(i, side, u, rng);
    return {now_, i, side, laid, false};
  }

  BricklayerEvent step(Rng& rng) {
    if (!(total_rate() > 0)) return {now_, 0, Side::Right, 0, true};
    now_ += exponential(rng, total_rate());
    return fire(rng);
  }

 private:
  std::size_t wrap(std::int64_t i) const { return static_cast<std::size_t>(floor_mod(i, static_cast<std::int64_t>(L_))); }
  std::size_t right_of(std::size_t i) const { return i + 1 == L_ ? 0 : i + 1; }
  std::size_t left_of(std::size_t i) const { return i == 0 ? L_ - 1 : i - 1; }

  double own_rate(int x, Side side) const { return side == Side::Right ? f_(x) : f_(-x); }

  double site_rate(std::size_t i, Side side) const {
    int lo = configs_[0][i], hi = lo;
    for (const auto& c : configs_) {
      lo = std::min(lo, c[i]);
      hi = std::max(hi, c[i]);
    }
    return side == Side::Right ? f_(hi) : f_(-lo);
  }

  // Interval [a, b) in which configuration k lays.
  struct Interval {
    double a, b;
    bool has(double u) const { return u >= a && u < b; }
  };

  std::uint32_t laid_mask(std::size_t i, Side side, double u) const {
    std::uint32_t mask = 0;
    for (std::size_t k = 0; k < configs_.size(); ++k)
      if (u < own_rate(configs_[k][i], side)) mask |= 1u << k;
    if (ordered_pair_) {
      const auto& da = defects_[ordered_pair_->first];
      const auto& db = defects_[ordered_pair_->second];
      if (wrap(da.position) == i && wrap(db.position) == i) {
        const int w = configs_[da.lower][i], wp = configs_[db.lower][i];
        std::array<Interval, 4> iv{};
        if (side == Side::Right) {
          const double top = f_(wp), shift = top - f_(w);
          iv = {Interval{shift, top}, Interval{shift, std::min(top + f_(w + 1) - f_(w), f_(wp + 1))},
                Interval{0.0, top}, Interval{0.0, f_(wp + 1)}};
        } else {
          const double a = f_(-w), base = a - f_(-wp);
          iv = {Interval{0.0, a}, Interval{0.0, f_(-w - 1)}, Interval{base, a},
                Interval{base, std::min(base + f_(-wp - 1), a)}};
        }
        const std::array<std::size_t, 4> who{da.lower, da.upper, db.lower, db.upper};
        for (std::size_t r = 0; r < 4; ++r) {
          mask &= ~(1u << who[r]);
          if (iv[r].has(u)) mask |= 1u << who[r];
        }
      }
    }
    return mask;
  }

  // Sub-interval of the second-class interval that carries the walker.
  bool walker_moves(const SwarmWalker& w, std::size_t i, Side side, double u, int n) const {
    const int lo = configs_[w.lower][i], hi = configs_[w.upper][i];
    const bool coincident = w.linked_defect && wrap(defects_[*w.linked_defect].position) == i;
    if (side == Side::Right) {
      const double d = (f_(hi) - f_(lo)) / n;
      if (w.placement == Placement::Upper) {
        double b = f_(lo) + d;
        if (coincident) b = std::max(b, f_(lo + 1));
        return u < b;
      }
      double a = f_(hi) - d;
      if (coincident) a = std::max(a, f_(hi - 1));
      return u >= a;
    }
    const double d = (f_(-lo) - f_(-hi)) / n;
    if (w.placement == Placement::Upper) {
      double a = f_(-lo) - d;
      if (coincident) a = std::max(a, f_(-lo - 1));
      return u >= a;
    }
    double b = f_(-hi) + d;
    if (coincident) b = std::max(b, f_(-hi + 1));
    return u < b;
  }

  std::uint32_t apply(std::size_t i, Side side, double u, Rng& rng) {
    const std::uint32_t mask = laid_mask(i, side, u);
    // a right lay at i is a brick on column i, a left lay one on column i-1; either way a
    // unit of slope moves rightwards across that column
    const std::size_t column = side == Side::Right ? i : left_of(i);
    const std::size_t from = column, to = right_of(column);

    // walkers read the pre-event state
    for (auto& w : walkers_) {
      const bool lo_laid = mask >> w.lower & 1u, hi_laid = mask >> w.upper & 1u;
      const bool jump = side == Side::Right ? (hi_laid && !lo_laid) : (lo_laid && !hi_laid);
      if (!jump || wrap(w.position) != i) continue;
      const int n = discrepancy(w, i);
      const std::int64_t below = boundary(w, w.position - 1), top = boundary(w, w.position);
      if (walker_moves(w, i, side, u, n)) {
        if (side == Side::Right) {
          w.label = top;
          ++w.position;
        } else {
          w.label = below + 1;
          --w.position;
        }
      } else if (n > 1) {
        const auto pick = static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(n - 1)));
        w.label = side == Side::Right ? below + 1 + pick : below + 2 + pick;
      }
    }
    for (auto& d : defects_) {
      if (wrap(d.position) != i) continue;
      const bool lo_laid = mask >> d.lower & 1u, hi_laid = mask >> d.upper & 1u;
      if (side == Side::Right && hi_laid && !lo_laid) ++d.position;
      if (side == Side::Left && lo_laid && !hi_laid) --d.position;
    }
    for (std::size_t k = 0; k < configs_.size(); ++k) {
      if (!(mask >> k & 1u)) continue;
      --configs_[k][from];
      ++configs_[k][to];
      ++bricks_[k][column];
    }
    ++events_;
    if (events_ % kExactRecomputeInterval == 0) {
      recompute_rates();
    } else {
      for (std::size_t s : {from, to}) {
        tree_.set(2 * s, site_rate(s, Side::Right));
        tree_.set(2 * s + 1, site_rate(s, Side::Left));
      }
    }
    audit_tables();
    return mask;
  }

  // Evaluates the table rows wherever a walker shares its site with its linked tracer.
  void audit_tables() {
    for (const auto& w : walkers_) {
      if (!w.linked_defect) continue;
      const auto& d = defects_[*w.linked_defect];
      if (wrap(d.position) != wrap(w.position)) continue;
      const std::size_t i = wrap(w.position);
      ++coincidences_;
      const int lo = configs_[w.lower][i], hi = configs_[w.upper][i];
      bool ok;
      if (w.placement == Placement::Upper)
        ok = rows_nonnegative(upper_left_rows(f_, lo, hi)) && rows_nonnegative(upper_right_rows(f_, lo, hi));
      else
        ok = rows_nonnegative(lower_left_rows(f_, lo, hi)) && rows_nonnegative(lower_right_rows(f_, lo, hi));
      if (!ok) {
        ++negative_rows_;
        throw NegativeChannelRate("sandwich channel negative at slopes (" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + "); f is not convex there");
      }
    }
  }

  const ModelSpec* spec_;
  GrowthFunction f_;
  std::vector<std::vector<int>> configs_;
  std::vector<std::vector<std::int64_t>> bricks_;
  std::vector<DefectLink> defects_;
  std::vector<SwarmWalker> walkers_;
  std::optional<std::pair<std::size_t, std::size_t>> ordered_pair_;
  RateTree tree_;
  std::size_t L_ = 0;
  double now_ = 0.0;
  std::uint64_t events_ = 0;
  std::size_t negative_rows_ = 0;
  std::size_t coincidences_ = 0;
};

// ---------------------------------------------------------------------------
// Initial conditions

// First site >= 0 (scanning rightwards) where the pair differs.
inline std::int64_t first_discrepancy_right(const std::vector<int>& lo, const std::vector<int>& hi) {
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (hi[i] > lo[i]) return static_cast<std::int64_t>(i);
  throw std::domain_error("no discrepancy on the ring");
}

// Last site <= 0 (scanning leftwards) where the pair differs, unwrapped into (-L, 0].
inline std::int64_t first_discrepancy_left(const std::vector<int>& lo, const std::vector<int>& hi) {
  const auto L = static_cast<std::int64_t>(lo.size());
  for (std::int64_t k = 0; k < L; ++k) {
    const auto s = static_cast<std::size_t>(floor_mod(-k, L));
    if (hi[s] > lo[s]) return -k;
  }
  throw std::domain_error("no discrepancy on the ring");
}

// Two-density swarm: eta ~ mu_theta1, zeta ~ mu_theta2 by quantiles; walker from the first
// discrepancy at or right of the origin.
inline BricklayerSystem swarm_init(const ModelSpec& spec, const Marginal& m1, const Marginal& m2, std::size_t L,
                                   Rng& rng) {
  auto cs = two_density_init(spec, m1, m2, L, rng);
  std::vector<int> lo = cs.lower(), hi = cs.upper();
  const auto s0 = first_discrepancy_right(lo, hi);
  BricklayerSystem sys(spec, {lo, hi});
  sys.add_swarm(0, 1, Placement::Upper, s0);
  return sys;
}

enum class SandwichMode { Upper, Lower, Joint };

// Configuration layout of sandwich systems.
//   Upper: 0 = omega, 1 = omega + delta_Q, 2 = zeta          (walker S on (0, 2))
//   Lower: 0 = eta',  1 = omega,           2 = zeta'         (walker S' on (0, 2))
//   Joint: 0 = eta',  1 = omega, 2 = omega + delta_Q, 3 = zeta (S' on (0, 2), S on (1, 3))
struct SandwichIndex {
  std::size_t defect = 0;
  std::optional<std::size_t> upper_walker, lower_walker;
};

inline std::pair<BricklayerSystem, SandwichIndex> sandwich_init(const ModelSpec& spec, SandwichMode mode, double theta1,
                                                                double theta, double theta2, std::size_t L, Rng& rng) {
  const Marginal mw = build_marginal(spec, theta);
  const bool need_upper = mode != SandwichMode::Lower, need_lower = mode != SandwichMode::Upper;
  const std::optional<Marginal> m1 = need_lower ? std::optional<Marginal>(build_marginal(spec, theta1)) : std::nullopt;
  const std::optional<Marginal> m2 = need_upper ? std::optional<Marginal>(build_marginal(spec, theta2)) : std::nullopt;
  if (need_lower && !(theta1 < theta)) throw std::invalid_argument("lower coupling needs theta1 < theta");
  if (need_upper && !(theta < theta2)) throw std::invalid_argument("upper coupling needs theta < theta2");

  std::vector<int> eta(L), omega(L), zeta(L);
  for (std::size_t i = 1; i < L; ++i) {
    const double u = uniform01(rng);
    omega[i] = mw.quantile(u);
    if (m1) eta[i] = m1->quantile(u);
    if (m2) zeta[i] = m2->quantile(u);
  }
  if (need_lower) {
    // origin from the shifted law; omega_0 = zeta'_0 - 1 is then mu_theta distributed
    const PairLaw origin = shifted_origin_measure(quantile_coupling(*m1, mw), spec, theta);
    const auto& a = origin.sample(rng);
    eta[0] = a.lower;
    omega[0] = a.upper - 1;
  } else {
    omega[0] = sample_site(mw, rng);
  }
  if (m2) {
    // zeta_0 from the quantile coupling conditioned on omega_0
    const double lo = mw.cdf_at(omega[0] - 1), hi = mw.cdf_at(omega[0]);
    zeta[0] = m2->quantile(lo + uniform01(rng) * (hi - lo));
    if (zeta[0] < omega[0]) zeta[0] = omega[0];
  }
  for (std::size_t i = 0; i < L; ++i) {
    if (m1 && eta[i] > omega[i] + (i == 0 ? 1 : 0)) throw StochasticOrderViolation("lower pair inverted");
    if (m2 && zeta[i] < omega[i]) throw StochasticOrderViolation("upper pair inverted");
  }
  std::vector<int> omega_q = omega;
  ++omega_q[0];

  SandwichIndex idx;
  switch (mode) {
    case SandwichMode::Upper: {
      BricklayerSystem sys(spec, {omega, omega_q, zeta});
      idx.defect = sys.add_defect(0, 1, 0);
      idx.upper_walker = sys.add_swarm(0, 2, Placement::Upper, first_discrepancy_right(omega, zeta), idx.defect);
      return {std::move(sys), idx};
    }
    case SandwichMode::Lower: {
      BricklayerSystem sys(spec, {eta, omega, omega_q});
      idx.defect = sys.add_defect(1, 2, 0);
      idx.lower_walker = sys.add_swarm(0, 2, Placement::Lower, first_discrepancy_left(eta, omega_q), idx.defect);
      return {std::move(sys), idx};
    }
    case SandwichMode::Joint: {
      BricklayerSystem sys(spec, {eta, omega, omega_q, zeta});
      idx.defect = sys.add_defect(1, 2, 0);
      idx.lower_walker = sys.add_swarm(0, 2, Placement::Lower, first_discrepancy_left(eta, omega_q), idx.defect);
      idx.upper_walker = sys.add_swarm(1, 3, Placement::Upper, first_discrepancy_right(omega, zeta), idx.defect);
      return {std::move(sys), idx};
    }
  }
  throw std::logic_error("unreachable");
}

// Two defect tracers on omega <= omega' (quantile coupled at theta <= theta'), both at the origin.
inline BricklayerSystem ordered_tracers_init(const ModelSpec& spec, double theta, double theta_prime, std::size_t L,
                                             Rng& rng) {
  const Marginal a = build_marginal(spec, theta), b = build_marginal(spec, theta_prime);
  std::vector<int> w(L), wp(L);
  for (std::size_t i = 0; i < L; ++i) {
    const double u = uniform01(rng);
    w[i] = a.quantile(u);
    wp[i] = b.quantile(u);
    if (w[i] > wp[i]) throw StochasticOrderViolation("tracer environments inverted");
  }
  auto wq = w, wpq = wp;
  ++wq[0];
  ++wpq[0];
  BricklayerSystem sys(spec, {w, wq, wp, wpq});
  const auto d0 = sys.add_defect(0, 1, 0);
  const auto d1 = sys.add_defect(2, 3, 0);
  sys.order_defects(d0, d1);
  return sys;
}

}  // namespace deposim
