#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "equilibrium.hpp"
#include "models.hpp"
#include "rate_tree.hpp"
#include "rng.hpp"

namespace deposim {

class WindowWrap : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

inline constexpr std::uint64_t kExactRecomputeInterval = std::uint64_t{1} << 20;

inline std::int64_t floor_mod(std::int64_t a, std::int64_t n) {
  const std::int64_t r = a % n;
  return r < 0 ? r + n : r;
}

struct EventRecord {
  double time = 0.0;
  std::size_t edge = 0;
  bool frozen = false;
};

// Single configuration on Z/L. Edge i joins sites i and i+1; a brick on column i
// moves one unit of slope from site i to site i+1.
class RingState {
 public:
  RingState(const ModelSpec& spec, std::vector<int> omega)
      : spec_(&spec), omega_(std::move(omega)), omega0_(omega_), bricks_(omega_.size(), 0), tree_(omega_.size()) {
    if (omega_.size() < 2) throw std::invalid_argument("ring needs at least two sites");
    for (int z : omega_)
      if (!spec.support().contains(z)) throw std::invalid_argument("configuration leaves the support");
    recompute_rates();
  }

  const ModelSpec& spec() const { return *spec_; }
  std::size_t size() const { return omega_.size(); }
  double now() const { return now_; }
  std::uint64_t events() const { return events_; }
  double total_rate() const { return tree_.total(); }
  double edge_rate(std::size_t i) const { return tree_.get(i); }
  const std::vector<int>& omega() const { return omega_; }
  const std::vector<int>& initial() const { return omega0_; }
  const std::vector<std::int64_t>& bricks() const { return bricks_; }

  void recompute_rates() {
    for (std::size_t i = 0; i < size(); ++i) tree_.set_leaf(i, rate_of(i));
    tree_.rebuild();
  }

  bool rates_consistent() const {
    for (std::size_t i = 0; i < size(); ++i)
      if (tree_.get(i) != rate_of(i)) return false;
    return true;
  }

  std::size_t sample_edge(Rng& rng) const { return tree_.sample(uniform01(rng) * tree_.total()); }

  void apply(std::size_t i) {
    const std::size_t L = size();
    const std::size_t j = next(i);
    --omega_[i];
    ++omega_[j];
    ++bricks_[i];
    ++events_;
    if (events_ % kExactRecomputeInterval == 0) {
      recompute_rates();
      return;
    }
    tree_.set((i + L - 1) % L, rate_of((i + L - 1) % L));
    tree_.set(i, rate_of(i));
    tree_.set(j, rate_of(j));
  }

  void fire(Rng& rng) { apply(sample_edge(rng)); }

  EventRecord step(Rng& rng) {
    if (!(total_rate() > 0)) return {now_, 0, true};
    now_ += exponential(rng, total_rate());
    const std::size_t i = sample_edge(rng);
    apply(i);
    return {now_, i, false};
  }

  void set_time(double t) { now_ = t; }

 private:
  std::size_t next(std::size_t i) const { return i + 1 == size() ? 0 : i + 1; }
  double rate_of(std::size_t i) const { return spec_->rate(omega_[i], omega_[next(i)]); }

  const ModelSpec* spec_;
  std::vector<int> omega_;
  std::vector<int> omega0_;
  std::vector<std::int64_t> bricks_;
  RateTree tree_;
  double now_ = 0.0;
  std::uint64_t events_ = 0;
};

inline RingState init_ring(const ModelSpec& spec, const Marginal& m, std::size_t L, Rng& rng) {
  if (L < 2) throw std::invalid_argument("L must be at least 2");
  return RingState(spec, sample_configuration(m, L, rng));
}

// Advances any event-driven system to t_end, calling observe(t) at each scheduled time
// (ascending) with the state as of the last event at or before t. The pending event
// beyond t_end is discarded, which is harmless for exponential clocks.
template <class System, class Observe>
void run_until(System& s, double t_end, std::span<const double> times, Observe&& observe, Rng& rng) {
  std::size_t k = 0;
  while (k < times.size() && times[k] < s.now()) ++k;
  for (;;) {
    const double R = s.total_rate();
    const double t_next = R > 0 ? s.now() + exponential(rng, R) : std::numeric_limits<double>::infinity();
    while (k < times.size() && times[k] < t_next && times[k] <= t_end) observe(times[k++]);
    if (t_next > t_end) {
      s.set_time(t_end);
      return;
    }
    s.set_time(t_next);
    s.fire(rng);
  }
}

template <class System>
void run_until(System& s, double t_end, Rng& rng) {
  run_until(s, t_end, std::span<const double>{}, [](double) {}, rng);
}

// J^(V)(t) = h_k(t) - h_0(0) with k = floor(Vt) (V >= 0) or ceil(Vt) (V < 0).
inline std::int64_t current(const RingState& s, double V, double t) {
  const auto L = static_cast<std::int64_t>(s.size());
  if (!(std::abs(V) * t < 0.5 * static_cast<double>(L)))
    throw WindowWrap("|V| t = " + std::to_string(std::abs(V) * t) + " reaches half the ring");
  const auto& b = s.bricks();
  const auto& w0 = s.initial();
  if (V >= 0) {
    const auto k = static_cast<std::int64_t>(std::floor(V * t));
    std::int64_t j = b[static_cast<std::size_t>(floor_mod(k, L))];
    for (std::int64_t i = 1; i <= k; ++i) j -= w0[static_cast<std::size_t>(floor_mod(i, L))];
    return j;
  }
  const auto k = static_cast<std::int64_t>(std::ceil(V * t));
  std::int64_t j = b[static_cast<std::size_t>(floor_mod(k, L))];
  for (std::int64_t i = k + 1; i <= 0; ++i) j += w0[static_cast<std::size_t>(floor_mod(i, L))];
  return j;
}

}  // namespace deposim
