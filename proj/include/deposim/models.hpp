#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace deposim {

class InvalidParams : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Support I = {omega_min - 1 < z < omega_max + 1}; an empty optional is infinite.
struct SupportInterval {
  std::optional<int> omega_min;
  std::optional<int> omega_max;

  bool contains(long long z) const {
    if (omega_min && z < *omega_min) return false;
    if (omega_max && z > *omega_max) return false;
    return true;
  }
  bool bounded_below() const { return omega_min.has_value(); }
  bool bounded_above() const { return omega_max.has_value(); }

  void validate() const {
    if (omega_min && *omega_min > 0) throw InvalidParams("omega_min must be <= 0");
    if (omega_max && *omega_max < 1) throw InvalidParams("omega_max must be >= 1");
  }

  // Intersection of I with [-half_width, half_width].
  std::pair<int, int> box(int half_width) const {
    int lo = -half_width, hi = half_width;
    if (omega_min) lo = std::max(lo, *omega_min);
    if (omega_max) hi = std::min(hi, *omega_max);
    return {lo, hi};
  }
};

enum class Family { SE, PAExclusion, ZR, BL, Custom };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::SE: return "SE";
    case Family::PAExclusion: return "PAExclusion";
    case Family::ZR: return "ZR";
    case Family::BL: return "BL";
    case Family::Custom: return "Custom";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "SE") return Family::SE;
  if (s == "PAExclusion" || s == "PA") return Family::PAExclusion;
  if (s == "ZR" || s == "TAZR") return Family::ZR;
  if (s == "BL") return Family::BL;
  if (s == "Custom") return Family::Custom;
  throw InvalidParams("unknown family '" + std::string(s) + "'");
}

// Nondecreasing function f on Z used by zero range and bricklayers.
//   ZR forms vanish on z <= 0 (totally asymmetric convention f(-z) = 0).
//   BL forms satisfy f(z) f(1 - z) = 1.
class GrowthFunction {
 public:
  enum class Kind { Exponential, ZrLinear, ZrTable, BlTable, Custom };

  static GrowthFunction exponential(double beta) {
    if (!(beta > 0) || !std::isfinite(beta)) throw InvalidParams("beta must be positive");
    GrowthFunction g(Kind::Exponential);
    g.beta_ = beta;
    auto cache = std::make_shared<std::vector<double>>(2 * kExpCache + 1);
    for (int z = -kExpCache; z <= kExpCache; ++z) (*cache)[z + kExpCache] = std::exp(beta * (z - 0.5));
    g.exp_cache_ = std::move(cache);
    return g;
  }

  static GrowthFunction zr_linear(double slope = 1.0) {
    if (!(slope > 0)) throw InvalidParams("slope must be positive");
    GrowthFunction g(Kind::ZrLinear);
    g.beta_ = slope;
    return g;
  }

  // values[k] = f(k + 1); continued linearly with the last increment.
  static GrowthFunction zr_table(std::vector<double> values) {
    check_table(values);
    GrowthFunction g(Kind::ZrTable);
    g.table_ = std::move(values);
    return g;
  }

  // values[k] = f(k + 1); f(z) = 1 / f(1 - z) for z <= 0.
  static GrowthFunction bl_table(std::vector<double> values) {
    check_table(values);
    GrowthFunction g(Kind::BlTable);
    g.table_ = std::move(values);
    if (g(0) > g(1)) throw InvalidParams("bricklayer table needs f(1) >= 1");
    return g;
  }

  // Caller vouches for monotonicity. log_limits are lim log f(z) at +inf and -inf.
  static GrowthFunction custom(std::function<double(int)> fn, double log_limit_up,
                               double log_limit_down, bool zr_convention) {
    GrowthFunction g(Kind::Custom);
    g.custom_ = std::make_shared<std::function<double(int)>>(std::move(fn));
    g.lim_up_ = log_limit_up;
    g.lim_down_ = log_limit_down;
    g.zr_convention_ = zr_convention;
    return g;
  }

  Kind kind() const { return kind_; }
  double beta() const { return beta_; }
  const std::vector<double>& table() const { return table_; }
  bool zero_range_form() const {
    return kind_ == Kind::ZrLinear || kind_ == Kind::ZrTable ||
           (kind_ == Kind::Custom && zr_convention_);
  }

  double operator()(int z) const {
    switch (kind_) {
      case Kind::Exponential:
        if (z >= -kExpCache && z <= kExpCache) return (*exp_cache_)[z + kExpCache];
        return std::exp(beta_ * (z - 0.5));
      case Kind::ZrLinear: return z > 0 ? beta_ * z : 0.0;
      case Kind::ZrTable: return z > 0 ? table_at(z) : 0.0;
      case Kind::BlTable: return z > 0 ? table_at(z) : 1.0 / table_at(1 - z);
      case Kind::Custom: return (*custom_)(z);
    }
    return 0.0;
  }

  double log_limit_up() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (kind_) {
      case Kind::Exponential:
      case Kind::ZrLinear: return inf;
      case Kind::ZrTable:
      case Kind::BlTable: return last_increment() > 0 ? inf : std::log(table_.back());
      case Kind::Custom: return lim_up_;
    }
    return inf;
  }

  // lim log f(-z) as z -> +inf.
  double log_limit_down() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (kind_) {
      case Kind::Exponential: return -inf;
      case Kind::ZrLinear:
      case Kind::ZrTable: return -inf;
      case Kind::BlTable: return -log_limit_up();
      case Kind::Custom: return lim_down_;
    }
    return -inf;
  }

 private:
  explicit GrowthFunction(Kind k) : kind_(k) {}

  static constexpr int kExpCache = 512;

  static void check_table(const std::vector<double>& v) {
    if (v.empty()) throw InvalidParams("f_table must not be empty");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] > 0) || !std::isfinite(v[i])) throw InvalidParams("f_table entries must be positive");
      if (i > 0 && v[i] < v[i - 1]) throw InvalidParams("f_table must be nondecreasing");
    }
  }

  double last_increment() const {
    return table_.size() >= 2 ? table_.back() - table_[table_.size() - 2] : 0.0;
  }

  double table_at(int z) const {
    const auto k = static_cast<std::size_t>(z);
    if (k <= table_.size()) return table_[k - 1];
    return table_.back() + static_cast<double>(k - table_.size()) * last_increment();
  }

  Kind kind_;
  double beta_ = 0.0;
  std::vector<double> table_;
  std::shared_ptr<std::function<double(int)>> custom_;
  std::shared_ptr<const std::vector<double>> exp_cache_;
  double lim_up_ = 0.0, lim_down_ = 0.0;
  bool zr_convention_ = false;
};

struct ModelParams {
  double c = 0.0;
  double a = 0.0;
  double beta = 0.5;
  std::vector<double> f_table;
};

class ModelSpec {
 public:
  using RateFn = std::function<double(int, int)>;

  static ModelSpec simple_exclusion() {
    ModelSpec m(Family::SE, SupportInterval{0, 1});
    return m;
  }

  static ModelSpec particle_antiparticle(double c, double a) {
    if (!(c > 0) || !(a > 0) || c > a / 2) throw InvalidParams("PAExclusion requires 0 < c <= a/2");
    ModelSpec m(Family::PAExclusion, SupportInterval{-1, 1});
    m.params_.c = c;
    m.params_.a = a;
    return m;
  }

  static ModelSpec zero_range(GrowthFunction f) {
    if (!f.zero_range_form()) throw InvalidParams("zero range needs f(0)=0 and f(-z)=0");
    ModelSpec m(Family::ZR, SupportInterval{0, std::nullopt});
    for (int z = 0; z < 64; ++z)
      if (f(z + 1) < f(z)) throw InvalidParams("zero range f must be nondecreasing");
    if (f(1) <= 0) throw InvalidParams("zero range f must be positive on z >= 1");
    m.f_ = std::move(f);
    return m;
  }

  static ModelSpec bricklayers(GrowthFunction f) {
    if (f.zero_range_form()) throw InvalidParams("bricklayers need a paired f");
    ModelSpec m(Family::BL, SupportInterval{std::nullopt, std::nullopt});
    for (int z = -64; z < 64; ++z) {
      if (f(z + 1) < f(z)) throw InvalidParams("bricklayer f must be nondecreasing");
      if (std::abs(f(z) * f(1 - z) - 1.0) > 1e-12) throw InvalidParams("bricklayer f must satisfy f(z)f(1-z)=1");
    }
    m.f_ = std::move(f);
    return m;
  }

  static ModelSpec custom(SupportInterval support, RateFn rate, std::string name = "Custom") {
    support.validate();
    ModelSpec m(Family::Custom, support);
    m.custom_ = std::make_shared<RateFn>(std::move(rate));
    m.name_ = std::move(name);
    return m;
  }

  Family family() const { return family_; }
  const SupportInterval& support() const { return support_; }
  const ModelParams& params() const { return params_; }
  const std::optional<GrowthFunction>& growth() const { return f_; }
  std::string name() const { return family_ == Family::Custom ? name_ : to_string(family_); }

  double rate(int z, int y) const {
    switch (family_) {
      case Family::SE: return (z == 1 && y == 0) ? 1.0 : 0.0;
      case Family::PAExclusion: return pa_rate(z, y);
      case Family::ZR: return (*f_)(z);
      case Family::BL: return (*f_)(z) + (*f_)(-y);
      case Family::Custom: return (*custom_)(z, y);
    }
    return 0.0;
  }

 private:
  ModelSpec(Family f, SupportInterval s) : family_(f), support_(s) {}

  double pa_rate(int z, int y) const {
    if (z == 0 && y == 0) return params_.c;
    if (z == 0 && y == -1) return params_.a / 2;
    if (z == 1 && y == 0) return params_.a / 2;
    if (z == 1 && y == -1) return params_.a;
    return 0.0;
  }

  Family family_;
  SupportInterval support_;
  ModelParams params_;
  std::optional<GrowthFunction> f_;
  std::shared_ptr<RateFn> custom_;
  std::string name_;
};

inline ModelSpec builtin(Family family, const ModelParams& p) {
  switch (family) {
    case Family::SE: return ModelSpec::simple_exclusion();
    case Family::PAExclusion: return ModelSpec::particle_antiparticle(p.c, p.a);
    case Family::ZR:
      return ModelSpec::zero_range(p.f_table.empty() ? GrowthFunction::zr_linear()
                                                     : GrowthFunction::zr_table(p.f_table));
    case Family::BL:
      return ModelSpec::bricklayers(p.f_table.empty() ? GrowthFunction::exponential(p.beta)
                                                      : GrowthFunction::bl_table(p.f_table));
    case Family::Custom: throw InvalidParams("Custom family has no builtin rates");
  }
  throw InvalidParams("unknown family");
}

// ---------------------------------------------------------------------------
// Validators

struct Violation {
  std::vector<int> args;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct ValidationReport {
  std::string check;
  std::size_t checked = 0;
  std::vector<Violation> violations;
  bool passed() const { return violations.empty(); }

  std::string summary() const {
    std::ostringstream os;
    os << check << ": " << (passed() ? "pass" : "FAIL") << " (" << checked << " cases, "
       << violations.size() << " violations)";
    return os.str();
  }
};

namespace detail {
inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}
inline constexpr std::size_t kMaxListed = 64;
inline void add_violation(ValidationReport& rep, Violation v) {
  if (rep.violations.size() < kMaxListed) rep.violations.push_back(std::move(v));
  else rep.violations.back() = std::move(v);
}
}  // namespace detail

// Rates must grow with the own slope and shrink with the right neighbor's slope.
inline ValidationReport validate_monotonicity(const ModelSpec& spec, int half_width = 12) {
  ValidationReport rep{"monotonicity", 0, {}};
  const auto [lo, hi] = spec.support().box(half_width);
  for (int y = lo; y <= hi; ++y) {
    for (int z = lo; z < hi; ++z) {
      ++rep.checked;
      const double up = spec.rate(z + 1, y), base = spec.rate(z, y);
      if (up < base && !detail::close_rel(up, base, 1e-12)) detail::add_violation(rep, {{z, y, 0}, up, base});
      const double right_up = spec.rate(y, z + 1), right_base = spec.rate(y, z);
      if (right_up > right_base && !detail::close_rel(right_up, right_base, 1e-12))
        detail::add_violation(rep, {{y, z, 1}, right_up, right_base});
    }
  }
  return rep;
}

inline ValidationReport validate_sum_rule(const ModelSpec& spec, int half_width = 12) {
  ValidationReport rep{"sum rule", 0, {}};
  const auto [lo, hi] = spec.support().box(half_width);
  for (int x = lo; x <= hi; ++x)
    for (int y = lo; y <= hi; ++y)
      for (int z = lo; z <= hi; ++z) {
        ++rep.checked;
        const double lhs = spec.rate(x, y) + spec.rate(y, z) + spec.rate(z, x);
        const double rhs = spec.rate(x, z) + spec.rate(z, y) + spec.rate(y, x);
        if (!detail::close_rel(lhs, rhs, 1e-12)) detail::add_violation(rep, {{x, y, z}, lhs, rhs});
      }
  return rep;
}

// Multiplicative identity over omega_min < x, y, z <= omega_max.
inline ValidationReport validate_product_rule(const ModelSpec& spec, int half_width = 12) {
  ValidationReport rep{"product rule", 0, {}};
  auto [lo, hi] = spec.support().box(half_width);
  if (spec.support().omega_min) lo = *spec.support().omega_min + 1;
  for (int x = lo; x <= hi; ++x)
    for (int y = lo; y <= hi; ++y)
      for (int z = lo; z <= hi; ++z) {
        ++rep.checked;
        const double lhs = spec.rate(x, y - 1) * spec.rate(y, z - 1) * spec.rate(z, x - 1);
        const double rhs = spec.rate(x, z - 1) * spec.rate(z, y - 1) * spec.rate(y, x - 1);
        if (!detail::close_rel(lhs, rhs, 1e-10)) detail::add_violation(rep, {{x, y, z}, lhs, rhs});
      }
  return rep;
}

template <class F>
ValidationReport bl_pairing_check(const F& f, int zmax) {
  ValidationReport rep{"bricklayer pairing", 0, {}};
  for (int z = -zmax; z <= zmax + 1; ++z) {
    ++rep.checked;
    const double prod = f(z) * f(-z + 1);
    if (!(std::abs(prod - 1.0) < 1e-12)) detail::add_violation(rep, {{z}, prod, 1.0});
  }
  return rep;
}

// Boundary rates must vanish exactly at finite ends of I.
inline ValidationReport validate_boundaries(const ModelSpec& spec, int half_width = 12) {
  ValidationReport rep{"boundary", 0, {}};
  const auto [lo, hi] = spec.support().box(half_width);
  for (int y = lo; y <= hi; ++y) {
    if (spec.support().omega_min) {
      ++rep.checked;
      const double v = spec.rate(*spec.support().omega_min, y);
      if (v != 0.0) detail::add_violation(rep, {{*spec.support().omega_min, y}, v, 0.0});
    }
    if (spec.support().omega_max) {
      ++rep.checked;
      const double v = spec.rate(y, *spec.support().omega_max);
      if (v != 0.0) detail::add_violation(rep, {{y, *spec.support().omega_max}, v, 0.0});
    }
  }
  return rep;
}

}  // namespace deposim
