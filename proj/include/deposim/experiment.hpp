#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "equilibrium.hpp"
#include "models.hpp"

namespace deposim {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string family = "SE";
  ModelParams params;
  std::optional<double> theta, rho;
  std::optional<double> theta1, theta2;
  std::size_t L = 512;
  std::vector<double> t{100.0};
  std::vector<double> V{0.0};
  std::size_t replicas = 1000;
  std::uint64_t seed = 1;
  std::string mode = "defect";
  std::vector<int> n{0};
  int n_max = 10;
  unsigned threads = 0;
  bool oracle = false;
  int cap = 8;
  double eps = 0.01;
  std::vector<std::string> checks;

  ModelSpec model() const {
    try {
      return builtin(parse_family(family), params);
    } catch (const InvalidParams& e) {
      throw ConfigError(e.what());
    }
  }

  double resolved_theta(const ModelSpec& spec) const {
    if (theta) return *theta;
    if (rho) return theta_of_rho(spec, *rho);
    return 0.0;
  }

  double t_max() const { return t.empty() ? 0.0 : *std::max_element(t.begin(), t.end()); }

  void validate() const {
    (void)model();
    if (L < 2) throw ConfigError("L must be at least 2");
    if (replicas == 0) throw ConfigError("replicas must be positive");
    for (double x : t)
      if (!(x >= 0) || !std::isfinite(x)) throw ConfigError("times must be finite and nonnegative");
    for (std::size_t k = 1; k < t.size(); ++k)
      if (!(t[k] > t[k - 1])) throw ConfigError("times must be strictly increasing");
    for (double v : V)
      if (!(std::abs(v) * t_max() < 0.5 * static_cast<double>(L)))
        throw ConfigError("window guard |V| t < L/2 violated for V = " + std::to_string(v));
    if (oracle && L % 3 != 0) throw ConfigError("oracle comparison needs L divisible by 3");
    if (theta1 && theta2 && *theta1 > *theta2) throw ConfigError("theta1 must not exceed theta2");
  }

  json to_json() const {
    json j;
    j["family"] = family;
    j["c"] = params.c;
    j["a"] = params.a;
    j["beta"] = params.beta;
    if (!params.f_table.empty()) j["f_table"] = params.f_table;
    if (theta) j["theta"] = *theta;
    if (rho) j["rho"] = *rho;
    if (theta1) j["theta1"] = *theta1;
    if (theta2) j["theta2"] = *theta2;
    j["L"] = L;
    j["t"] = t;
    j["V"] = V;
    j["replicas"] = replicas;
    j["seed"] = seed;
    j["mode"] = mode;
    j["n"] = n;
    j["n_max"] = n_max;
    j["threads"] = threads;
    j["oracle"] = oracle;
    j["cap"] = cap;
    j["eps"] = eps;
    j["checks"] = checks;
    return j;
  }

  static ExperimentConfig from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::vector<std::string> known{"family", "c",      "a",     "beta",   "f_table", "theta",
                                                "rho",    "theta1", "theta2", "L",     "t",       "V",
                                                "replicas", "seed", "mode",  "n",      "n_max",   "threads",
                                                "oracle", "cap",    "eps",   "checks", "name"};
    for (const auto& [k, _] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");
    ExperimentConfig c;
    try {
      auto num_list = [&](const char* key, std::vector<double>& out) {
        if (!j.contains(key)) return;
        out.clear();
        if (j[key].is_array()) for (const auto& x : j[key]) out.push_back(x.get<double>());
        else out.push_back(j[key].get<double>());
      };
      if (j.contains("family")) c.family = j["family"].get<std::string>();
      if (j.contains("c")) c.params.c = j["c"].get<double>();
      if (j.contains("a")) c.params.a = j["a"].get<double>();
      if (j.contains("beta")) c.params.beta = j["beta"].get<double>();
      if (j.contains("f_table")) c.params.f_table = j["f_table"].get<std::vector<double>>();
      if (j.contains("theta")) c.theta = j["theta"].get<double>();
      if (j.contains("rho")) c.rho = j["rho"].get<double>();
      if (j.contains("theta1")) c.theta1 = j["theta1"].get<double>();
      if (j.contains("theta2")) c.theta2 = j["theta2"].get<double>();
      if (j.contains("L")) c.L = j["L"].get<std::size_t>();
      num_list("t", c.t);
      num_list("V", c.V);
      if (j.contains("replicas")) c.replicas = j["replicas"].get<std::size_t>();
      if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
      if (j.contains("mode")) c.mode = j["mode"].get<std::string>();
      if (j.contains("n")) {
        c.n.clear();
        if (j["n"].is_array()) for (const auto& x : j["n"]) c.n.push_back(x.get<int>());
        else c.n.push_back(j["n"].get<int>());
      }
      if (j.contains("n_max")) c.n_max = j["n_max"].get<int>();
      if (j.contains("threads")) c.threads = j["threads"].get<unsigned>();
      if (j.contains("oracle")) c.oracle = j["oracle"].get<bool>();
      if (j.contains("cap")) c.cap = j["cap"].get<int>();
      if (j.contains("eps")) c.eps = j["eps"].get<double>();
      if (j.contains("checks")) c.checks = j["checks"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
  }
};

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return a.to_json() == b.to_json(); }

// ---------------------------------------------------------------------------
// Report rows

struct ReportRow {
  std::string check;
  json params = json::object();
  double estimate = 0.0;
  double se = 0.0;  // standard error; ci95 = 1.96 se
  double target = std::numeric_limits<double>::quiet_NaN();
  bool pass = true;
  bool asserted = false;  // exact check (gates the exit code) rather than statistical
  bool has_z = true;      // false for threshold rows (e.g. KS distance against a limit)

  double ci95() const { return 1.96 * se; }
  double zscore() const {
    if (!has_z || std::isnan(target)) return std::numeric_limits<double>::quiet_NaN();
    if (se > 0) return (estimate - target) / se;
    return estimate == target ? 0.0 : std::numeric_limits<double>::infinity();
  }
};

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "check,param_json,estimate,ci95,target,zscore,pass\n";
  for (const auto& r : rows) {
    out += csv_quote(r.check) + "," + csv_quote(r.params.dump()) + "," + format_number(r.estimate) + "," +
           format_number(r.ci95()) + "," + format_number(r.target) + "," + format_number(r.zscore()) + "," +
           (r.pass ? "true" : "false") + "\n";
  }
  return out;
}

// |z| <= 3 pass flag for a statistical row.
inline ReportRow stat_row(std::string check, json params, double estimate, double se, double target) {
  ReportRow r{std::move(check), std::move(params), estimate, se, target, true, false};
  const double z = r.zscore();
  r.pass = std::isnan(z) || std::abs(z) <= 3.0;
  return r;
}

// estimate < limit; target column carries the limit.
inline ReportRow threshold_row(std::string check, json params, double estimate, double limit, bool asserted = false) {
  ReportRow r{std::move(check), std::move(params), estimate, 0.0, limit, estimate < limit, asserted};
  r.has_z = false;
  return r;
}

// |estimate - target| <= tol, asserted.
inline ReportRow exact_row(std::string check, json params, double estimate, double target, double tol) {
  ReportRow r{std::move(check), std::move(params), estimate, 0.0, target, std::abs(estimate - target) <= tol, true};
  r.params["tol"] = tol;
  return r;
}

// ---------------------------------------------------------------------------
// Replica fan-out

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DEPOSIM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Runs fn(index) for every replica; results are stored by index, so the outcome does not
// depend on scheduling.
template <class Fn>
auto run_replicas(std::size_t count, unsigned threads, Fn&& fn) {
  using Result = decltype(fn(std::size_t{0}));
  std::vector<Result> out(count);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_lock;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> g(error_lock);
          if (!error) error = std::current_exception();
          next.store(count);
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace deposim
