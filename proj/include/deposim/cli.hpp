#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bricklayer.hpp"
#include "coupling.hpp"
#include "dynamics.hpp"
#include "equilibrium.hpp"
#include "estimators.hpp"
#include "experiment.hpp"
#include "models.hpp"
#include "oracle.hpp"
#include "version.hpp"

namespace deposim::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2 };

// ---------------------------------------------------------------------------
// Config loading

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON (" +
                      e.what() + ")");
  }
}

inline const std::map<std::string, json>& presets() {
  static const std::map<std::string, json> p{
      {"preset-se-theorem13",
       {{"family", "SE"},
        {"rho", 0.3},
        {"L", 512},
        {"t", {100.0, 200.0}},
        {"V", {-0.4, 0.0, 0.2, 0.4, 0.6, 0.8, 1.2}},
        {"replicas", 5000},
        {"seed", 13},
        {"checks", {"lln", "variance", "clt"}}}},
      {"preset-se-defect",
       {{"family", "SE"}, {"rho", 0.3}, {"L", 1152}, {"t", {50.0, 100.0, 200.0}}, {"replicas", 2000}, {"seed", 3},
        {"checks", {"qspeed"}}}},
      {"preset-se-cor32",
       {{"family", "SE"}, {"rho", 0.5}, {"L", 64}, {"t", {4.0}}, {"n", {-2, -1, 0, 1, 2}}, {"replicas", 50000},
        {"seed", 32}, {"checks", {"cor32"}}}},
      {"preset-se-oracle",
       {{"family", "SE"}, {"rho", 0.3}, {"L", 6}, {"t", {0.0, 0.5, 1.0}}, {"n", {0, 1}}, {"replicas", 200000},
        {"oracle", true}, {"seed", 7}, {"checks", {"corr"}}}},
      {"preset-bl-swarm",
       {{"family", "BL"}, {"beta", 0.5}, {"theta1", 0.0}, {"theta2", 0.5}, {"L", 512}, {"t", {50.0, 100.0}},
        {"replicas", 500}, {"seed", 10}, {"checks", {"sspeed"}}}},
      {"preset-bl-sandwich",
       {{"family", "BL"}, {"beta", 0.5}, {"theta", 0.0}, {"theta1", -0.5}, {"theta2", 0.5}, {"L", 128},
        {"t", {20.0}}, {"replicas", 1000}, {"seed", 9}, {"checks", {"sandwich"}}}},
  };
  return p;
}

inline ExperimentConfig load_config(const std::string& path_or_preset) {
  if (const auto it = presets().find(path_or_preset); it != presets().end())
    return ExperimentConfig::from_json(it->second);
  std::ifstream in(path_or_preset);
  if (!in) throw ConfigError("cannot open config '" + path_or_preset + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ExperimentConfig::from_json(parse_json_text(ss.str(), path_or_preset));
}

// ---------------------------------------------------------------------------
// Plot data

struct PlotFile {
  std::string name;
  std::string csv;
};

// Tidy CSVs: the variance-vs-V wedge, Q/t (and S/t) convergence and KS distances.
inline std::vector<PlotFile> emit_plotdata(const std::vector<ReportRow>& rows) {
  std::vector<PlotFile> out;
  auto num = [](const json& j, const char* k) { return j.contains(k) ? j[k].get<double>() : std::nan(""); };
  struct Line {
    double a, b;
    std::string text;
  };
  auto render = [&](const std::string& name, const std::string& header, std::vector<Line> lines) {
    if (lines.empty()) return;
    std::stable_sort(lines.begin(), lines.end(),
                     [](const Line& x, const Line& y) { return x.a < y.a || (x.a == y.a && x.b < y.b); });
    std::string csv = header + "\n";
    for (const auto& l : lines) csv += l.text + "\n";
    out.push_back({name, csv});
  };
  std::vector<Line> wedge, conv, ks;
  for (const auto& r : rows) {
    const double t = num(r.params, "t");
    if (r.check == "variance") {
      const double V = num(r.params, "V");
      wedge.push_back({t, V,
                       format_number(t) + "," + format_number(V) + "," + format_number(r.estimate) + "," +
                           format_number(r.ci95()) + "," + format_number(r.target)});
    } else if (r.check == "qspeed" || r.check == "sspeed") {
      conv.push_back({r.check == "qspeed" ? 0.0 : 1.0, t,
                      r.check + "," + format_number(t) + "," + format_number(r.estimate) + "," +
                          format_number(r.ci95()) + "," + format_number(r.target)});
    } else if (r.check == "clt" && !r.params.contains("skipped")) {
      const double V = num(r.params, "V");
      ks.push_back({t, V,
                    format_number(t) + "," + format_number(V) + "," + format_number(r.estimate) + "," +
                        format_number(num(r.params, "ks_raw"))});
    }
  }
  render("variance_wedge.csv", "t,V,variance_rate,ci95,target", std::move(wedge));
  render("speed_convergence.csv", "walker,t,mean_speed,ci95,target", std::move(conv));
  render("ks_curves.csv", "t,V,ks_lattice,ks_raw", std::move(ks));
  return out;
}

// V at which the variance rate is smallest for time t (the wedge minimum).
inline double wedge_minimum(const std::vector<ReportRow>& rows, double t) {
  double best = std::numeric_limits<double>::infinity(), at = std::nan("");
  for (const auto& r : rows)
    if (r.check == "variance" && r.params.value("t", -1.0) == t && r.estimate < best) {
      best = r.estimate;
      at = r.params["V"].get<double>();
    }
  return at;
}

// ---------------------------------------------------------------------------
// Outcomes

struct Outcome {
  bool asserted_failed = false;
  bool statistical_failed = false;
  int exit_code(bool strict) const { return asserted_failed || (strict && statistical_failed) ? kCheckFailed : kOk; }
};

inline Outcome tally(const std::vector<ReportRow>& rows) {
  Outcome o;
  for (const auto& r : rows) {
    if (r.pass) continue;
    if (r.asserted) o.asserted_failed = true;
    else o.statistical_failed = true;
  }
  return o;
}

inline json check_summary(const std::vector<ReportRow>& rows) {
  json s = json::object();
  for (const auto& r : rows) {
    auto& e = s[r.check];
    if (e.is_null()) e = {{"rows", 0}, {"passed", 0}, {"failed", 0}, {"asserted_failed", 0}};
    e["rows"] = e["rows"].get<int>() + 1;
    if (r.pass) e["passed"] = e["passed"].get<int>() + 1;
    else {
      e["failed"] = e["failed"].get<int>() + 1;
      if (r.asserted) e["asserted_failed"] = e["asserted_failed"].get<int>() + 1;
    }
  }
  return s;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

// ---------------------------------------------------------------------------
// Subcommand bodies

inline ModelSpec model_from_flags(const std::string& family, const ModelParams& p) {
  try {
    return builtin(parse_family(family), p);
  } catch (const InvalidParams& e) {
    throw ConfigError(e.what());
  }
}

inline int cmd_validate(const ModelSpec& spec, std::ostream& out) {
  const std::vector<ValidationReport> reps{validate_monotonicity(spec), validate_sum_rule(spec),
                                           validate_product_rule(spec), validate_boundaries(spec)};
  bool ok = true;
  for (const auto& r : reps) {
    out << r.summary() << "\n";
    ok = ok && r.passed();
  }
  out << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kOk : kCheckFailed;
}

inline std::vector<double> parse_grid(const std::string& g) {
  double lo, hi, step;
  char c1, c2;
  std::istringstream is(g);
  if (!(is >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0) || hi < lo)
    throw ConfigError("theta grid must be lo:hi:step with step > 0");
  std::vector<double> v;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long k = 0; k <= n; ++k) v.push_back(lo + static_cast<double>(k) * step);
  return v;
}

inline int cmd_table(const ModelSpec& spec, const std::vector<double>& grid, std::ostream& out) {
  out << "theta,rho,var,Er,H,C_closed,C_static,certificate\n";
  for (double th : grid) {
    const Marginal m = build_marginal(spec, th);
    const MomentTable t = moments(m, spec);
    double closed = std::nan(""), cert = std::nan("");
    try {
      closed = characteristic_speed_closed(spec, th);
    } catch (const Unsupported&) {
    }
    try {
      cert = convexity_certificate(spec, th);
    } catch (const Unsupported&) {
    }
    out << format_number(th) << "," << format_number(t.rho) << "," << format_number(t.var) << ","
        << format_number(t.Er) << "," << format_number(hydro_flux(spec, t.rho)) << "," << format_number(closed) << ","
        << format_number(characteristic_speed_static(t)) << "," << format_number(cert) << "\n";
  }
  return kOk;
}

inline int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out) {
  const ModelSpec spec = cfg.model();
  const double theta = cfg.resolved_theta(spec);
  const Marginal m = build_marginal(spec, theta);
  struct Obs {
    double t;
    std::vector<std::int64_t> J;
    std::int64_t b0;
  };
  const auto runs = run_replicas(cfg.replicas, resolve_threads(cfg.threads), [&](std::size_t r) {
    Rng rng = make_rng(stream_seed(cfg.seed, Stream::Plain), r);
    RingState s = init_ring(spec, m, cfg.L, rng);
    std::vector<Obs> obs;
    run_until(s, cfg.t_max(), cfg.t, [&](double t) {
      Obs o{t, {}, s.bricks()[0]};
      for (double v : cfg.V) o.J.push_back(current(s, v, t));
      obs.push_back(std::move(o));
    }, rng);
    return obs;
  });
  out << "replica,t_meas,V,J,bricks0\n";
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (const auto& o : runs[r])
      for (std::size_t k = 0; k < cfg.V.size(); ++k)
        out << r << "," << format_number(o.t) << "," << format_number(cfg.V[k]) << "," << o.J[k] << "," << o.b0
            << "\n";
  return kOk;
}

inline int cmd_couple(const ExperimentConfig& cfg, std::ostream& out) {
  const ModelSpec spec = cfg.model();
  const double theta = cfg.resolved_theta(spec);
  const std::string& mode = cfg.mode;
  struct Row {
    double t;
    std::string Q, S, Sp, J2;
  };
  auto str = [](std::int64_t x) { return std::to_string(x); };
  const std::uint64_t master = stream_seed(cfg.seed, Stream::Defect);
  const double tmax = cfg.t_max();
  const bool bl = spec.family() == Family::BL || spec.family() == Family::ZR;

  if (mode != "defect" && mode != "two-density" && mode != "sandwich-upper" && mode != "sandwich-lower")
    throw ConfigError("unknown coupling mode '" + mode + "'");
  if (mode == "two-density" && (!cfg.theta1 || !cfg.theta2))
    throw ConfigError("two-density mode needs theta1 and theta2");
  if ((mode == "sandwich-upper" || mode == "sandwich-lower") && !bl)
    throw ConfigError("sandwich couplings need BL or ZR");

  const auto runs = run_replicas(cfg.replicas, resolve_threads(cfg.threads), [&](std::size_t r) {
    Rng rng = make_rng(master, r);
    std::vector<Row> rows;
    if (mode == "defect") {
      const Marginal m = build_marginal(spec, theta);
      DefectStart d = attach_defect(spec, m, sample_configuration(m, cfg.L, rng), rng);
      run_until(d.state, tmax, cfg.t, [&](double t) {
        rows.push_back({t, str(*d.state.tracer()), "", "", str(d.state.second_class_current(0))});
      }, rng);
    } else if (mode == "two-density") {
      const Marginal m1 = build_marginal(spec, *cfg.theta1), m2 = build_marginal(spec, *cfg.theta2);
      if (bl) {
        BricklayerSystem sys = swarm_init(spec, m1, m2, cfg.L, rng);
        run_until(sys, tmax, cfg.t, [&](double t) {
          rows.push_back({t, "", str(sys.walker(0).position), "", str(sys.second_class_current(sys.walker(0), 0))});
        }, rng);
      } else {
        CoupledState cs = two_density_init(spec, m1, m2, cfg.L, rng);
        run_until(cs, tmax, cfg.t, [&](double t) { rows.push_back({t, "", "", "", str(cs.second_class_current(0))}); },
                  rng);
      }
    } else {
      const bool upper = mode == "sandwich-upper";
      const double t1 = cfg.theta1.value_or(theta - 0.5), t2 = cfg.theta2.value_or(theta + 0.5);
      auto [sys, idx] =
          sandwich_init(spec, upper ? SandwichMode::Upper : SandwichMode::Lower, t1, theta, t2, cfg.L, rng);
      run_until(sys, tmax, cfg.t, [&, &sys = sys, &idx = idx](double t) {
        Row row{t, str(sys.defect(idx.defect).position), "", "", ""};
        const auto& w = sys.walker(upper ? *idx.upper_walker : *idx.lower_walker);
        (upper ? row.S : row.Sp) = str(w.position);
        row.J2 = str(sys.second_class_current(w, 0));
        rows.push_back(row);
      }, rng);
    }
    return rows;
  });
  out << "replica,t_meas,Q,S,Sprime,J2nd0\n";
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (const auto& row : runs[r])
      out << r << "," << format_number(row.t) << "," << row.Q << "," << row.S << "," << row.Sp << "," << row.J2
          << "\n";
  return kOk;
}

struct OracleArgs {
  std::string check = "stationarity";
  std::size_t L = 6;
  double theta = 0.0;
  double t = 0.5;
  int n = 1;
  int cap = 8;
  double eps = 0.01;
  std::size_t replicas = 1000000;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
};

inline int cmd_oracle(const ModelSpec& spec, const OracleArgs& a, std::ostream& out) {
  auto verdict = [&](double value, bool pass, const std::string& what) {
    out << format_number(value) << "\n" << (pass ? "PASS " : "FAIL ") << what << "\n";
    return pass ? kOk : kCheckFailed;
  };
  if (a.check == "stationarity") {
    const auto s = oracle::stationarity(spec, a.theta, a.L, a.cap);
    if (a.L % 3 != 0 || s.truncated) {
      out << format_number(s.residual) << "\nREPORT residual (leak mass " << format_number(s.leak_mass)
          << "; not asserted for this ring)\n";
      return kOk;
    }
    return verdict(s.residual, s.residual < 1e-10, "stationarity residual < 1e-10");
  }
  if (a.check == "correlation") {
    const auto c = oracle::exact_correlation_detail(spec, a.theta, a.L, a.n, a.t, a.cap);
    return verdict(c.value, c.tail_bound < 1e-10, "uniformisation tail bound < 1e-10");
  }
  if (a.check == "adjoint") {
    if (a.L % 3 != 0) throw ConfigError("adjoint check needs L divisible by 3");
    const auto r = oracle::adjoint_check(spec, a.theta, a.L, a.trials, a.seed, a.cap);
    return verdict(r.max_discrepancy, r.max_discrepancy < 1e-9 && r.min_dirichlet >= -1e-12,
                   "adjoint discrepancy < 1e-9 and Dirichlet form >= 0");
  }
  if (a.check == "smalltime") {
    std::vector<int> start(a.L);
    const auto space = oracle::StateSpace::for_model(spec, a.L, a.cap);
    for (std::size_t i = 0; i < a.L; ++i) start[i] = i % 2 ? std::min(space.hi(), 1) : std::max(space.lo(), 0);
    const auto r = oracle::simulator_smalltime_check(spec, start, a.eps, a.replicas, a.seed, a.cap);
    return verdict(r.tv, r.tv < 5e-3, "total variation < 5e-3");
  }
  throw ConfigError("unknown oracle check '" + a.check + "'");
}

inline std::vector<ReportRow> run_checks(const ExperimentConfig& cfg, const std::vector<std::string>& checks) {
  std::vector<ReportRow> rows;
  for (const auto& c : checks) {
    auto r = run_check(c, cfg);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

inline int cmd_run(const std::string& source, const std::string& out_dir, bool strict, unsigned threads,
                   std::ostream& out) {
  ExperimentConfig cfg = load_config(source);
  if (threads) cfg.threads = threads;
  const auto start = std::chrono::steady_clock::now();
  const auto rows = run_checks(cfg, cfg.checks);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "report.csv", report_csv(rows));
  for (const auto& p : emit_plotdata(rows)) write_file(dir / p.name, p.csv);
  const Outcome o = tally(rows);
  json config = cfg.to_json();
  config.erase("threads");
  const json manifest{{"config", config},
                      {"seed", cfg.seed},
                      {"version", kVersion},
                      {"source", source},
                      {"checks", check_summary(rows)},
                      {"strict", strict},
                      {"exit_code", o.exit_code(strict)},
                      {"wall_clock_seconds", wall}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  out << rows.size() << " rows written to " << (dir / "report.csv").string() << "\n";
  return o.exit_code(strict);
}

// ---------------------------------------------------------------------------
// Entry point

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Deposition-model simulator, coupling engine and estimator suite"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string family = "SE";
  ModelParams params;
  auto model_flags = [&](CLI::App* s) {
    s->add_option("--family", family, "SE, PA, ZR, BL");
    s->add_option("--c", params.c, "PAExclusion c");
    s->add_option("--a", params.a, "PAExclusion a");
    s->add_option("--beta", params.beta, "bricklayer exponent");
    s->add_option("--f-table", params.f_table, "explicit f(1), f(2), ...");
  };

  auto* validate = app.add_subcommand("validate", "check a rate family against the model constraints");
  model_flags(validate);

  auto* table = app.add_subcommand("table", "equilibrium moments and speeds over a theta grid");
  model_flags(table);
  std::string grid = "-1:1:0.1";
  table->add_option("--theta-grid", grid, "lo:hi:step");

  // simulate and couple share experiment flags; a --config file supplies defaults
  std::string config_path;
  std::optional<double> f_theta, f_theta1, f_theta2;
  std::optional<std::size_t> f_L, f_replicas;
  std::optional<std::uint64_t> f_seed;
  std::vector<double> f_t, f_V;
  std::string f_mode, out_path;
  unsigned threads = 0;
  auto experiment_flags = [&](CLI::App* s) {
    model_flags(s);
    s->add_option("--config", config_path, "JSON experiment config");
    s->add_option("--theta", f_theta, "equilibrium parameter");
    s->add_option("--theta1", f_theta1, "lower density parameter (swarm, sandwich)");
    s->add_option("--theta2", f_theta2, "upper density parameter (swarm, sandwich)");
    s->add_option("--L", f_L, "ring size");
    s->add_option("--t", f_t, "measurement times");
    s->add_option("--replicas", f_replicas, "independent runs");
    s->add_option("--seed", f_seed, "master seed");
    s->add_option("--out", out_path, "output CSV (stdout if omitted)");
    s->add_option("--threads", threads, "worker threads (DEPOSIM_THREADS otherwise)");
  };
  auto* simulate = app.add_subcommand("simulate", "equilibrium runs, one CSV row per replica, time and speed");
  experiment_flags(simulate);
  simulate->add_option("--V", f_V, "observer speeds");
  auto* couple = app.add_subcommand("couple", "coupled runs: defect tracer, swarm, sandwiches");
  experiment_flags(couple);
  couple->add_option("--mode", f_mode, "defect, two-density, sandwich-upper, sandwich-lower");

  auto* estimate = app.add_subcommand("estimate", "run one estimator check from a config");
  std::string check;
  bool strict = false;
  estimate->add_option("--check", check)->required();
  estimate->add_option("--config", config_path)->required();
  estimate->add_option("--out", out_path);
  estimate->add_option("--threads", threads, "worker threads");
  estimate->add_flag("--strict", strict, "statistical failures set the exit code");

  auto* orc = app.add_subcommand("oracle", "exact finite-ring computations");
  model_flags(orc);
  OracleArgs oa;
  orc->add_option("--check", oa.check, "stationarity, correlation, adjoint, smalltime");
  orc->add_option("--L", oa.L, "ring size");
  orc->add_option("--theta", oa.theta, "equilibrium parameter");
  orc->add_option("--t", oa.t, "time for correlation");
  orc->add_option("--n", oa.n, "site offset for correlation");
  orc->add_option("--cap", oa.cap, "local alphabet cap for ZR/BL");
  orc->add_option("--eps", oa.eps, "small-time horizon");
  orc->add_option("--replicas", oa.replicas, "small-time replicas");
  orc->add_option("--trials", oa.trials, "adjoint test-function pairs");
  orc->add_option("--seed", oa.seed, "master seed");

  auto* run = app.add_subcommand("run", "run the checks of a config file or built-in preset");
  std::string source, out_dir = ".";
  run->add_option("config", source, "config path or preset name")->required();
  run->add_option("--out-dir", out_dir, "report directory (default: current directory)");
  run->add_flag("--strict", strict, "statistical failures set the exit code");
  run->add_option("--threads", threads, "worker threads (DEPOSIM_THREADS otherwise)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }

  // flags override the config file only where given
  auto experiment = [&](CLI::App* sub) {
    json j = config_path.empty() ? json::object() : load_config(config_path).to_json();
    auto given = [&](const char* flag) { return config_path.empty() || sub->count(flag) > 0; };
    if (given("--family")) j["family"] = family;
    if (given("--c")) j["c"] = params.c;
    if (given("--a")) j["a"] = params.a;
    if (given("--beta")) j["beta"] = params.beta;
    if (!params.f_table.empty()) j["f_table"] = params.f_table;
    if (f_theta) {
      j["theta"] = *f_theta;
      j.erase("rho");
    }
    if (f_theta1) j["theta1"] = *f_theta1;
    if (f_theta2) j["theta2"] = *f_theta2;
    if (f_L) j["L"] = *f_L;
    if (!f_t.empty()) j["t"] = f_t;
    if (!f_V.empty()) j["V"] = f_V;
    if (f_replicas) j["replicas"] = *f_replicas;
    if (f_seed) j["seed"] = *f_seed;
    if (!f_mode.empty()) j["mode"] = f_mode;
    if (threads) j["threads"] = threads;
    return ExperimentConfig::from_json(j);
  };
  auto emit = [&](const std::function<int(std::ostream&)>& body) {
    if (out_path.empty()) return body(out);
    std::ostringstream buf;
    const int rc = body(buf);
    write_file(out_path, buf.str());
    return rc;
  };

  try {
    if (*validate) return cmd_validate(model_from_flags(family, params), out);
    if (*table) {
      const ModelSpec spec = model_from_flags(family, params);
      return cmd_table(spec, parse_grid(grid), out);
    }
    if (*simulate) {
      const auto cfg = experiment(simulate);
      return emit([&](std::ostream& o) { return cmd_simulate(cfg, o); });
    }
    if (*couple) {
      const auto cfg = experiment(couple);
      return emit([&](std::ostream& o) { return cmd_couple(cfg, o); });
    }
    if (*estimate) {
      ExperimentConfig cfg = load_config(config_path);
      if (threads) cfg.threads = threads;
      const auto rows = run_check(check, cfg);
      const int rc = tally(rows).exit_code(strict);
      emit([&](std::ostream& o) {
        o << report_csv(rows);
        return kOk;
      });
      return rc;
    }
    if (*orc) return cmd_oracle(model_from_flags(family, params), oa, out);
    if (*run) return cmd_run(source, out_dir, strict, threads, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidParams& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ThetaOutOfRange& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const WindowWrap& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const oracle::SpaceTooLarge& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kOk;
}

}  // namespace deposim::cli
