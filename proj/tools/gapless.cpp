#include "gapless/bogoliubov.hpp"
#include "gapless/cnumber.hpp"
#include "gapless/dynamics.hpp"
#include "gapless/models.hpp"
#include "gapless/parallel.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef GAPLESS_VERSION
#define GAPLESS_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace gapless;

namespace {

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(int particles, double lambda, const std::string& what)
      : std::runtime_error(context(particles, lambda) + ": " + what) {}

 private:
  static std::string context(int particles, double lambda) {
    char buf[96];
    if (particles > 0) {
      std::snprintf(buf, sizeof buf, "N=%d, lambda=%.17g", particles, lambda);
    } else {
      std::snprintf(buf, sizeof buf, "lambda=%.17g", lambda);
    }
    return buf;
  }
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : m_columns(header.size()) {
    row_strings(header);
  }

  template <class... Ts>
  void row(const Ts&... values) {
    std::vector<std::string> cells{cell(values)...};
    if (cells.size() != m_columns) throw std::logic_error("csv column count");
    row_strings(cells);
  }

  std::string str() const { return m_out.str(); }

 private:
  static std::string cell(double v) { return num(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) m_out << ',';
      m_out << cells[i];
    }
    m_out << '\n';
  }

  std::size_t m_columns;
  std::ostringstream m_out;
};

void write_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".")
                                                    : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct Grid {
  std::vector<double> values;
  double from = 0.0;
  double to = 0.0;
  double step = 0.0;

  void add_options(CLI::App* app, double f, double t, double s) {
    from = f;
    to = t;
    step = s;
    app->add_option("--lambda", values, "Explicit lambda values")
        ->delimiter(',');
    app->add_option("--lambda-from", from, "First lambda of the grid")
        ->capture_default_str();
    app->add_option("--lambda-to", to, "Last lambda of the grid")
        ->capture_default_str();
    app->add_option("--lambda-step", step, "Grid spacing")
        ->capture_default_str();
  }

  std::vector<double> resolve() const {
    std::vector<double> g = values;
    if (g.empty()) {
      if (!(step > 0.0)) throw ConfigError("lambda-step must be positive");
      if (to < from) throw ConfigError("lambda-to is below lambda-from");
      const auto n = static_cast<long long>(std::floor((to - from) / step + 1e-9));
      for (long long i = 0; i <= n; ++i) g.push_back(from + step * static_cast<double>(i));
    }
    for (std::size_t i = 1; i < g.size(); ++i) {
      if (!(g[i] > g[i - 1])) throw ConfigError("lambda grid must be strictly increasing");
    }
    for (double l : g) {
      if (!std::isfinite(l) || l < 0.0) throw ConfigError("lambda values must be finite and >= 0");
    }
    return g;
  }

  json echo() const {
    return {{"lambda", values}, {"lambda_from", from}, {"lambda_to", to},
            {"lambda_step", step}};
  }
};

struct Common {
  std::string output;
  int threads = 1;
  std::uint64_t seed = 0;

  fs::path dir() const {
    if (!output.empty()) return output;
    if (const char* env = std::getenv("GAPLESS_OUTPUT_DIR"); env && *env) return env;
    return ".";
  }
};

void finish(const Common& common, const std::string& command, json config,
            json results, std::chrono::steady_clock::time_point start) {
  json summary;
  summary["command"] = command;
  summary["version"] = GAPLESS_VERSION;
  summary["config"] = std::move(config);
  summary["config"]["seed"] = common.seed;
  summary["results"] = std::move(results);
  write_atomic(common.dir() / (command + "_summary.json"), summary.dump(2) + "\n");

  const auto seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  json meta{{"command", command},
            {"version", GAPLESS_VERSION},
            {"finished_utc", stamp},
            {"wall_seconds", seconds},
            {"threads", common.threads}};
  write_atomic(common.dir() / (command + "_run_meta.json"), meta.dump(2) + "\n");
}

json point_json(const CNumberPoint& p) {
  return {{"x", p.x}, {"theta", p.theta}, {"delta2", p.delta2}, {"delta3", p.delta3}};
}

// landscape

struct LandscapeArgs {
  Grid grid;
  bool critical = true;
};

void run_landscape(const Common& common, const LandscapeArgs& args) {
  const auto start = std::chrono::steady_clock::now();
  const auto grid = args.grid.resolve();
  const auto scans = parallel_map(grid.size(), common.threads, [&](std::size_t i) {
    try {
      return scan_landscape(grid[i]);
    } catch (const std::exception& e) {
      throw NumericFailure(0, grid[i], e.what());
    }
  });

  Csv minima({"lambda", "rank", "x", "theta", "delta2", "delta3", "energy"});
  Csv valley_csv({"lambda", "x", "energy"});
  Csv inflection({"lambda", "x", "theta", "delta2", "delta3", "det_m"});
  json records = json::array();
  for (const auto& s : scans) {
    for (std::size_t r = 0; r < s.minima.size(); ++r) {
      const auto& m = s.minima[r];
      minima.row(s.lambda, r, m.point.x, m.point.theta, m.point.delta2,
                 m.point.delta3, m.energy);
    }
    for (const auto& [x, e] : s.marginal_curve) valley_csv.row(s.lambda, x, e);
    if (s.inflection) {
      const auto& p = s.inflection->point;
      inflection.row(s.lambda, p.x, p.theta, p.delta2, p.delta3, s.inflection->det_m);
    }
    json rec{{"lambda", s.lambda}, {"minima", s.minima.size()}};
    if (!s.minima.empty()) {
      rec["global"] = point_json(s.minima.front().point);
      rec["energy"] = s.minima.front().energy;
    }
    records.push_back(rec);
  }
  const fs::path dir = common.dir();
  write_atomic(dir / "landscape_minima.csv", minima.str());
  write_atomic(dir / "landscape_valley.csv", valley_csv.str());
  write_atomic(dir / "landscape_inflection.csv", inflection.str());

  json results{{"records", records}};
  if (args.critical) {
    results["lambda_gs"] = find_lambda_gs();
    const FoldPoint fold = find_lambda_lm_dirichlet();
    results["lambda_lm"] = fold.lambda;
    results["lambda_lm_point"] = point_json(fold.point);
  }
  json config = args.grid.echo();
  config["critical"] = args.critical;
  finish(common, "landscape", config, results, start);
}

// gap

struct GapArgs {
  Grid grid;
  std::string model = "dirichlet3";
  int k_max = 3;
  bool fold = true;
};

void run_gap(const Common& common, const GapArgs& args) {
  const auto start = std::chrono::steady_clock::now();
  const auto grid = args.grid.resolve();
  json results;
  if (args.model == "periodic3") {
    if (args.k_max < 1) throw ConfigError("k-max must be >= 1");
    Csv csv({"lambda", "stable", "det_m", "gap", "zero_modes", "symplectic_residual"});
    for (double l : grid) {
      const QuadraticForm q = periodic_quadratic(l, args.k_max);
      const double det_m = q.hessian().M().determinant().real();
      try {
        const auto r = symplectic_diagonalize(q);
        csv.row(l, true, det_m, r.energies.minCoeff(), r.zero_mode_count(),
                r.symplectic_residual);
      } catch (const UnstableExpansion&) {
        csv.row(l, false, det_m, std::nan(""), 0, std::nan(""));
      }
    }
    write_atomic(common.dir() / "gap.csv", csv.str());
    results["lambda_lm"] = find_lambda_lm_periodic();
  } else if (args.model == "dirichlet3") {
    auto curve = parallel_map(grid.size(), common.threads, [&](std::size_t i) {
      try {
        return dirichlet_gap_curve({grid[i]}).front();
      } catch (const std::exception& e) {
        throw NumericFailure(0, grid[i], e.what());
      }
    });
    Csv csv({"lambda", "kind", "has_point", "stable", "det_m", "gap", "x",
             "theta", "delta3"});
    auto emit = [&](const GapPoint& g, const char* kind) {
      csv.row(g.lambda, kind, g.has_point, g.stable, g.det_m, g.gap, g.point.x,
              g.point.theta, g.point.delta3);
    };
    for (const auto& g : curve) emit(g, "grid");
    if (args.fold) {
      const FoldPoint fold = find_lambda_lm_dirichlet();
      const GapPoint g = dirichlet_gap_at(fold.point, fold.lambda);
      emit(g, "fold");
      results["lambda_lm"] = fold.lambda;
      results["fold_gap"] = jnum(g.gap);
      results["fold_det_m"] = g.det_m;
    }
    write_atomic(common.dir() / "gap.csv", csv.str());
  } else {
    throw ConfigError("unknown gap model '" + args.model + "'");
  }
  json config = args.grid.echo();
  config["model"] = args.model;
  config["k_max"] = args.k_max;
  config["fold"] = args.fold;
  finish(common, "gap", config, results, start);
}

// coherence

struct CoherenceArgs {
  Grid grid;
  std::vector<int> particles{60};
  std::string method = "multiplier";
  std::string parity = "half-n";
  double keep_tol = 1e-4;
  double f1 = 1.0 / 3000.0;
  int n_max = 12000;
  std::size_t samples = 24000;
  bool traces = true;
  bool peak = false;
  double fine_step = 0.0005;
  double fine_halfwidth = 0.005;
  bool fit = false;
  std::optional<double> fit_lambda_lm;
};

CoherenceOptions coherence_options(const Common& common, const CoherenceArgs& a) {
  CoherenceOptions opt;
  static const std::map<std::string, ConstraintMethod> methods{
      {"multiplier", ConstraintMethod::multiplier},
      {"penalty", ConstraintMethod::penalty},
      {"none", ConstraintMethod::none}};
  if (!methods.count(a.method)) throw ConfigError("unknown method '" + a.method + "'");
  opt.method = methods.at(a.method);
  if (a.parity == "half-n") {
    opt.parity = ParityRule::half_n;
  } else if (a.parity == "nearest") {
    opt.parity = ParityRule::nearest;
  } else if (a.parity == "odd") {
    opt.parity = ParityRule::odd;
  } else if (a.parity == "even") {
    opt.parity = ParityRule::even;
  } else if (a.parity == "both") {
    opt.parity = ParityRule::both;
  } else {
    throw ConfigError("unknown parity '" + a.parity + "'");
  }
  if (!(a.keep_tol >= 0.0)) throw ConfigError("keep-tol must be non-negative");
  opt.keep_tol = a.keep_tol;
  if (!(a.f1 > 0.0) || a.n_max < 1 || a.samples < 2) {
    throw ConfigError("f1, n-max and samples must be positive");
  }
  opt.f1 = a.f1;
  opt.n_max = a.n_max;
  opt.samples = a.samples;
  opt.keep_trace = a.traces && !a.peak;
  opt.seed = common.seed;
  return opt;
}

void run_coherence(const Common& common, const CoherenceArgs& args) {
  const auto start = std::chrono::steady_clock::now();
  const auto grid = args.grid.resolve();
  const CoherenceOptions opt = coherence_options(common, args);
  if (args.particles.empty()) throw ConfigError("no particle numbers given");
  for (std::size_t i = 0; i < args.particles.size(); ++i) {
    if (args.particles[i] < 2) throw ConfigError("particles must be >= 2");
    if (i && args.particles[i] <= args.particles[i - 1]) {
      throw ConfigError("particle numbers must be strictly increasing");
    }
  }
  const fs::path dir = common.dir();
  Csv table({"particles", "lambda", "x_target", "n2_rel", "subspace_dim",
             "sector_dim", "f_mean", "t_coh"});
  auto add = [&](const CoherenceResult& r) {
    table.row(r.particles, r.lambda, r.x_target, r.n2_rel, r.subspace_dim,
              r.sector_dim, r.f_mean, r.t_coh);
  };
  json results;
  json per_n = json::array();
  std::vector<FitPoint> fit_points;

  if (args.peak) {
    if (grid.size() < 2) throw ConfigError("peak search needs a lambda range");
    Csv peaks({"particles", "lambda_peak", "t_coh_max", "t_coh_median"});
    for (int n : args.particles) {
      PeakSearch search;
      search.coarse_step = grid[1] - grid[0];
      search.fine_step = args.fine_step;
      search.fine_halfwidth = args.fine_halfwidth;
      search.threads = common.threads;
      PeakResult p;
      try {
        p = locate_coherence_peak(n, grid.front(), grid.back(), opt, search);
      } catch (const NumericFailure&) {
        throw;
      } catch (const std::exception& e) {
        throw NumericFailure(n, grid.front(), e.what());
      }
      std::vector<double> t;
      for (const auto& r : p.samples) {
        add(r);
        t.push_back(r.t_coh);
      }
      std::sort(t.begin(), t.end());
      const double median = t.size() % 2 ? t[t.size() / 2]
                                         : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
      peaks.row(n, p.lambda_peak, t.back(), median);
      per_n.push_back({{"particles", n},
                       {"lambda_peak", p.lambda_peak},
                       {"t_coh_max", t.back()},
                       {"t_coh_median", median}});
      fit_points.push_back({static_cast<double>(n), p.lambda_peak});
    }
    write_atomic(dir / "coherence_peaks.csv", peaks.str());
  } else {
    std::vector<std::pair<int, double>> jobs;
    for (int n : args.particles) {
      for (double l : grid) jobs.emplace_back(n, l);
    }
    auto res = parallel_map(jobs.size(), common.threads, [&](std::size_t i) {
      try {
        return coherence_time(jobs[i].first, jobs[i].second, opt);
      } catch (const std::exception& e) {
        throw NumericFailure(jobs[i].first, jobs[i].second, e.what());
      }
    });
    for (int n : args.particles) {
      const CoherenceResult* best = nullptr;
      for (const auto& r : res) {
        if (r.particles != n) continue;
        add(r);
        if (!best || r.t_coh > best->t_coh) best = &r;
      }
      per_n.push_back({{"particles", n}, {"argmax_lambda", best->lambda},
                       {"t_coh_max", best->t_coh}});
    }
    if (opt.keep_trace) {
      for (const auto& r : res) {
        Csv trace({"t", "n2_rel"});
        for (std::size_t i = 0; i < r.trace->times.size(); ++i) {
          trace.row(r.trace->times[i], r.trace->values[i]);
        }
        char name[96];
        std::snprintf(name, sizeof name, "trace_N%d_lambda%.6f.csv", r.particles, r.lambda);
        write_atomic(dir / "traces" / name, trace.str());
      }
    }
  }
  write_atomic(dir / "coherence.csv", table.str());
  results["per_particles"] = per_n;

  if (args.fit) {
    if (!args.peak) throw ConfigError("fit requires peak search");
    try {
      const FitResult f = fit_lambda_scaling(fit_points, args.fit_lambda_lm);
      json fit{{"lambda_lm", f.lambda_lm}, {"a", f.a}, {"b", f.b},
               {"residual", f.residual}, {"lambda_lm_fixed", args.fit_lambda_lm.has_value()}};
      write_atomic(dir / "fit.json", fit.dump(2) + "\n");
      results["fit"] = fit;
    } catch (const FitError& e) {
      throw NumericFailure(0, e.last().lambda_lm, std::string("fit: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("fit: ") + e.what());
    }
  }

  json config = args.grid.echo();
  config["particles"] = args.particles;
  config["method"] = args.method;
  config["parity"] = args.parity;
  config["keep_tol"] = args.keep_tol;
  config["f1"] = args.f1;
  config["n_max"] = args.n_max;
  config["samples"] = args.samples;
  config["traces"] = args.traces;
  config["peak"] = args.peak;
  config["fine_step"] = args.fine_step;
  config["fine_halfwidth"] = args.fine_halfwidth;
  config["fit"] = args.fit;
  config["fit_lambda_lm"] = args.fit_lambda_lm ? json(*args.fit_lambda_lm) : json(nullptr);
  finish(common, "coherence", config, results, start);
}

// probe

struct ProbeArgs {
  double delta_e = 0.1;
  double e_gamma = 0.12;
  double g = 0.05;
  double gamma = 2.0;
  double t_end = 50.0;
  std::size_t samples = 501;
};

void run_probe(const Common& common, const ProbeArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  if (a.samples < 2 || !(a.t_end > 0.0)) throw ConfigError("t-end and samples must be positive");
  const ExternalProbeParams p(a.delta_e, a.e_gamma, a.g, a.gamma);
  std::vector<double> times(a.samples);
  for (std::size_t i = 0; i < a.samples; ++i) {
    times[i] = a.t_end * static_cast<double>(i) / static_cast<double>(a.samples - 1);
  }
  const auto exact = probe_occupations_exact(p, times);
  Csv csv({"t", "nb_closed", "nc_closed", "nb_exact", "nc_exact"});
  double worst = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto c = external_probe_closed_form(p, times[i]);
    csv.row(times[i], c.nb, c.nc, exact[i].nb, exact[i].nc);
    worst = std::max({worst, std::abs(c.nb - exact[i].nb), std::abs(c.nc - exact[i].nc)});
  }
  write_atomic(common.dir() / "probe.csv", csv.str());
  json config{{"delta_e", a.delta_e}, {"e_gamma", a.e_gamma}, {"g", a.g},
              {"gamma", a.gamma}, {"t_end", a.t_end}, {"samples", a.samples}};
  json results{{"max_abs_difference", worst}, {"cutoff", probe_cutoff(a.gamma)}};
  finish(common, "probe", config, results, start);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Critical-point and slow-mode toolkit for attractive bosons"};
  app.set_version_flag("--version", std::string(GAPLESS_VERSION));
  app.set_config("--config", "", "Config file (key = value, one [section] per subcommand)");
  app.require_subcommand(1);

  Common common;
  app.add_option("-o,--output", common.output,
                 "Output directory (default: $GAPLESS_OUTPUT_DIR or .)");
  app.add_option("--threads", common.threads, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--seed", common.seed, "Seed for iterative start vectors")
      ->capture_default_str();

  LandscapeArgs landscape;
  auto* cl = app.add_subcommand("landscape", "Minima, valley curves, lambda_gs and lambda_lm");
  landscape.grid.add_options(cl, 1.0, 5.0, 0.5);
  cl->add_flag("--critical,!--no-critical", landscape.critical,
               "Also locate lambda_gs and lambda_lm");

  GapArgs gap;
  auto* cg = app.add_subcommand("gap", "Smallest Bogoliubov excitation against lambda");
  gap.grid.add_options(cg, 1.8, 2.5, 0.05);
  cg->add_option("--model", gap.model, "dirichlet3 or periodic3")->capture_default_str();
  cg->add_option("--k-max", gap.k_max, "Momentum cutoff for periodic3")->capture_default_str();
  cg->add_flag("--fold,!--no-fold", gap.fold, "Append the fold-point row (dirichlet3)");

  CoherenceArgs coh;
  auto* cc = app.add_subcommand("coherence", "Coherence-time spectroscopy of the slow state");
  coh.grid.add_options(cc, 1.9, 2.3, 0.01);
  cc->add_option("-N,--particles", coh.particles, "Particle numbers")
      ->delimiter(',')
      ->capture_default_str();
  cc->add_option("--method", coh.method, "multiplier, penalty or none")->capture_default_str();
  cc->add_option("--parity", coh.parity, "half-n, nearest, odd, even or both (parity of n2)")
      ->capture_default_str();
  cc->add_option("--keep-tol", coh.keep_tol, "Drop eigencomponents below this magnitude")
      ->capture_default_str();
  cc->add_option("--f1", coh.f1, "Base frequency")->capture_default_str();
  cc->add_option("--n-max", coh.n_max, "Highest harmonic")->capture_default_str();
  cc->add_option("--samples", coh.samples, "Time samples per period of f1")
      ->capture_default_str();
  cc->add_flag("--traces,!--no-traces", coh.traces, "Write n2(t) traces");
  cc->add_flag("--peak", coh.peak, "Locate the t_coh maximum per N");
  cc->add_option("--fine-step", coh.fine_step, "Fine-scan spacing")->capture_default_str();
  cc->add_option("--fine-halfwidth", coh.fine_halfwidth, "Fine-scan half width")
      ->capture_default_str();
  cc->add_flag("--fit", coh.fit, "Fit lambda_N = lambda_lm + a N^-b");
  cc->add_option("--fit-lambda-lm", coh.fit_lambda_lm, "Hold lambda_lm fixed in the fit");

  ProbeArgs probe;
  auto* cp = app.add_subcommand("probe", "External-mode probe: closed form against exact evolution");
  cp->add_option("--delta-e", probe.delta_e, "Gap of the Bogoliubov mode")->capture_default_str();
  cp->add_option("--e-gamma", probe.e_gamma, "Energy of the external mode")->capture_default_str();
  cp->add_option("--g", probe.g, "Coupling strength")->capture_default_str();
  cp->add_option("--gamma", probe.gamma, "Coherent amplitude of the external mode")->capture_default_str();
  cp->add_option("--t-end", probe.t_end, "Final time")->capture_default_str();
  cp->add_option("--samples", probe.samples, "Number of time samples")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*cl) run_landscape(common, landscape);
    if (*cg) run_gap(common, gap);
    if (*cc) run_coherence(common, coh);
    if (*cp) run_probe(common, probe);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure at " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
