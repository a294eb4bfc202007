#ifndef OFFSET_RISK_HARNESS_EXPERIMENTS_HPP
#define OFFSET_RISK_HARNESS_EXPERIMENTS_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "offset_risk/complexity.hpp"
#include "offset_risk/concentration.hpp"
#include "offset_risk/estimators.hpp"
#include "offset_risk/harness/config.hpp"
#include "offset_risk/harness/instances.hpp"
#include "offset_risk/harness/outputs.hpp"
#include "offset_risk/mirror_descent.hpp"
#include "offset_risk/parallel.hpp"
#include "offset_risk/risk.hpp"
#include "offset_risk/sparse.hpp"
#include "offset_risk/stats.hpp"

namespace offset_risk::harness {

/// Largest estimate / [(1/gamma) k log(ed/k) / n] seen over the full sparse
/// sweep (0.31 at the default seed), rounded up and frozen.
inline constexpr double kFrozenSparseRatio = 0.35;

/// Slope band for the log-log rate of the excess-risk quantile.
inline constexpr double kRateSlopeLow = -1.25;
inline constexpr double kRateSlopeHigh = -0.80;

struct NamedPlot {
  std::string name;
  PlotSpec spec;
  std::vector<Series> series;
};

/// Everything a command produces: a JSON summary, named tables and plots.
struct RunResult {
  std::string command;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::pair<std::string, Table>> tables;
  std::vector<NamedPlot> plots;
  bool passed = true;
};

// ---------------------------------------------------------------------------
// Aggregation rate study
// ---------------------------------------------------------------------------

/// Least-squares line through (log n, log statistic).
struct RateFit {
  std::vector<std::pair<double, double>> points;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  bool valid = false;  // false when a statistic is not positive
};

inline RateFit fit_rate(std::vector<std::pair<double, double>> points) {
  RateFit fit;
  fit.points = std::move(points);
  std::vector<double> lx, ly;
  for (const auto& [n, s] : fit.points) {
    if (!(s > 0.0) || !(n > 0.0)) return fit;
    lx.push_back(std::log(n));
    ly.push_back(std::log(s));
  }
  if (lx.size() < 2) return fit;
  const auto lf = stats::least_squares(lx, ly);
  fit.slope = lf.slope;
  fit.intercept = lf.intercept;
  fit.r_squared = lf.r_squared;
  fit.valid = true;
  return fit;
}

struct RatePoint {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double quantile = 0.0;
  double quantile_se = 0.0;
};

struct EstimatorRate {
  std::string estimator;
  std::vector<RatePoint> points;
  RateFit fit;
  bool monotone = true;  // quantile nonincreasing in n up to 3 SE
  bool slope_in_band() const { return fit.valid && fit.slope >= kRateSlopeLow && fit.slope <= kRateSlopeHigh; }
};

struct AggregateResult {
  std::size_t gstar_index = 0;
  double gstar_risk = 0.0;
  std::vector<std::size_t> n_grid;
  std::vector<std::string> estimators;
  /// excess[e][i][r]: estimator e, grid point i, replicate r.
  std::vector<std::vector<std::vector<double>>> excess;
  std::vector<EstimatorRate> rates;
};

inline PredictorWeights fit_estimator(const std::string& name, const Sample& sample, const DiscreteDistribution& dist,
                                      const LossSpec& loss, const Dictionary& dict, double delta, double c1) {
  if (name == "erm") return PredictorWeights::unit(dict.m(), erm(sample, dist, loss, dict));
  if (name == "star") return star(sample, dist, loss, dict).weights;
  if (name == "midpoint") return midpoint(sample, dist, loss, dict, delta, c1).weights;
  throw ValidationError("unknown estimator '" + name + "'");
}

inline Instance aggregate_instance(const ExperimentConfig& cfg) {
  if (cfg.aggregate.instance) return *cfg.aggregate.instance;
  return multiscale_instance(cfg.seed, cfg.aggregate.shape);
}

/// For each n and replicate: draw a sample, fit each estimator, record the
/// exact excess risk. The rate statistic is the (1 - delta) quantile.
inline AggregateResult aggregate_study(const ExperimentConfig& cfg) {
  const auto& s = cfg.aggregate;
  const Instance inst = aggregate_instance(cfg);
  const auto& dist = inst.dist;
  const auto& dict = *inst.dictionary;
  const auto loss = LossSpec::squared(dist.b());
  const auto ref = population_minimizer(dist, loss, dict);

  AggregateResult out;
  out.gstar_index = ref.gstar_index;
  out.gstar_risk = ref.gstar_risk;
  out.n_grid = s.n_grid;
  out.estimators = s.estimators;
  const std::size_t E = s.estimators.size(), G = s.n_grid.size(), R = s.replicates;
  out.excess.assign(E, std::vector<std::vector<double>>(G, std::vector<double>(R)));
  parallel_for(G * R, [&](std::size_t cell) {
    const std::size_t i = cell / R, r = cell % R;
    const Sample sample = draw_sample(dist, s.n_grid[i], cfg.seed, (static_cast<std::uint64_t>(i) << 32) | r);
    for (std::size_t e = 0; e < E; ++e) {
      const auto w = fit_estimator(s.estimators[e], sample, dist, loss, dict, s.delta, s.c1);
      out.excess[e][i][r] = population_risk(dist, loss, evaluate(dict, w)).value - ref.gstar_risk;
    }
  });

  const double q = 1.0 - s.delta;
  for (std::size_t e = 0; e < E; ++e) {
    EstimatorRate rate;
    rate.estimator = s.estimators[e];
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < G; ++i) {
      const auto& xs = out.excess[e][i];
      RatePoint p;
      p.n = s.n_grid[i];
      p.mean = stats::mean(xs);
      p.median = stats::median(xs);
      p.quantile = stats::quantile(xs, q);
      p.quantile_se = stats::quantile_standard_error(xs, q);
      rate.points.push_back(p);
      pts.emplace_back(static_cast<double>(p.n), p.quantile);
    }
    for (std::size_t i = 1; i < G; ++i) {
      const auto& a = rate.points[i - 1];
      const auto& b = rate.points[i];
      const double se = std::sqrt(a.quantile_se * a.quantile_se + b.quantile_se * b.quantile_se);
      rate.monotone = rate.monotone && b.quantile <= a.quantile + 3.0 * se;
    }
    rate.fit = fit_rate(std::move(pts));
    out.rates.push_back(std::move(rate));
  }
  return out;
}

inline RunResult run_aggregate(const ExperimentConfig& cfg) {
  const auto study = aggregate_study(cfg);
  RunResult res;
  res.command = "aggregate";
  Table trials{{"estimator", "n", "replicate", "excess_risk"}, {}};
  for (std::size_t e = 0; e < study.estimators.size(); ++e)
    for (std::size_t i = 0; i < study.n_grid.size(); ++i)
      for (std::size_t r = 0; r < study.excess[e][i].size(); ++r)
        trials.add_row({study.estimators[e], format_number(study.n_grid[i]), format_number(r),
                        format_number(study.excess[e][i][r])});
  Table rates{{"estimator", "n", "mean", "median", "quantile", "quantile_se"}, {}};
  NamedPlot plot{"rate", {"Excess-risk quantile against n", "n", "quantile of excess risk", true, true}, {}};
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& rate : study.rates) {
    Series series{rate.estimator, {}, {}};
    for (const auto& p : rate.points) {
      rates.add_row({rate.estimator, format_number(p.n), format_number(p.mean), format_number(p.median),
                     format_number(p.quantile), format_number(p.quantile_se)});
      series.x.push_back(static_cast<double>(p.n));
      series.y.push_back(p.quantile);
    }
    plot.series.push_back(std::move(series));
    fits.push_back({{"estimator", rate.estimator},
                    {"slope", rate.fit.slope},
                    {"intercept", rate.fit.intercept},
                    {"r_squared", rate.fit.r_squared},
                    {"valid", rate.fit.valid},
                    {"monotone", rate.monotone},
                    {"slope_in_band", rate.slope_in_band()}});
  }
  res.summary = {{"gstar_index", study.gstar_index},
                 {"gstar_risk", study.gstar_risk},
                 {"quantile_level", 1.0 - cfg.aggregate.delta},
                 {"slope_band", {kRateSlopeLow, kRateSlopeHigh}},
                 {"fits", fits}};
  res.tables = {{"trials", std::move(trials)}, {"rates", std::move(rates)}};
  res.plots.push_back(std::move(plot));
  return res;
}

// ---------------------------------------------------------------------------
// Complexity
// ---------------------------------------------------------------------------

struct OffsetLocalComparison {
  ComplexityEstimate offset;
  ComplexityEstimate local;
  double combined_se = 0.0;
  bool passes = false;  // offset <= local + 3 combined SE
};

inline OffsetLocalComparison compare_offset_local(const DiscreteDistribution& dist, const FiniteClassSpec& cls,
                                                  double gamma, std::size_t n, std::size_t replicates,
                                                  std::uint64_t seed) {
  OffsetLocalComparison c;
  c.offset = offset_complexity_mc(dist, cls, gamma, n, replicates, seed);
  c.local = local_complexity_fixed_point(dist, cls, gamma, n, replicates, kDefaultFixedPointTolerance, seed);
  c.combined_se = combined_std_error(c.offset, c.local);
  c.passes = c.offset.value <= c.local.value + 3.0 * c.combined_se;
  return c;
}

struct SparseSweepPoint {
  std::size_t d = 0, k = 0;
  double gamma = 0.0;
  SparseBoundReport report;
};

/// One Gaussian design per (d, k); the same sign draws are reused across gamma.
inline std::vector<SparseSweepPoint> sparse_sweep(const std::vector<std::size_t>& ds, const std::vector<std::size_t>& ks,
                                                  const std::vector<double>& gammas, std::size_t n,
                                                  std::size_t sigma_draws, std::uint64_t seed) {
  std::vector<SparseSweepPoint> out;
  for (std::size_t d : ds)
    for (std::size_t k : ks) {
      if (k > d) continue;
      const auto phi = gaussian_design(n, d, seed, d * 1000 + k);
      for (double g : gammas) {
        SparseClassSpec spec{phi, k, g};
        out.push_back({d, k, g, sparse_offset_bound_check(spec, sigma_draws, seed)});
      }
    }
  return out;
}

inline RunResult run_complexity(const ExperimentConfig& cfg) {
  const auto& s = cfg.complexity;
  RunResult res;
  res.command = "complexity";
  Table cmp{{"class", "support", "functions", "offset", "offset_se", "local_fixed_point", "local_se", "combined_se",
             "passes"},
            {}};
  std::size_t passing = 0;
  for (std::size_t c = 0; c < s.classes; ++c) {
    const auto rc = random_star_class(cfg.seed, c);
    const auto r = compare_offset_local(rc.dist, rc.cls, s.gamma, s.n, s.replicates, cfg.seed + c);
    passing += r.passes;
    cmp.add_row({format_number(c), format_number(rc.dist.size()), format_number(rc.cls.base.size()),
                 format_number(r.offset.value), format_number(r.offset.std_error), format_number(r.local.value),
                 format_number(r.local.std_error), format_number(r.combined_se), r.passes ? "true" : "false"});
  }
  Table sweep{{"d", "k", "gamma", "estimate", "std_error", "reference_rate", "ratio"}, {}};
  double max_ratio = 0.0;
  for (const auto& p : sparse_sweep(s.sparse_d, s.sparse_k, s.sparse_gamma, s.sparse_n, s.sigma_draws, cfg.seed)) {
    max_ratio = std::max(max_ratio, p.report.ratio);
    sweep.add_row({format_number(p.d), format_number(p.k), format_number(p.gamma), format_number(p.report.estimate),
                   format_number(p.report.std_error), format_number(p.report.reference_rate),
                   format_number(p.report.ratio)});
  }
  res.summary = {{"classes", s.classes},
                 {"offset_below_local", passing},
                 {"sparse_max_ratio", max_ratio},
                 {"sparse_frozen_constant", kFrozenSparseRatio}};
  res.passed = max_ratio <= kFrozenSparseRatio;
  res.tables = {{"offset_vs_local", std::move(cmp)}, {"sparse_sweep", std::move(sweep)}};
  return res;
}

// ---------------------------------------------------------------------------
// Concentration
// ---------------------------------------------------------------------------

struct SetupConcentration {
  ConcentrationReport mgf;
  TailReport tail;
};

inline SetupConcentration concentration_for_setup(const MultiplierSetup& setup, std::size_t n, std::size_t replicates,
                                                  std::size_t lambda_points, const std::vector<double>& deltas,
                                                  std::size_t bootstrap, std::uint64_t seed) {
  const auto sim = simulate_multiplier(setup, n, replicates, seed);
  SetupConcentration out;
  out.mgf = mgf_verify_draws(sim, setup.eta(), default_lambda_grid(setup.eta(), lambda_points), seed, bootstrap);
  out.tail = tail_verify_draws(sim.U, setup.eta(), deltas);
  return out;
}

inline RunResult run_concentration(const ExperimentConfig& cfg) {
  const auto& s = cfg.concentration;
  RunResult res;
  res.command = "concentration";
  Table mgf{{"setup", "lambda", "log_mgf", "ci_lower", "ci_upper", "bound", "violation"}, {}};
  Table tail{{"setup", "delta", "threshold", "frequency", "std_error", "passes"}, {}};
  NamedPlot plot{"mgf", {"Centred log-MGF of U against the sub-gamma bound", "lambda", "log E exp(lambda (U - EU))",
                         false, false},
                 {}};
  std::size_t violations = 0, tail_failures = 0, self_loc = 0;
  for (std::size_t k = 0; k < s.setups; ++k) {
    const auto setup = random_multiplier_setup(cfg.seed, k);
    const auto r = concentration_for_setup(setup, s.n, s.replicates, s.lambda_points, s.deltas, s.bootstrap,
                                           cfg.seed + k);
    Series emp{"setup " + std::to_string(k) + " empirical", r.mgf.lambda_grid, r.mgf.log_mgf_hat};
    Series bnd{"setup " + std::to_string(k) + " bound", r.mgf.lambda_grid, r.mgf.bound};
    for (std::size_t l = 0; l < r.mgf.lambda_grid.size(); ++l) {
      const bool v = r.mgf.ci_lower[l] > r.mgf.bound[l];
      mgf.add_row({format_number(k), format_number(r.mgf.lambda_grid[l]), format_number(r.mgf.log_mgf_hat[l]),
                   format_number(r.mgf.ci_lower[l]), format_number(r.mgf.ci_upper[l]), format_number(r.mgf.bound[l]),
                   v ? "true" : "false"});
    }
    for (const auto& e : r.tail.entries)
      tail.add_row({format_number(k), format_number(e.delta), format_number(e.threshold), format_number(e.frequency),
                    format_number(e.std_error), e.passes ? "true" : "false"});
    violations += r.mgf.violations.size();
    tail_failures += r.tail.all_pass ? 0 : 1;
    self_loc += r.mgf.self_localization_failures;
    plot.series.push_back(std::move(emp));
    plot.series.push_back(std::move(bnd));
  }
  res.summary = {{"setups", s.setups},
                 {"mgf_violations", violations},
                 {"tail_failures", tail_failures},
                 {"self_localization_failures", self_loc}};
  res.passed = violations == 0 && tail_failures == 0 && self_loc == 0;
  res.tables = {{"mgf", std::move(mgf)}, {"tail", std::move(tail)}};
  res.plots.push_back(std::move(plot));
  return res;
}

// ---------------------------------------------------------------------------
// Mirror descent
// ---------------------------------------------------------------------------

inline MirrorMap parse_mirror_map(const std::string& name) {
  if (name == "euclidean") return MirrorMap::euclidean;
  if (name == "negative_entropy") return MirrorMap::negative_entropy;
  throw ValidationError("unknown mirror map '" + name + "'");
}

struct MirrorRun {
  MirrorDescentTrace trace;
  MirrorConditions conditions;
};

/// Runs the flow from w0 = (1/d, ..., 1/d) on a random linear instance.
inline MirrorRun mirror_on_instance(const LinearInstance& inst, std::size_t n, MirrorMap map, double epsilon,
                                    double step, std::uint64_t seed, std::uint64_t replicate) {
  const Sample sample = draw_sample(inst.dist, n, seed, replicate);
  const auto loss = LossSpec::squared(inst.dist.b());
  const std::vector<double> w0(inst.w_star.size(), 1.0 / static_cast<double>(inst.w_star.size()));
  MirrorDescentOptions opts;
  opts.epsilon = epsilon;
  opts.step = step;
  MirrorRun run;
  run.trace = mirror_descent(sample, inst.dist, loss, inst.w_star, w0, map, opts);
  run.conditions = mirror_descent_conditions(run.trace, sample, inst.dist, loss, inst.w_star);
  return run;
}

inline RunResult run_mirror(const ExperimentConfig& cfg) {
  const auto& s = cfg.mirror;
  RunResult res;
  res.command = "mirror";
  Table t{{"instance", "mirror_map", "dimension", "bregman_initial", "t_star", "time_margin", "bregman_margin",
           "offset_margin", "slack_constant", "passes"},
          {}};
  std::size_t failures = 0;
  NamedPlot plot{"delta", {"delta(t) along the flow", "t", "delta(t)", false, true}, {}};
  for (std::size_t i = 0; i < s.instances; ++i) {
    const auto inst = random_linear_instance(cfg.seed, i);
    for (const auto& name : s.maps) {
      const auto run = mirror_on_instance(inst, s.n, parse_mirror_map(name), s.epsilon, s.step, cfg.seed, i);
      const auto& c = run.conditions;
      failures += c.all() ? 0 : 1;
      t.add_row({format_number(i), name, format_number(inst.w_star.size()), format_number(run.trace.bregman_initial),
                 run.trace.t_star ? format_number(*run.trace.t_star) : "not reached", format_number(c.time_margin),
                 format_number(c.bregman_margin), format_number(c.offset_margin), format_number(c.slack_constant),
                 c.all() ? "true" : "false"});
      if (i == 0) plot.series.push_back({name, run.trace.times, run.trace.delta_path});
    }
  }
  const auto analytic = analytic_mirror_check(s.epsilon, s.step);
  res.summary = {{"runs", s.instances * s.maps.size()},
                 {"failures", failures},
                 {"analytic",
                  {{"max_path_error", analytic.max_path_error},
                   {"t_star", analytic.t_star},
                   {"t_star_exact", analytic.t_star_exact},
                   {"passes", analytic.all()}}}};
  res.passed = failures == 0 && analytic.all();
  res.tables = {{"runs", std::move(t)}};
  res.plots.push_back(std::move(plot));
  return res;
}

// ---------------------------------------------------------------------------
// Output emission
// ---------------------------------------------------------------------------

enum class OutputFormat { csv, json, svg };

inline OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  if (s == "svg") return OutputFormat::svg;
  throw ValidationError("unknown output format '" + s + "'");
}

/// Writes <command>_summary.json always, plus one CSV per table (csv), the
/// tables inside the JSON (json) or one SVG per plot (svg). Returns the
/// written paths in a fixed order.
inline std::vector<std::filesystem::path> emit_outputs(const RunResult& res, OutputFormat format,
                                                       const std::filesystem::path& out_dir, const Provenance& prov) {
  std::vector<std::filesystem::path> written;
  nlohmann::json doc = {{"command", res.command},
                        {"config_hash", prov.config_hash},
                        {"seed", prov.seed},
                        {"passed", res.passed},
                        {"summary", res.summary}};
  if (format == OutputFormat::json) {
    doc["tables"] = nlohmann::json::object();
    for (const auto& [name, table] : res.tables) doc["tables"][name] = table_to_json(with_provenance(table, prov));
  }
  const auto summary_path = out_dir / (res.command + "_summary.json");
  write_text(summary_path, doc.dump(2) + "\n");
  written.push_back(summary_path);
  if (format == OutputFormat::csv) {
    for (const auto& [name, table] : res.tables) {
      const auto p = out_dir / (res.command + "_" + name + ".csv");
      write_text(p, to_csv(with_provenance(table, prov)));
      written.push_back(p);
    }
  } else if (format == OutputFormat::svg) {
    for (const auto& plot : res.plots) {
      const auto p = out_dir / (res.command + "_" + plot.name + ".svg");
      write_text(p, render_svg(plot.spec, plot.series, prov));
      written.push_back(p);
    }
  }
  return written;
}

}  // namespace offset_risk::harness

#endif  // OFFSET_RISK_HARNESS_EXPERIMENTS_HPP
