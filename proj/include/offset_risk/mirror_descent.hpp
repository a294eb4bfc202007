#ifndef OFFSET_RISK_MIRROR_DESCENT_HPP
#define OFFSET_RISK_MIRROR_DESCENT_HPP

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "offset_risk/estimators.hpp"
#include "offset_risk/model.hpp"
#include "offset_risk/stats.hpp"

namespace offset_risk {

enum class MirrorMap { euclidean, negative_entropy };

inline const char* to_string(MirrorMap map) {
  return map == MirrorMap::euclidean ? "euclidean" : "negative_entropy";
}

/// grad psi. Euclidean: identity. Negative entropy sum(w log w - w): log w.
inline std::vector<double> to_mirror(MirrorMap map, std::span<const double> w) {
  std::vector<double> theta(w.begin(), w.end());
  if (map == MirrorMap::negative_entropy)
    for (auto& v : theta) v = std::log(v);
  return theta;
}

/// (grad psi)^{-1}.
inline std::vector<double> from_mirror(MirrorMap map, std::span<const double> theta) {
  std::vector<double> w(theta.begin(), theta.end());
  if (map == MirrorMap::negative_entropy)
    for (auto& v : w) v = std::exp(v);
  return w;
}

/// D_psi(x, y) = psi(x) - psi(y) - <grad psi(y), x - y>.
inline double bregman_divergence(MirrorMap map, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("bregman_divergence: dimension mismatch");
  stats::CompensatedSum s;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (map == MirrorMap::euclidean) {
      s.add(0.5 * (x[i] - y[i]) * (x[i] - y[i]));
    } else {
      if (x[i] < 0.0 || !(y[i] > 0.0))
        throw ValidationError("negative-entropy divergence needs x >= 0 and y > 0");
      s.add((x[i] > 0.0 ? x[i] * std::log(x[i] / y[i]) : 0.0) - x[i] + y[i]);
    }
  }
  return s.value();
}

/// <w, x_a> at every atom.
inline AtomFunction linear_predictor(const DiscreteDistribution& dist, std::span<const double> w) {
  if (w.size() != dist.dimension()) throw ValidationError("weight dimension does not match features");
  AtomFunction f(dist.size());
  for (std::size_t a = 0; a < dist.size(); ++a) {
    const auto& x = dist.atom(a).x;
    double v = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) v += w[j] * x[j];
    f[a] = v;
  }
  return f;
}

struct MirrorDescentOptions {
  double epsilon = 1e-2;
  double step = 1e-3;
  /// Defaults to 2 D_psi(w*, w0) / epsilon + step.
  std::optional<double> t_max;
  /// Stop as soon as delta(t) <= epsilon instead of running to t_max.
  bool stop_at_t_star = true;
};

/// Recorded path of the Euler-discretized mirror flow.
///
/// `discretization_slack` is the sum of D_psi(w_k, w_{k+1}) over the steps
/// taken before t*. By the three-point identity
///   D(w*, w_{k+1}) = D(w*, w_k) + D(w_k, w_{k+1}) - step * <grad R_n(w_k), w_k - w*>
/// it is exactly the amount by which the discrete iterates can exceed the
/// continuous-time Bregman budget; it scales as O(step).
struct MirrorDescentTrace {
  MirrorMap mirror_map = MirrorMap::euclidean;
  std::vector<double> times;
  std::vector<std::vector<double>> w_path;
  std::vector<double> delta_path;
  std::vector<double> bregman_path;  // D_psi(w*, w_t)
  std::optional<double> t_star;
  std::optional<std::size_t> t_star_index;
  double bregman_initial = 0.0;
  double epsilon = 0.0;
  double step = 0.0;
  double t_max = 0.0;
  double gamma = 0.0;  // strong-convexity modulus of the loss
  double discretization_slack = 0.0;

  const std::vector<double>& w_at_t_star() const { return w_path.at(t_star_index.value()); }
};

class MirrorDescentDiverged : public std::runtime_error {
 public:
  MirrorDescentDiverged(const std::string& what, MirrorDescentTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const MirrorDescentTrace& trace() const noexcept { return trace_; }

 private:
  MirrorDescentTrace trace_;
};

namespace detail {

/// R_n, its gradient and ||f_w - f_v||_n^2 for linear predictors.
class LinearEmpiricalObjective {
 public:
  LinearEmpiricalObjective(const Sample& sample, const DiscreteDistribution& dist, const LossSpec& loss)
      : dist_(&dist), loss_(&loss) {
    validate_sample(sample, dist);
    const auto c = sample.counts(dist.size());
    for (std::size_t a = 0; a < c.size(); ++a) {
      if (c[a] == 0) continue;
      atoms_.push_back(a);
      weights_.push_back(static_cast<double>(c[a]) / static_cast<double>(sample.n()));
    }
  }

  double predict(std::size_t a, std::span<const double> w) const {
    const auto& x = dist_->atom(a).x;
    double v = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) v += w[j] * x[j];
    return v;
  }

  double risk(std::span<const double> w) const {
    stats::CompensatedSum s;
    for (std::size_t k = 0; k < atoms_.size(); ++k)
      s.add(weights_[k] * loss_value(*loss_, predict(atoms_[k], w), dist_->y(atoms_[k])));
    return s.value();
  }

  std::vector<double> gradient(std::span<const double> w) const {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const std::size_t a = atoms_[k];
      const double d = weights_[k] * loss_grad(*loss_, predict(a, w), dist_->y(a));
      const auto& x = dist_->atom(a).x;
      for (std::size_t j = 0; j < w.size(); ++j) g[j] += d * x[j];
    }
    return g;
  }

  double sq_dist(std::span<const double> w, std::span<const double> v) const {
    stats::CompensatedSum s;
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const double d = predict(atoms_[k], w) - predict(atoms_[k], v);
      s.add(weights_[k] * d * d);
    }
    return s.value();
  }

 private:
  const DiscreteDistribution* dist_;
  const LossSpec* loss_;
  std::vector<std::size_t> atoms_;
  std::vector<double> weights_;
};

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace detail

/// Early-stopped mirror descent on the unregularized empirical risk of the
/// linear predictors f_w(x) = <w, x>.
///
/// Explicit Euler in mirror coordinates: theta_{k+1} = theta_k - step *
/// grad R_n(w_k), w_{k+1} = (grad psi)^{-1}(theta_{k+1}). Tracks
///   delta(t) = R_n(w_t) - R_n(w*) + (gamma/2) ||f_{w_t} - f_{w*}||_n^2
/// and reports t* = first recorded t with delta(t) <= epsilon.
inline MirrorDescentTrace mirror_descent(const Sample& sample, const DiscreteDistribution& dist,
                                         const LossSpec& loss, std::span<const double> w_star,
                                         std::span<const double> w0, MirrorMap map,
                                         const MirrorDescentOptions& opts) {
  if (!(opts.step > 0.0)) throw ValidationError("mirror descent: step must be positive");
  if (!(opts.epsilon > 0.0)) throw ValidationError("mirror descent: epsilon must be positive");
  if (w0.size() != dist.dimension() || w_star.size() != dist.dimension())
    throw ValidationError("mirror descent: weight dimension does not match features");
  if (map == MirrorMap::negative_entropy) {
    for (double v : w0)
      if (!(v > 0.0)) throw ValidationError("negative-entropy mirror map needs w0 > 0 coordinatewise");
    for (double v : w_star)
      if (v < 0.0) throw ValidationError("negative-entropy mirror map needs w* >= 0 coordinatewise");
  }

  const detail::LinearEmpiricalObjective obj(sample, dist, loss);
  const double risk_star = obj.risk(w_star);
  const double half_gamma = 0.5 * loss.gamma_sc;
  auto delta_of = [&](std::span<const double> w) {
    return obj.risk(w) - risk_star + half_gamma * obj.sq_dist(w, w_star);
  };

  MirrorDescentTrace trace;
  trace.mirror_map = map;
  trace.epsilon = opts.epsilon;
  trace.step = opts.step;
  trace.gamma = loss.gamma_sc;
  trace.bregman_initial = bregman_divergence(map, w_star, w0);
  trace.t_max = opts.t_max.value_or(2.0 * trace.bregman_initial / opts.epsilon + opts.step);

  const double blowup = 1e6 * detail::norm2(w0) + 1e6;
  std::vector<double> w(w0.begin(), w0.end());
  std::vector<double> theta = to_mirror(map, w);
  const auto max_steps = static_cast<std::size_t>(std::ceil(trace.t_max / opts.step));

  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * opts.step;
    const double delta = delta_of(w);
    trace.times.push_back(t);
    trace.w_path.push_back(w);
    trace.delta_path.push_back(delta);
    trace.bregman_path.push_back(bregman_divergence(map, w_star, w));
    if (!trace.t_star && delta <= opts.epsilon) {
      trace.t_star = t;
      trace.t_star_index = k;
      if (opts.stop_at_t_star) break;
    }
    if (k >= max_steps) break;

    const auto grad = obj.gradient(w);
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= opts.step * grad[j];
    auto next = from_mirror(map, theta);
    bool finite = true;
    for (double v : next) finite = finite && std::isfinite(v);
    if (!finite || detail::norm2(next) > blowup) {
      throw MirrorDescentDiverged("mirror descent diverged at t = " + std::to_string(t + opts.step),
                                  std::move(trace));
    }
    if (!trace.t_star) trace.discretization_slack += bregman_divergence(map, w, next);
    w = std::move(next);
  }
  return trace;
}


/// The three stopping-time conditions, checked on a recorded trace:
///   (1) t* <= 2 D(w*, w0) / epsilon + step,
///   (2) D(w*, w_t) <= D(w*, w0) + slack for every recorded t <= t*,
///   (3) the offset condition at w_{t*} with (gamma/2, epsilon).
/// slack = c * step is the discretization slack of the trace.
struct MirrorConditions {
  bool reached = false;
  bool time_bound = false;
  double time_margin = 0.0;
  bool bregman_bound = false;
  double bregman_margin = 0.0;
  bool offset_bound = false;
  double offset_margin = 0.0;
  double slack_constant = 0.0;  // c = slack / step
  bool all() const { return reached && time_bound && bregman_bound && offset_bound; }
};

inline constexpr double kMirrorConditionTolerance = 1e-12;

inline MirrorConditions mirror_descent_conditions(const MirrorDescentTrace& trace, const Sample& sample,
                                                  const DiscreteDistribution& dist, const LossSpec& loss,
                                                  std::span<const double> w_star) {
  MirrorConditions c;
  c.slack_constant = trace.discretization_slack / trace.step;
  if (!trace.t_star) return c;
  c.reached = true;
  const std::size_t k = *trace.t_star_index;
  c.time_margin = 2.0 * trace.bregman_initial / trace.epsilon + trace.step - *trace.t_star;
  c.time_bound = c.time_margin >= 0.0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i <= k; ++i) worst = std::max(worst, trace.bregman_path[i]);
  c.bregman_margin = trace.bregman_initial + trace.discretization_slack - worst;
  c.bregman_bound = c.bregman_margin >= -kMirrorConditionTolerance;
  const auto report = check_offset(sample, dist, loss, linear_predictor(dist, trace.w_path[k]),
                                   linear_predictor(dist, w_star), 0.5 * trace.gamma, trace.epsilon);
  c.offset_margin = report.margin;
  c.offset_bound = report.margin >= -kMirrorConditionTolerance;
  return c;
}

/// w' = -2w from w0 = 1 (one atom x = 1, y = 0, squared loss, w* = 0), whose
/// solution is w_t = exp(-2t) with delta(t) = 2 exp(-4t) and
/// t* = max(0, log(2/epsilon)/4). Compares the integrator with it.
struct AnalyticMirrorCheck {
  double max_path_error = 0.0;
  double t_star = 0.0;
  double t_star_exact = 0.0;
  double bregman_initial = 0.0;
  bool path_ok = false;
  bool t_star_ok = false;
  bool bregman_ok = false;
  bool all() const { return path_ok && t_star_ok && bregman_ok; }
};

inline AnalyticMirrorCheck analytic_mirror_check(double epsilon, double step) {
  const DiscreteDistribution dist({Atom{{1.0}, 0.0}}, {1.0}, 1.0);
  const Sample sample{{0}};
  const auto loss = LossSpec::squared(1.0);
  const std::vector<double> w_star = {0.0}, w0 = {1.0};
  MirrorDescentOptions opts;
  opts.epsilon = epsilon;
  opts.step = step;
  const auto trace = mirror_descent(sample, dist, loss, w_star, w0, MirrorMap::euclidean, opts);
  AnalyticMirrorCheck r;
  for (std::size_t i = 0; i < trace.times.size(); ++i)
    r.max_path_error = std::max(r.max_path_error, std::abs(trace.w_path[i][0] - std::exp(-2.0 * trace.times[i])));
  r.t_star = trace.t_star.value_or(std::numeric_limits<double>::infinity());
  r.t_star_exact = std::max(0.0, std::log(2.0 / epsilon) / 4.0);
  r.bregman_initial = trace.bregman_initial;
  // Euler on w' = -2w: the global error is at most step * max_t (2 t e^{-2t}) <= step / e.
  r.path_ok = r.max_path_error <= step;
  r.t_star_ok = std::abs(r.t_star - r.t_star_exact) <= (1.0 + r.t_star_exact) * step;
  r.bregman_ok = std::abs(r.bregman_initial - 0.5) <= 1e-15;
  return r;
}

}  // namespace offset_risk

#endif  // OFFSET_RISK_MIRROR_DESCENT_HPP
