#ifndef OFFSET_RISK_ESTIMATORS_HPP
#define OFFSET_RISK_ESTIMATORS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "offset_risk/model.hpp"
#include "offset_risk/risk.hpp"

namespace offset_risk {

namespace detail {

/// P_n stored as per-atom weights count_a / n. Used by the estimators so
/// that a candidate costs O(support) rather than O(n).
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(const Sample& sample, const DiscreteDistribution& dist) : dist_(&dist) {
    validate_sample(sample, dist);
    const auto c = sample.counts(dist.size());
    for (std::size_t a = 0; a < c.size(); ++a) {
      if (c[a] == 0) continue;
      atoms_.push_back(a);
      weights_.push_back(static_cast<double>(c[a]) / static_cast<double>(sample.n()));
    }
    n_ = sample.n();
  }

  std::size_t n() const noexcept { return n_; }

  double risk(const LossSpec& loss, std::span<const double> f) const {
    stats::CompensatedSum s;
    for (std::size_t k = 0; k < atoms_.size(); ++k)
      s.add(weights_[k] * loss_value(loss, f[atoms_[k]], dist_->y(atoms_[k])));
    return s.value();
  }

  /// R_n(lambda * f + (1 - lambda) * g).
  double mixture_risk(const LossSpec& loss, std::span<const double> f, std::span<const double> g,
                      double lambda) const {
    stats::CompensatedSum s;
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const std::size_t a = atoms_[k];
      s.add(weights_[k] * loss_value(loss, lambda * f[a] + (1.0 - lambda) * g[a], dist_->y(a)));
    }
    return s.value();
  }

  double sq_dist(std::span<const double> f, std::span<const double> g) const {
    stats::CompensatedSum s;
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const double d = f[atoms_[k]] - g[atoms_[k]];
      s.add(weights_[k] * d * d);
    }
    return s.value();
  }

  /// P_n[(g - y)(f - g)].
  double residual_cross(std::span<const double> f, std::span<const double> g) const {
    stats::CompensatedSum s;
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const std::size_t a = atoms_[k];
      s.add(weights_[k] * (g[a] - dist_->y(a)) * (f[a] - g[a]));
    }
    return s.value();
  }

 private:
  const DiscreteDistribution* dist_;
  std::vector<std::size_t> atoms_;
  std::vector<double> weights_;
  std::size_t n_ = 0;
};

inline std::size_t erm_index(const EmpiricalMeasure& pn, const LossSpec& loss, const Dictionary& dict) {
  std::size_t best = 0;
  double best_risk = pn.risk(loss, dict.row(0));
  for (std::size_t j = 1; j < dict.m(); ++j) {
    const double r = pn.risk(loss, dict.row(j));
    if (r < best_risk) {
      best = j;
      best_risk = r;
    }
  }
  return best;
}

}  // namespace detail

/// Empirical risk minimizer over the dictionary rows; ties go to the lowest index.
inline std::size_t erm(const Sample& sample, const DiscreteDistribution& dist, const LossSpec& loss,
                       const Dictionary& dict) {
  dict.check_compatible(dist);
  return detail::erm_index(detail::EmpiricalMeasure(sample, dist), loss, dict);
}

// ---------------------------------------------------------------------------
// Star algorithm
// ---------------------------------------------------------------------------

struct StarSolution {
  std::size_t erm_index = 0;
  std::size_t partner_index = 0;
  double lambda = 1.0;
  PredictorWeights weights;
  double empirical_risk = 0.0;
};

inline constexpr int kTernaryMaxIterations = 200;
inline constexpr double kTernaryTolerance = 1e-10;

namespace detail {

/// Minimizes a convex function on [0, 1] by ternary search.
template <typename F>
double ternary_minimize(F&& f) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < kTernaryMaxIterations && hi - lo >= kTernaryTolerance; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (f(m1) <= f(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Audibert's star estimator: minimizes R_n(lambda * erm + (1 - lambda) * g)
/// jointly over g in the dictionary and lambda in [0, 1].
///
/// For the squared loss the inner problem is a clamped 1-D quadratic; other
/// losses use ternary search (the slice is convex because the loss is).
/// Partners are scanned in index order and only a strict improvement
/// replaces the incumbent, so ties resolve to the lowest partner index. A
/// partner that coincides with the ERM on the sample leaves every lambda
/// tied: lambda = 1 is reported for the ERM itself and lambda = 0 otherwise.
inline StarSolution star(const Sample& sample, const DiscreteDistribution& dist,
                         const LossSpec& loss, const Dictionary& dict) {
  dict.check_compatible(dist);
  const detail::EmpiricalMeasure pn(sample, dist);
  const std::size_t e = detail::erm_index(pn, loss, dict);
  const auto& f_erm = dict.row(e);

  StarSolution best;
  bool have = false;
  for (std::size_t j = 0; j < dict.m(); ++j) {
    const auto& g = dict.row(j);
    const double spread = pn.sq_dist(f_erm, g);
    double lambda = 0.0;
    if (j == e) {
      lambda = 1.0;
    } else if (spread > 0.0) {
      if (loss.kind == LossKind::squared) {
        lambda = std::clamp(-pn.residual_cross(f_erm, g) / spread, 0.0, 1.0);
      } else {
        lambda = detail::ternary_minimize(
            [&](double l) { return pn.mixture_risk(loss, f_erm, g, l); });
      }
    }
    const double r = pn.mixture_risk(loss, f_erm, g, lambda);
    if (!have || r < best.empirical_risk) {
      best.erm_index = e;
      best.partner_index = j;
      best.lambda = lambda;
      best.empirical_risk = r;
      have = true;
    }
  }
  best.weights = PredictorWeights::segment(dict.m(), best.erm_index, best.partner_index, best.lambda);
  return best;
}

// ---------------------------------------------------------------------------
// Midpoint estimator
// ---------------------------------------------------------------------------

inline constexpr double kDefaultMidpointC1 = 4.0;

struct MidpointSolution {
  std::size_t erm_index = 0;
  std::size_t partner_index = 0;
  PredictorWeights weights;
  std::vector<std::size_t> almost_minimizer_set;
  double empirical_risk = 0.0;
};

/// Empirical distance
/// d(g, g') = sqrt(||g - g'||_n^2 * log(2m/delta) / n) + b * log(2m/delta) / n.
inline double empirical_distance(double sq_norm, std::size_t n, std::size_t m, double b, double delta) {
  const double L = std::log(2.0 * static_cast<double>(m) / delta);
  const double nn = static_cast<double>(n);
  return std::sqrt(sq_norm * L / nn) + b * L / nn;
}

/// Midpoint estimator: restricts to the almost-minimizers
///   { g : R_n(g) <= R_n(erm) + c1 * C_b * d(erm, g) }
/// and returns the best midpoint (erm + g) / 2 among them.
inline MidpointSolution midpoint(const Sample& sample, const DiscreteDistribution& dist,
                                 const LossSpec& loss, const Dictionary& dict, double delta,
                                 double c1 = kDefaultMidpointC1) {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("midpoint: delta must lie in (0, 1)");
  if (!(c1 > 0.0)) throw ValidationError("midpoint: c1 must be positive");
  dict.check_compatible(dist);
  const detail::EmpiricalMeasure pn(sample, dist);
  const std::size_t e = detail::erm_index(pn, loss, dict);
  const auto& f_erm = dict.row(e);
  const double erm_risk = pn.risk(loss, f_erm);

  MidpointSolution sol;
  sol.erm_index = e;
  bool have = false;
  for (std::size_t j = 0; j < dict.m(); ++j) {
    const auto& g = dict.row(j);
    const double d = empirical_distance(pn.sq_dist(f_erm, g), pn.n(), dict.m(), dict.b(), delta);
    const bool admitted = j == e || pn.risk(loss, g) <= erm_risk + c1 * loss.C_b * d;
    if (!admitted) continue;
    sol.almost_minimizer_set.push_back(j);
    const double r = pn.mixture_risk(loss, f_erm, g, 0.5);
    if (!have || r < sol.empirical_risk) {
      sol.partner_index = j;
      sol.empirical_risk = r;
      have = true;
    }
  }
  sol.weights = PredictorWeights::segment(dict.m(), e, sol.partner_index, 0.5);
  return sol;
}

// ---------------------------------------------------------------------------
// Offset condition
// ---------------------------------------------------------------------------

inline constexpr double kOffsetHoldsTolerance = 1e-12;

/// R_n(f) - R_n(g*) <= -gamma ||f - g*||_n^2 + epsilon, with the averaged
/// empirical norm.
struct OffsetReport {
  double lhs = 0.0;
  double quadratic = 0.0;
  double gamma = 0.0;
  double epsilon = 0.0;
  double rhs = 0.0;
  bool holds = false;
  double margin = 0.0;
};

inline OffsetReport check_offset(const Sample& sample, const DiscreteDistribution& dist,
                                 const LossSpec& loss, std::span<const double> predictor,
                                 std::span<const double> gstar, double gamma, double epsilon) {
  if (!(gamma > 0.0)) throw ValidationError("offset condition: gamma must be positive");
  OffsetReport r;
  r.gamma = gamma;
  r.epsilon = epsilon;
  r.lhs = empirical_risk(sample, dist, loss, predictor).value -
          empirical_risk(sample, dist, loss, gstar).value;
  r.quadratic = empirical_sq_norm(sample, dist, difference(predictor, gstar));
  r.rhs = -gamma * r.quadratic + epsilon;
  r.margin = r.rhs - r.lhs;
  r.holds = r.margin >= -kOffsetHoldsTolerance;
  return r;
}

inline OffsetReport check_offset(const Sample& sample, const DiscreteDistribution& dist,
                                 const LossSpec& loss, const Dictionary& dict,
                                 const PredictorWeights& predictor, std::size_t gstar_index,
                                 double gamma, double epsilon) {
  dict.check_compatible(dist);
  return check_offset(sample, dist, loss, evaluate(dict, predictor), dict.row(gstar_index), gamma,
                      epsilon);
}

}  // namespace offset_risk

#endif  // OFFSET_RISK_ESTIMATORS_HPP
