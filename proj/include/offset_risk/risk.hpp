#ifndef OFFSET_RISK_RISK_HPP
#define OFFSET_RISK_RISK_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "offset_risk/model.hpp"

namespace offset_risk {

enum class RiskKind { population, empirical };

struct RiskValue {
  double value = 0.0;
  RiskKind kind = RiskKind::population;
};

/// g* with its population risk.
struct ReferenceSolution {
  std::size_t gstar_index = 0;
  double gstar_risk = 0.0;
};

/// R(f) = sum_a p_a l(f(x_a), y_a), exact.
inline RiskValue population_risk(const DiscreteDistribution& dist, const LossSpec& loss,
                                 std::span<const double> f) {
  dist.check_function(f);
  stats::CompensatedSum s;
  for (std::size_t a = 0; a < dist.size(); ++a)
    if (dist.prob(a) > 0.0) s.add(dist.prob(a) * loss_value(loss, f[a], dist.y(a)));
  return {s.value(), RiskKind::population};
}

inline RiskValue population_risk(const DiscreteDistribution& dist, const LossSpec& loss,
                                 const Dictionary& dict, const PredictorWeights& w) {
  return population_risk(dist, loss, evaluate(dict, w));
}

/// R_n(f) = (1/n) sum_i l(f(X_i), Y_i).
inline RiskValue empirical_risk(const Sample& sample, const DiscreteDistribution& dist,
                                const LossSpec& loss, std::span<const double> f) {
  validate_sample(sample, dist);
  dist.check_function(f);
  stats::CompensatedSum s;
  for (std::size_t id : sample.indices) s.add(loss_value(loss, f[id], dist.y(id)));
  return {s.value() / static_cast<double>(sample.n()), RiskKind::empirical};
}

inline RiskValue empirical_risk(const Sample& sample, const DiscreteDistribution& dist,
                                const LossSpec& loss, const Dictionary& dict,
                                const PredictorWeights& w) {
  return empirical_risk(sample, dist, loss, evaluate(dict, w));
}

/// argmin_j R(g_j); ties go to the lowest index.
inline ReferenceSolution population_minimizer(const DiscreteDistribution& dist, const LossSpec& loss,
                                              const Dictionary& dict) {
  dict.check_compatible(dist);
  ReferenceSolution best{0, population_risk(dist, loss, dict.row(0)).value};
  for (std::size_t j = 1; j < dict.m(); ++j) {
    const double r = population_risk(dist, loss, dict.row(j)).value;
    if (r < best.gstar_risk) best = {j, r};
  }
  return best;
}

/// R(f) - R(g*). Not clamped: improper predictors can beat g*.
inline double excess_risk(const DiscreteDistribution& dist, const LossSpec& loss,
                          const Dictionary& dict, std::span<const double> f) {
  return population_risk(dist, loss, f).value - population_minimizer(dist, loss, dict).gstar_risk;
}

inline double excess_risk(const DiscreteDistribution& dist, const LossSpec& loss,
                          const Dictionary& dict, const PredictorWeights& w) {
  return excess_risk(dist, loss, dict, evaluate(dict, w));
}

/// ||h||_n^2 = (1/n) sum_i h(X_i)^2.
inline double empirical_sq_norm(const Sample& sample, const DiscreteDistribution& dist,
                                std::span<const double> h) {
  validate_sample(sample, dist);
  dist.check_function(h);
  stats::CompensatedSum s;
  for (std::size_t id : sample.indices) s.add(h[id] * h[id]);
  return s.value() / static_cast<double>(sample.n());
}

/// E[h(X)^2], exact.
inline double population_sq_norm(const DiscreteDistribution& dist, std::span<const double> h) {
  dist.check_function(h);
  stats::CompensatedSum s;
  for (std::size_t a = 0; a < dist.size(); ++a) s.add(dist.prob(a) * h[a] * h[a]);
  return s.value();
}

struct BernsteinEntry {
  double lhs = 0.0;     // E (f - g*)^2
  double rhs = 0.0;     // (1/gamma) E[l_f - l_g*]
  double margin = 0.0;  // rhs - lhs
};

struct BernsteinReport {
  std::vector<BernsteinEntry> entries;
  double gamma = 0.0;
  bool holds = true;
  double min_margin = 0.0;
};

/// Evaluates E(f - g*)^2 <= (1/gamma) E[l_f - l_g*] for each class member.
/// Pass the empirical distribution to evaluate the condition under P_n.
inline BernsteinReport bernstein_check(const DiscreteDistribution& dist, const LossSpec& loss,
                                       const std::vector<AtomFunction>& cls,
                                       std::span<const double> gstar, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("Bernstein parameter gamma must be positive");
  dist.check_function(gstar);
  BernsteinReport report;
  report.gamma = gamma;
  const double gstar_risk = population_risk(dist, loss, gstar).value;
  bool first = true;
  for (const auto& f : cls) {
    BernsteinEntry e;
    e.lhs = population_sq_norm(dist, difference(f, gstar));
    e.rhs = (population_risk(dist, loss, f).value - gstar_risk) / gamma;
    e.margin = e.rhs - e.lhs;
    report.holds = report.holds && e.lhs <= e.rhs;
    report.min_margin = first ? e.margin : std::min(report.min_margin, e.margin);
    first = false;
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace offset_risk

#endif  // OFFSET_RISK_RISK_HPP
