#ifndef OFFSET_RISK_CONCENTRATION_HPP
#define OFFSET_RISK_CONCENTRATION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "offset_risk/complexity.hpp"
#include "offset_risk/model.hpp"
#include "offset_risk/parallel.hpp"
#include "offset_risk/rng.hpp"
#include "offset_risk/stats.hpp"

namespace offset_risk {

/// One atom of the joint law of (X, zeta): a feature id and a multiplier.
struct JointAtom {
  std::size_t x = 0;
  double zeta = 0.0;
};

/// Shifted multiplier process setup: a finite joint law of (X, zeta), a
/// star-shaped class over the X ids and the penalty gamma. kappa and the
/// multiplier bound are read off the positive-mass atoms.
class MultiplierSetup {
 public:
  MultiplierSetup(std::vector<JointAtom> atoms, std::vector<double> probs, FiniteClassSpec cls,
                  double gamma)
      : atoms_(std::move(atoms)), probs_(std::move(probs)), cls_(std::move(cls)), gamma_(gamma) {
    if (atoms_.empty()) throw ValidationError("multiplier setup: joint support is empty");
    if (probs_.size() != atoms_.size()) throw ValidationError("multiplier setup: probs length mismatch");
    if (!cls_.star_hull) throw ValidationError("multiplier setup: class must be star-shaped");
    if (!(gamma_ > 0.0)) throw ValidationError("multiplier setup: gamma must be positive");
    if (cls_.base.empty()) throw ValidationError("function class is empty");
    for (double p : probs_)
      if (!(p >= 0.0)) throw ValidationError("multiplier setup: probabilities must be nonnegative");
    if (std::abs(stats::sum(probs_) - 1.0) > kProbabilityTolerance)
      throw ValidationError("multiplier setup: probabilities do not sum to 1");
    const std::size_t xs = cls_.base.front().size();
    for (const auto& h : cls_.base)
      if (h.size() != xs) throw ValidationError("multiplier setup: class functions differ in length");
    for (const auto& a : atoms_)
      if (a.x >= xs) throw ValidationError("multiplier setup: feature id out of range");

    for (std::size_t a = 0; a < atoms_.size(); ++a) {
      if (probs_[a] <= 0.0) continue;
      sigma_bound_ = std::max(sigma_bound_, std::abs(atoms_[a].zeta));
      for (const auto& h : cls_.base) kappa_ = std::max(kappa_, std::abs(h[atoms_[a].x]));
    }
    eta_ = 8.0 * (sigma_bound_ * sigma_bound_ / gamma_ + gamma_ * kappa_ * kappa_);

    cross_.resize(cls_.base.size());
    second_.resize(cls_.base.size());
    for (std::size_t h = 0; h < cls_.base.size(); ++h) {
      stats::CompensatedSum c, s;
      for (std::size_t a = 0; a < atoms_.size(); ++a) {
        const double v = cls_.base[h][atoms_[a].x];
        c.add(probs_[a] * atoms_[a].zeta * v);
        s.add(probs_[a] * v * v);
      }
      cross_[h] = c.value();
      second_[h] = s.value();
    }
    sampler_ = CategoricalSampler(probs_);
  }

  const std::vector<JointAtom>& atoms() const noexcept { return atoms_; }
  std::span<const double> probs() const noexcept { return probs_; }
  const FiniteClassSpec& function_class() const noexcept { return cls_; }
  double gamma() const noexcept { return gamma_; }
  double kappa() const noexcept { return kappa_; }
  double sigma_bound() const noexcept { return sigma_bound_; }
  /// eta = 8 (sigma^2 / gamma + gamma kappa^2).
  double eta() const noexcept { return eta_; }
  /// E[zeta h(X)] per base function.
  std::span<const double> cross_moments() const noexcept { return cross_; }
  /// E[h(X)^2] per base function.
  std::span<const double> second_moments() const noexcept { return second_; }

  std::vector<std::size_t> draw(std::size_t n, std::uint64_t seed, std::uint64_t replicate) const {
    CounterRng rng(seed, replicate, Stream::sample);
    std::vector<std::size_t> ids(n);
    for (auto& id : ids) id = sampler_(rng);
    return ids;
  }

 private:
  std::vector<JointAtom> atoms_;
  std::vector<double> probs_;
  FiniteClassSpec cls_;
  double gamma_;
  double kappa_ = 0.0;
  double sigma_bound_ = 0.0;
  double eta_ = 0.0;
  std::vector<double> cross_;
  std::vector<double> second_;
  CategoricalSampler sampler_;
};

struct MultiplierSup {
  double U = 0.0;
  std::size_t argmax_h = 0;
  double argmax_lambda = 0.0;
  double A_tilde = 0.0;  // A at the maximizer lambda * h
  double B_tilde = 0.0;  // B at the maximizer lambda * h
};

/// U = sup over star(H) of A(h) - B(h), where
///   A(h) = sum_i (zeta_i h(X_i) - E[zeta h(X)]),
///   B(h) = gamma sum_i (E[h(X)^2] + h(X_i)^2).
inline MultiplierSup multiplier_sup(const MultiplierSetup& setup, std::span<const std::size_t> sample) {
  const auto& cls = setup.function_class();
  const std::size_t H = cls.base.size();
  const auto n = static_cast<double>(sample.size());
  std::vector<double> A(H), B(H);
  for (std::size_t h = 0; h < H; ++h) {
    double a = 0.0, q = 0.0;
    for (std::size_t id : sample) {
      const auto& atom = setup.atoms().at(id);
      const double v = cls.base[h][atom.x];
      a += atom.zeta * v;
      q += v * v;
    }
    A[h] = a - n * setup.cross_moments()[h];
    B[h] = setup.gamma() * (n * setup.second_moments()[h] + q);
  }
  const auto best = star_hull_sup(A, B);
  MultiplierSup out;
  out.U = best.value;
  out.argmax_h = best.index;
  out.argmax_lambda = best.lambda;
  out.A_tilde = best.lambda * A[best.index];
  out.B_tilde = best.lambda * best.lambda * B[best.index];
  return out;
}

inline constexpr double kSelfLocalizationTolerance = 1e-10;

struct SelfLocalization {
  bool holds = true;
  double margin = 0.0;  // U - B(h~)
};

/// B(h~) <= U at the maximizer h~ of the multiplier process.
inline SelfLocalization self_localization_check(const MultiplierSetup& setup,
                                                std::span<const std::size_t> sample) {
  const auto sup = multiplier_sup(setup, sample);
  SelfLocalization r;
  r.margin = sup.U - sup.B_tilde;
  r.holds = r.margin >= -kSelfLocalizationTolerance;
  return r;
}

/// U over independent replicates; also counts self-localization failures.
struct MultiplierDraws {
  std::vector<double> U;
  std::size_t self_localization_failures = 0;
};

inline MultiplierDraws simulate_multiplier(const MultiplierSetup& setup, std::size_t n,
                                           std::size_t replicates, std::uint64_t seed) {
  if (n == 0) throw ValidationError("multiplier simulation: n must be at least 1");
  MultiplierDraws out;
  out.U.resize(replicates);
  std::vector<unsigned char> failed(replicates, 0);
  parallel_for(replicates, [&](std::size_t r) {
    const auto ids = setup.draw(n, seed, r);
    const auto sup = multiplier_sup(setup, ids);
    out.U[r] = sup.U;
    failed[r] = (sup.U - sup.B_tilde) < -kSelfLocalizationTolerance;
  });
  out.self_localization_failures = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  return out;
}

/// lambda_j = j / (points * 2 eta), j = 1..points: evenly spaced on (0, 1/(2 eta)].
inline std::vector<double> default_lambda_grid(double eta, std::size_t points = 8) {
  std::vector<double> grid(points);
  for (std::size_t j = 0; j < points; ++j)
    grid[j] = static_cast<double>(j + 1) / (static_cast<double>(points) * 2.0 * eta);
  return grid;
}

inline constexpr std::size_t kMinMgfReplicates = 1000;
inline constexpr std::size_t kDefaultBootstrapResamples = 1000;
inline constexpr double kBootstrapLevel = 0.95;

struct ConcentrationReport {
  double EU_hat = 0.0;
  double EU_se = 0.0;
  double eta = 0.0;
  std::vector<double> lambda_grid;
  std::vector<double> log_mgf_hat;
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  std::vector<double> bound;  // lambda^2 eta EU / (2 (1 - eta lambda))
  std::vector<double> violations;
  std::size_t self_localization_failures = 0;
  std::size_t replicates = 0;
};

/// log (1/N) sum_i exp(lambda (U_i - mean U)), computed stably.
inline double empirical_log_mgf(std::span<const double> U, double lambda) {
  const double m = stats::mean(U);
  double shift = -std::numeric_limits<double>::infinity();
  for (double u : U) shift = std::max(shift, lambda * (u - m));
  stats::CompensatedSum s;
  for (double u : U) s.add(std::exp(lambda * (u - m) - shift));
  return shift + std::log(s.value() / static_cast<double>(U.size()));
}

/// Empirical log-MGF of U - EU against lambda^2 eta EU / (2 (1 - eta lambda)),
/// with percentile bootstrap intervals. A lambda counts as a violation only
/// when the lower end of its interval lies above the bound.
inline ConcentrationReport mgf_verify_draws(const MultiplierDraws& sim, double eta,
                                            std::vector<double> lambda_points, std::uint64_t seed,
                                            std::size_t bootstrap_resamples = kDefaultBootstrapResamples) {
  const auto& U = sim.U;
  const std::size_t replicates = U.size();
  if (replicates < kMinMgfReplicates)
    throw ValidationError("mgf_verify needs at least " + std::to_string(kMinMgfReplicates) + " replicates");
  if (bootstrap_resamples == 0) throw ValidationError("mgf_verify: bootstrap resamples must be positive");
  for (double l : lambda_points) {
    if (!(l > 0.0)) throw ValidationError("mgf_verify: lambda must be positive");
    if (eta > 0.0 && !(l < 1.0 / eta)) throw ValidationError("mgf_verify: lambda must be below 1/eta");
  }

  ConcentrationReport rep;
  rep.replicates = replicates;
  rep.eta = eta;
  rep.EU_hat = stats::mean(U);
  rep.EU_se = stats::standard_error(U);
  rep.self_localization_failures = sim.self_localization_failures;
  rep.lambda_grid = std::move(lambda_points);
  const std::size_t L = rep.lambda_grid.size();

  // exp(lambda (U_i - Ubar)) once; a resample's centred log-MGF is then
  // log mean(e*) - lambda (Ubar* - Ubar).
  std::vector<std::vector<double>> expo(L, std::vector<double>(replicates));
  for (std::size_t l = 0; l < L; ++l) {
    rep.log_mgf_hat.push_back(empirical_log_mgf(U, rep.lambda_grid[l]));
    for (std::size_t i = 0; i < replicates; ++i)
      expo[l][i] = std::exp(rep.lambda_grid[l] * (U[i] - rep.EU_hat));
    const double lam = rep.lambda_grid[l];
    rep.bound.push_back(lam * lam * eta * rep.EU_hat / (2.0 * (1.0 - eta * lam)));
  }

  std::vector<std::vector<double>> boot(L, std::vector<double>(bootstrap_resamples));
  parallel_for(bootstrap_resamples, [&](std::size_t b) {
    CounterRng rng(seed, b, Stream::bootstrap);
    std::vector<double> acc(L, 0.0);
    double usum = 0.0;
    for (std::size_t i = 0; i < replicates; ++i) {
      const std::size_t k = rng.below(replicates);
      usum += U[k];
      for (std::size_t l = 0; l < L; ++l) acc[l] += expo[l][k];
    }
    const double shift = usum / static_cast<double>(replicates) - rep.EU_hat;
    for (std::size_t l = 0; l < L; ++l)
      boot[l][b] = std::log(acc[l] / static_cast<double>(replicates)) - rep.lambda_grid[l] * shift;
  });
  const double tail = 0.5 * (1.0 - kBootstrapLevel);
  for (std::size_t l = 0; l < L; ++l) {
    rep.ci_lower.push_back(stats::quantile(boot[l], tail));
    rep.ci_upper.push_back(stats::quantile(boot[l], 1.0 - tail));
    if (rep.ci_lower[l] > rep.bound[l]) rep.violations.push_back(rep.lambda_grid[l]);
  }
  return rep;
}

inline ConcentrationReport mgf_verify(const MultiplierSetup& setup, std::size_t n,
                                      std::size_t replicates, std::vector<double> lambda_points,
                                      std::uint64_t seed,
                                      std::size_t bootstrap_resamples = kDefaultBootstrapResamples) {
  if (replicates < kMinMgfReplicates)
    throw ValidationError("mgf_verify needs at least " + std::to_string(kMinMgfReplicates) + " replicates");
  return mgf_verify_draws(simulate_multiplier(setup, n, replicates, seed), setup.eta(),
                          std::move(lambda_points), seed, bootstrap_resamples);
}

inline constexpr double kTailDeviationConstant = 1.5;

struct TailEntry {
  double delta = 0.0;
  double threshold = 0.0;  // 2 EU + (3/2) eta log(1/delta)
  double frequency = 0.0;
  double std_error = 0.0;  // sqrt(delta (1 - delta) / N)
  bool passes = true;
};

struct TailReport {
  double EU_hat = 0.0;
  double eta = 0.0;
  std::vector<TailEntry> entries;
  bool all_pass = true;
};

/// Frequency of U > 2 EU + (3/2) eta log(1/delta) against delta + 3 binomial SE.
inline TailReport tail_verify_draws(std::span<const double> U, double eta, std::span<const double> deltas) {
  TailReport rep;
  rep.eta = eta;
  rep.EU_hat = stats::mean(U);
  const auto N = static_cast<double>(U.size());
  for (double delta : deltas) {
    if (!(delta > 0.0 && delta <= 1.0)) throw ValidationError("tail_verify: delta must lie in (0, 1]");
    TailEntry e;
    e.delta = delta;
    e.threshold = 2.0 * rep.EU_hat + kTailDeviationConstant * eta * std::log(1.0 / delta);
    const auto exceed = std::count_if(U.begin(), U.end(), [&](double u) { return u > e.threshold; });
    e.frequency = static_cast<double>(exceed) / N;
    e.std_error = std::sqrt(delta * (1.0 - delta) / N);
    e.passes = e.frequency <= delta + 3.0 * e.std_error;
    rep.all_pass = rep.all_pass && e.passes;
    rep.entries.push_back(e);
  }
  return rep;
}

inline TailReport tail_verify(const MultiplierSetup& setup, std::size_t n, std::size_t replicates,
                              std::span<const double> deltas, std::uint64_t seed) {
  if (replicates == 0) throw ValidationError("tail_verify: replicates must be positive");
  const auto sim = simulate_multiplier(setup, n, replicates, seed);
  return tail_verify_draws(sim.U, setup.eta(), deltas);
}

}  // namespace offset_risk

#endif  // OFFSET_RISK_CONCENTRATION_HPP
