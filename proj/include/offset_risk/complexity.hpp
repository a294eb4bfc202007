#ifndef OFFSET_RISK_COMPLEXITY_HPP
#define OFFSET_RISK_COMPLEXITY_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "offset_risk/model.hpp"
#include "offset_risk/parallel.hpp"
#include "offset_risk/rng.hpp"
#include "offset_risk/stats.hpp"

namespace offset_risk {

/// Finite class H of atom-indexed functions (typically f - g*). With
/// `star_hull` set, suprema run over {lambda h : h in H, lambda in [0, 1]}.
struct FiniteClassSpec {
  std::vector<AtomFunction> base;
  bool star_hull = true;

  void validate(std::size_t support_size) const {
    if (base.empty()) throw ValidationError("function class is empty");
    for (const auto& h : base)
      if (h.size() != support_size)
        throw ValidationError("class function has " + std::to_string(h.size()) +
                              " values, support has " + std::to_string(support_size));
  }
};

enum class ComplexityKind { offset, local_fixed_point, empirical_offset, sparse_exact };

inline const char* to_string(ComplexityKind k) {
  switch (k) {
    case ComplexityKind::offset: return "offset";
    case ComplexityKind::local_fixed_point: return "local_fixed_point";
    case ComplexityKind::empirical_offset: return "empirical_offset";
    case ComplexityKind::sparse_exact: return "sparse_exact";
  }
  return "unknown";
}

struct ComplexityEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t replicates = 0;
  double gamma = 0.0;
  ComplexityKind kind = ComplexityKind::offset;
};

/// Combined standard error of a difference of two independent estimates.
inline double combined_std_error(const ComplexityEstimate& a, const ComplexityEstimate& b) {
  return std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
}

// ---------------------------------------------------------------------------
// Star-hull suprema
// ---------------------------------------------------------------------------

struct StarHullSup {
  std::size_t index = 0;
  double lambda = 0.0;
  double value = 0.0;
};

/// max_h max_{lambda in [0,1]} lambda A(h) - lambda^2 B(h), in closed form.
/// The per-h optimum is clamp(A / 2B, 0, 1), or 1{A > 0} when B = 0. The
/// zero function is always feasible, so the value is >= 0. Ties go to the
/// lowest index.
inline StarHullSup star_hull_sup(std::span<const double> A, std::span<const double> B) {
  if (A.size() != B.size()) throw ValidationError("star_hull_sup: A and B differ in length");
  StarHullSup best;
  for (std::size_t h = 0; h < A.size(); ++h) {
    if (B[h] < 0.0) throw ValidationError("star_hull_sup: quadratic coefficient is negative");
    double lambda;
    if (B[h] > 0.0) {
      lambda = std::clamp(A[h] / (2.0 * B[h]), 0.0, 1.0);
    } else {
      lambda = A[h] > 0.0 ? 1.0 : 0.0;
    }
    const double v = lambda * A[h] - lambda * lambda * B[h];
    if (v > best.value) best = {h, lambda, v};
  }
  return best;
}

/// sup over H (lambda fixed at 1) or over star(H), per the class flag.
inline StarHullSup class_sup(const FiniteClassSpec& cls, std::span<const double> A,
                             std::span<const double> B) {
  if (cls.star_hull) return star_hull_sup(A, B);
  StarHullSup best{0, 1.0, -std::numeric_limits<double>::infinity()};
  for (std::size_t h = 0; h < A.size(); ++h) {
    const double v = A[h] - B[h];
    if (v > best.value) best = {h, 1.0, v};
  }
  return best;
}

namespace detail {

inline ComplexityEstimate summarize(const std::vector<double>& draws, double gamma, ComplexityKind kind) {
  ComplexityEstimate est;
  est.value = draws.empty() ? 0.0 : stats::mean(draws);
  est.std_error = stats::standard_error(draws);
  est.replicates = draws.size();
  est.gamma = gamma;
  est.kind = kind;
  return est;
}

inline std::vector<double> population_second_moments(const DiscreteDistribution& dist,
                                                     const FiniteClassSpec& cls) {
  std::vector<double> v(cls.base.size());
  for (std::size_t h = 0; h < v.size(); ++h) {
    stats::CompensatedSum s;
    for (std::size_t a = 0; a < dist.size(); ++a) s.add(dist.prob(a) * cls.base[h][a] * cls.base[h][a]);
    v[h] = s.value();
  }
  return v;
}

inline std::vector<int> draw_signs(std::size_t n, std::uint64_t seed, std::uint64_t replicate) {
  CounterRng rng(seed, replicate, Stream::sigma);
  std::vector<int> sigma(n);
  for (auto& s : sigma) s = rng.rademacher();
  return sigma;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Offset Rademacher complexity (population version)
// ---------------------------------------------------------------------------

/// Per-replicate values of
///   sup_h (1/n) sum_i [sigma_i h(X_i) - gamma h(X_i)^2 - gamma E h^2].
/// Replicate r draws X and sigma from streams keyed by (seed, r), so calls
/// that differ only in gamma share their randomness.
inline std::vector<double> offset_complexity_draws(const DiscreteDistribution& dist,
                                                   const FiniteClassSpec& cls, double gamma,
                                                   std::size_t n, std::size_t replicates,
                                                   std::uint64_t seed) {
  if (!(gamma >= 0.0)) throw ValidationError("offset complexity: gamma must be nonnegative");
  if (n == 0) throw ValidationError("offset complexity: n must be at least 1");
  cls.validate(dist.size());
  const auto second = detail::population_second_moments(dist, cls);
  const std::size_t H = cls.base.size();
  std::vector<double> draws(replicates);
  parallel_for(replicates, [&](std::size_t r) {
    const Sample xs = draw_sample(dist, n, seed, r);
    const auto sigma = detail::draw_signs(n, seed, r);
    std::vector<double> A(H, 0.0), B(H, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      const auto& f = cls.base[h];
      double a = 0.0, q = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = f[xs.indices[i]];
        a += sigma[i] * v;
        q += v * v;
      }
      A[h] = a;
      B[h] = gamma * (q + static_cast<double>(n) * second[h]);
    }
    draws[r] = class_sup(cls, A, B).value / static_cast<double>(n);
  });
  return draws;
}

inline ComplexityEstimate offset_complexity_mc(const DiscreteDistribution& dist,
                                               const FiniteClassSpec& cls, double gamma,
                                               std::size_t n, std::size_t replicates,
                                               std::uint64_t seed) {
  return detail::summarize(offset_complexity_draws(dist, cls, gamma, n, replicates, seed), gamma,
                           ComplexityKind::offset);
}

// ---------------------------------------------------------------------------
// Empirical offset complexity (conditional on the X-sample)
// ---------------------------------------------------------------------------

enum class SignMode { monte_carlo, exact };

inline constexpr std::size_t kMaxExactSignEnumeration = 20;

/// E_sigma sup_h (1/n) sum_i [sigma_i h(X_i) - gamma h(X_i)^2] for a fixed
/// sample. Exact mode walks all 2^n sign patterns in Gray-code order.
inline ComplexityEstimate empirical_offset_complexity(const Sample& sample_x,
                                                      const FiniteClassSpec& cls, double gamma,
                                                      std::size_t sigma_replicates,
                                                      std::uint64_t seed,
                                                      SignMode mode = SignMode::monte_carlo) {
  if (!(gamma >= 0.0)) throw ValidationError("empirical offset complexity: gamma must be nonnegative");
  const std::size_t n = sample_x.n();
  if (n == 0) throw ValidationError("empirical offset complexity: sample is empty");
  if (cls.base.empty()) throw ValidationError("function class is empty");
  const std::size_t H = cls.base.size();
  std::vector<std::vector<double>> vals(H, std::vector<double>(n));
  std::vector<double> B(H, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = cls.base[h].at(sample_x.indices[i]);
      vals[h][i] = v;
      B[h] += v * v;
    }
    B[h] *= gamma;
  }
  const double nn = static_cast<double>(n);

  if (mode == SignMode::exact) {
    if (n > kMaxExactSignEnumeration)
      throw ValidationError("exact sign enumeration is limited to n <= " +
                            std::to_string(kMaxExactSignEnumeration));
    std::vector<double> A(H, 0.0);
    std::vector<int> sigma(n, -1);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < n; ++i) A[h] -= vals[h][i];
    const std::uint64_t patterns = std::uint64_t{1} << n;
    stats::CompensatedSum total;
    total.add(class_sup(cls, A, B).value);
    for (std::uint64_t k = 1; k < patterns; ++k) {
      const auto i = static_cast<std::size_t>(std::countr_zero(k));
      sigma[i] = -sigma[i];
      for (std::size_t h = 0; h < H; ++h) A[h] += 2.0 * sigma[i] * vals[h][i];
      total.add(class_sup(cls, A, B).value);
    }
    ComplexityEstimate est;
    est.value = total.value() / static_cast<double>(patterns) / nn;
    est.std_error = 0.0;
    est.replicates = static_cast<std::size_t>(patterns);
    est.gamma = gamma;
    est.kind = ComplexityKind::empirical_offset;
    return est;
  }

  std::vector<double> draws(sigma_replicates);
  parallel_for(sigma_replicates, [&](std::size_t r) {
    const auto sigma = detail::draw_signs(n, seed, r);
    std::vector<double> A(H, 0.0);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < n; ++i) A[h] += sigma[i] * vals[h][i];
    draws[r] = class_sup(cls, A, B).value / nn;
  });
  return detail::summarize(draws, gamma, ComplexityKind::empirical_offset);
}

// ---------------------------------------------------------------------------
// Local Rademacher complexity fixed point
// ---------------------------------------------------------------------------

/// phi(r) = E sup { (1/n) sum_i sigma_i g(X_i) : g in star(H), E g^2 <= r / gamma }
/// evaluated on a frozen set of (X, sigma) draws. Since the objective is
/// linear in lambda, the sup over lambda h is lambda_max(h, r) * max(0, a_h)
/// with lambda_max = min(1, sqrt(r / (gamma E h^2))).
class LocalComplexityProfile {
 public:
  LocalComplexityProfile(const DiscreteDistribution& dist, const FiniteClassSpec& cls, double gamma,
                         std::size_t n, std::size_t replicates, std::uint64_t seed)
      : gamma_(gamma), replicates_(replicates) {
    if (!cls.star_hull) throw ValidationError("local complexity needs a star-shaped class");
    if (!(gamma > 0.0)) throw ValidationError("local complexity: gamma must be positive");
    if (n == 0 || replicates == 0) throw ValidationError("local complexity: n and replicates must be positive");
    cls.validate(dist.size());
    second_ = detail::population_second_moments(dist, cls);
    const std::size_t H = cls.base.size();
    slopes_.assign(replicates * H, 0.0);
    parallel_for(replicates, [&](std::size_t r) {
      const Sample xs = draw_sample(dist, n, seed, r);
      const auto sigma = detail::draw_signs(n, seed, r);
      for (std::size_t h = 0; h < H; ++h) {
        double a = 0.0;
        for (std::size_t i = 0; i < n; ++i) a += sigma[i] * cls.base[h][xs.indices[i]];
        slopes_[r * H + h] = std::max(0.0, a / static_cast<double>(n));
      }
    });
  }

  std::vector<double> draws(double r) const {
    const std::size_t H = second_.size();
    std::vector<double> lambda_max(H);
    for (std::size_t h = 0; h < H; ++h) {
      lambda_max[h] = second_[h] > 0.0 ? std::min(1.0, std::sqrt(r / (gamma_ * second_[h]))) : 1.0;
    }
    std::vector<double> out(replicates_);
    for (std::size_t k = 0; k < replicates_; ++k) {
      double best = 0.0;
      for (std::size_t h = 0; h < H; ++h) best = std::max(best, lambda_max[h] * slopes_[k * H + h]);
      out[k] = best;
    }
    return out;
  }

  double operator()(double r) const { return stats::mean(draws(r)); }

  /// phi at r = infinity (every lambda_max equal to 1).
  double saturation() const { return (*this)(std::numeric_limits<double>::infinity()); }

 private:
  double gamma_;
  std::size_t replicates_;
  std::vector<double> second_;
  std::vector<double> slopes_;
};

inline constexpr double kDefaultFixedPointTolerance = 1e-6;

/// inf { r > 0 : phi(r) <= r } by bisection on the common-random-numbers
/// profile. phi is nondecreasing and phi(r)/sqrt(r) nonincreasing, so the
/// feasible set is a half-line and the crossing is unique.
///
/// The reported standard error is 2 * SE(phi(r*)): at the crossing
/// phi'(r*) <= 1/2, so an error e in phi moves the root by at most 2e.
inline ComplexityEstimate local_complexity_fixed_point(const DiscreteDistribution& dist,
                                                       const FiniteClassSpec& cls, double gamma,
                                                       std::size_t n, std::size_t mc_replicates,
                                                       double r_tol, std::uint64_t seed) {
  if (!(r_tol > 0.0)) throw ValidationError("local complexity: r_tol must be positive");
  const LocalComplexityProfile phi(dist, cls, gamma, n, mc_replicates, seed);
  ComplexityEstimate est;
  est.kind = ComplexityKind::local_fixed_point;
  est.gamma = gamma;
  est.replicates = mc_replicates;
  double hi = phi.saturation();
  if (hi <= 0.0) return est;
  double lo = 0.0;
  while (hi - lo >= r_tol) {
    const double mid = 0.5 * (lo + hi);
    if (phi(mid) <= mid) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  est.value = hi;
  est.std_error = 2.0 * stats::standard_error(phi.draws(hi));
  return est;
}

}  // namespace offset_risk

#endif  // OFFSET_RISK_COMPLEXITY_HPP
