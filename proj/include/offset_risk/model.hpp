#ifndef OFFSET_RISK_MODEL_HPP
#define OFFSET_RISK_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "offset_risk/rng.hpp"
#include "offset_risk/stats.hpp"

namespace offset_risk {

/// Raised when an input violates a documented invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Values of a function at every support atom, indexed by atom id.
using AtomFunction = std::vector<double>;

inline constexpr double kProbabilityTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Categorical sampling
// ---------------------------------------------------------------------------

/// Inverse-CDF sampler over a finite probability vector.
class CategoricalSampler {
 public:
  CategoricalSampler() = default;
  explicit CategoricalSampler(std::span<const double> probs) : cdf_(probs.size()) {
    stats::CompensatedSum acc;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc.add(probs[i]);
      cdf_[i] = acc.value();
    }
  }

  std::size_t operator()(CounterRng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it != cdf_.end()) return static_cast<std::size_t>(it - cdf_.begin());
    // u rounded up to the total mass: take the last atom with positive mass.
    auto idx = cdf_.size() - 1;
    while (idx > 0 && cdf_[idx] <= cdf_[idx - 1]) --idx;
    return idx;
  }

 private:
  std::vector<double> cdf_;
};

// ---------------------------------------------------------------------------
// Distributions and samples
// ---------------------------------------------------------------------------

struct Atom {
  std::vector<double> x;
  double y = 0.0;
};

/// Finite-support joint law of (X, Y). Atom ids are positions in `support`.
class DiscreteDistribution {
 public:
  DiscreteDistribution(std::vector<Atom> support, std::vector<double> probs, double b)
      : support_(std::move(support)), probs_(std::move(probs)), b_(b) {
    if (support_.empty()) throw ValidationError("distribution support is empty");
    if (probs_.size() != support_.size())
      throw ValidationError("probs length " + std::to_string(probs_.size()) +
                            " does not match support size " + std::to_string(support_.size()));
    if (!(b_ > 0.0) || !std::isfinite(b_)) throw ValidationError("bound b must be positive and finite");
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("probabilities must be nonnegative");
    }
    const double total = stats::sum(probs_);
    if (std::abs(total - 1.0) > kProbabilityTolerance)
      throw ValidationError("probabilities sum to " + std::to_string(total) + ", not 1");
    const std::size_t d = support_.front().x.size();
    for (const auto& atom : support_) {
      if (!(std::abs(atom.y) <= b_)) throw ValidationError("atom label exceeds the bound b");
      if (atom.x.size() != d) throw ValidationError("feature vectors have inconsistent dimension");
    }
    sampler_ = CategoricalSampler(probs_);
  }

  std::size_t size() const noexcept { return support_.size(); }
  std::size_t dimension() const noexcept { return support_.front().x.size(); }
  double b() const noexcept { return b_; }
  const Atom& atom(std::size_t id) const { return support_.at(id); }
  const std::vector<Atom>& support() const noexcept { return support_; }
  double prob(std::size_t id) const { return probs_.at(id); }
  std::span<const double> probs() const noexcept { return probs_; }
  double y(std::size_t id) const { return support_[id].y; }

  AtomFunction labels() const {
    AtomFunction out(size());
    for (std::size_t a = 0; a < size(); ++a) out[a] = support_[a].y;
    return out;
  }

  std::size_t draw(CounterRng& rng) const { return sampler_(rng); }

  /// Exact expectation of an atom-indexed function.
  double expect(std::span<const double> h) const {
    check_function(h);
    stats::CompensatedSum s;
    for (std::size_t a = 0; a < size(); ++a) s.add(probs_[a] * h[a]);
    return s.value();
  }

  void check_function(std::span<const double> h) const {
    if (h.size() != size())
      throw ValidationError("function has " + std::to_string(h.size()) + " values, support has " +
                            std::to_string(size()) + " atoms");
  }

 private:
  std::vector<Atom> support_;
  std::vector<double> probs_;
  double b_;
  CategoricalSampler sampler_;
};

/// n atom ids drawn from a DiscreteDistribution.
struct Sample {
  std::vector<std::size_t> indices;

  std::size_t n() const noexcept { return indices.size(); }

  /// Multiplicity of each atom id.
  std::vector<std::size_t> counts(std::size_t support_size) const {
    std::vector<std::size_t> c(support_size, 0);
    for (std::size_t id : indices) {
      if (id >= support_size) throw ValidationError("sample index out of range");
      ++c[id];
    }
    return c;
  }

  friend bool operator==(const Sample&, const Sample&) = default;
};

inline void validate_sample(const Sample& sample, const DiscreteDistribution& dist) {
  if (sample.n() == 0) throw ValidationError("sample is empty");
  for (std::size_t id : sample.indices)
    if (id >= dist.size()) throw ValidationError("sample index " + std::to_string(id) + " out of range");
}

/// n i.i.d. atom ids. Deterministic in (dist, n, seed, replicate).
inline Sample draw_sample(const DiscreteDistribution& dist, std::size_t n, std::uint64_t seed,
                          std::uint64_t replicate = 0) {
  if (n == 0) throw ValidationError("sample size must be at least 1");
  CounterRng rng(seed, replicate, Stream::sample);
  Sample s;
  s.indices.resize(n);
  for (auto& id : s.indices) id = dist.draw(rng);
  return s;
}

/// The empirical measure P_n as a distribution on the same support
/// (atoms absent from the sample get probability zero).
inline DiscreteDistribution empirical_distribution(const Sample& sample,
                                                   const DiscreteDistribution& dist) {
  validate_sample(sample, dist);
  const auto c = sample.counts(dist.size());
  std::vector<double> probs(c.size());
  for (std::size_t a = 0; a < c.size(); ++a)
    probs[a] = static_cast<double>(c[a]) / static_cast<double>(sample.n());
  return DiscreteDistribution(dist.support(), std::move(probs), dist.b());
}

/// Sample holding atom a exactly multiplicities[a] times, in atom order.
inline Sample sample_from_counts(std::span<const std::size_t> multiplicities) {
  Sample s;
  for (std::size_t a = 0; a < multiplicities.size(); ++a)
    s.indices.insert(s.indices.end(), multiplicities[a], a);
  return s;
}

// ---------------------------------------------------------------------------
// Dictionaries and predictors
// ---------------------------------------------------------------------------

/// Finite reference class: row j holds g_j at every atom.
class Dictionary {
 public:
  Dictionary(std::vector<AtomFunction> rows, double b) : rows_(std::move(rows)), b_(b) {
    if (rows_.empty()) throw ValidationError("dictionary is empty");
    if (!(b_ > 0.0)) throw ValidationError("dictionary bound must be positive");
    const std::size_t s = rows_.front().size();
    for (const auto& row : rows_) {
      if (row.size() != s) throw ValidationError("dictionary rows have different lengths");
      for (double v : row)
        if (!(std::abs(v) <= b_)) throw ValidationError("dictionary value exceeds the bound b");
    }
  }

  std::size_t m() const noexcept { return rows_.size(); }
  std::size_t support_size() const noexcept { return rows_.front().size(); }
  double b() const noexcept { return b_; }
  const AtomFunction& row(std::size_t j) const { return rows_.at(j); }
  const std::vector<AtomFunction>& rows() const noexcept { return rows_; }
  double value(std::size_t j, std::size_t atom) const { return rows_.at(j).at(atom); }

  void check_compatible(const DiscreteDistribution& dist) const {
    if (support_size() != dist.size())
      throw ValidationError("dictionary has " + std::to_string(support_size()) +
                            " columns, distribution has " + std::to_string(dist.size()) + " atoms");
  }

 private:
  std::vector<AtomFunction> rows_;
  double b_;
};

/// f_w = sum_j w_j g_j with its nonzero count.
class PredictorWeights {
 public:
  PredictorWeights() = default;
  explicit PredictorWeights(std::vector<double> w) : w_(std::move(w)) {
    sparsity_ = static_cast<std::size_t>(
        std::count_if(w_.begin(), w_.end(), [](double v) { return v != 0.0; }));
  }

  static PredictorWeights unit(std::size_t m, std::size_t j) {
    std::vector<double> w(m, 0.0);
    w.at(j) = 1.0;
    return PredictorWeights(std::move(w));
  }

  /// lambda * e_i + (1 - lambda) * e_j; collapses to e_i when i == j.
  static PredictorWeights segment(std::size_t m, std::size_t i, std::size_t j, double lambda) {
    std::vector<double> w(m, 0.0);
    w.at(i) += lambda;
    w.at(j) += 1.0 - lambda;
    return PredictorWeights(std::move(w));
  }

  std::size_t size() const noexcept { return w_.size(); }
  std::size_t sparsity() const noexcept { return sparsity_; }
  std::span<const double> weights() const noexcept { return w_; }
  double operator[](std::size_t j) const { return w_.at(j); }

 private:
  std::vector<double> w_;
  std::size_t sparsity_ = 0;
};

inline double predict(const Dictionary& dict, const PredictorWeights& w, std::size_t atom_id) {
  if (w.size() != dict.m())
    throw ValidationError("weight vector length " + std::to_string(w.size()) +
                          " does not match dictionary size " + std::to_string(dict.m()));
  if (atom_id >= dict.support_size()) throw ValidationError("atom id out of range");
  stats::CompensatedSum s;
  for (std::size_t j = 0; j < dict.m(); ++j)
    if (w[j] != 0.0) s.add(w[j] * dict.value(j, atom_id));
  return s.value();
}

/// f_w at every atom.
inline AtomFunction evaluate(const Dictionary& dict, const PredictorWeights& w) {
  AtomFunction out(dict.support_size());
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = predict(dict, w, a);
  return out;
}

inline AtomFunction difference(std::span<const double> f, std::span<const double> g) {
  if (f.size() != g.size()) throw ValidationError("function lengths differ");
  AtomFunction out(f.size());
  for (std::size_t a = 0; a < f.size(); ++a) out[a] = f[a] - g[a];
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

enum class LossKind { squared, custom };

/// Loss l(yhat, y) with its derivative in yhat, Lipschitz constant C_b on
/// [-b, b] and strong-convexity modulus in yhat.
struct LossSpec {
  LossKind kind = LossKind::squared;
  std::function<double(double, double)> eval;
  std::function<double(double, double)> grad;
  double C_b = 0.0;
  double gamma_sc = 0.0;

  static LossSpec squared(double b) {
    if (!(b > 0.0)) throw ValidationError("bound b must be positive");
    LossSpec spec;
    spec.kind = LossKind::squared;
    spec.eval = [](double yhat, double y) { return (yhat - y) * (yhat - y); };
    spec.grad = [](double yhat, double y) { return 2.0 * (yhat - y); };
    spec.C_b = 4.0 * b;
    spec.gamma_sc = 2.0;
    return spec;
  }

  static LossSpec custom(std::function<double(double, double)> eval,
                         std::function<double(double, double)> grad, double C_b, double gamma_sc,
                         double b) {
    if (!eval || !grad) throw ValidationError("custom loss needs eval and grad");
    if (!(C_b > 0.0) || !(gamma_sc > 0.0)) throw ValidationError("C_b and gamma_sc must be positive");
    if (gamma_sc * b > C_b * (1.0 + 1e-12))
      throw ValidationError("strong convexity modulus times b exceeds the Lipschitz constant");
    LossSpec spec;
    spec.kind = LossKind::custom;
    spec.eval = std::move(eval);
    spec.grad = std::move(grad);
    spec.C_b = C_b;
    spec.gamma_sc = gamma_sc;
    return spec;
  }

  /// C_b' = C_b + gamma * b.
  double lipschitz_prime(double b) const noexcept { return C_b + gamma_sc * b; }
};

inline double loss_value(const LossSpec& spec, double yhat, double y) {
  if (spec.kind == LossKind::squared) return (yhat - y) * (yhat - y);
  return spec.eval(yhat, y);
}

inline double loss_grad(const LossSpec& spec, double yhat, double y) {
  if (spec.kind == LossKind::squared) return 2.0 * (yhat - y);
  return spec.grad(yhat, y);
}

}  // namespace offset_risk

#endif  // OFFSET_RISK_MODEL_HPP
