#ifndef OFFSET_RISK_SPARSE_HPP
#define OFFSET_RISK_SPARSE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "offset_risk/model.hpp"
#include "offset_risk/parallel.hpp"
#include "offset_risk/rng.hpp"
#include "offset_risk/stats.hpp"

namespace offset_risk {

inline constexpr double kPseudoInverseCutoff = 1e-10;
inline constexpr std::size_t kDefaultSubsetCap = 1'000'000;

/// k-sparse linear predictors <w, Phi_i> on a fixed design Phi (n x d).
struct SparseClassSpec {
  Eigen::MatrixXd phi;
  std::size_t k = 1;
  double gamma = 1.0;
  std::size_t cap = kDefaultSubsetCap;
};

/// sum_{i=1..k} C(d, i), saturating at SIZE_MAX.
inline std::size_t subset_count(std::size_t d, std::size_t k) {
  std::size_t total = 0;
  double binom = 1.0;
  for (std::size_t i = 1; i <= k && i <= d; ++i) {
    binom = binom * static_cast<double>(d - i + 1) / static_cast<double>(i);
    total += static_cast<std::size_t>(std::llround(binom));
  }
  return total;
}

inline void validate(const SparseClassSpec& spec) {
  const auto d = static_cast<std::size_t>(spec.phi.cols());
  if (spec.phi.rows() == 0 || d == 0) throw ValidationError("sparse class: design matrix is empty");
  if (spec.k < 1 || spec.k > d) throw ValidationError("sparse class: need 1 <= k <= d");
  if (!(spec.gamma > 0.0)) throw ValidationError("sparse class: gamma must be positive");
  const std::size_t count = subset_count(d, spec.k);
  if (count > spec.cap)
    throw ValidationError("sparse class: " + std::to_string(count) + " subsets exceed the cap of " +
                          std::to_string(spec.cap) + "; reduce d or k");
}

/// All nonempty subsets of {0, ..., d-1} of size at most k, in
/// lexicographic order within each size.
inline std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t d, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t size = 1; size <= k && size <= d; ++size) {
    std::vector<std::size_t> s(size);
    for (std::size_t i = 0; i < size; ++i) s[i] = i;
    for (;;) {
      out.push_back(s);
      std::size_t i = size;
      while (i > 0 && s[i - 1] == d - size + i - 1) --i;
      if (i == 0) break;
      ++s[i - 1];
      for (std::size_t j = i; j < size; ++j) s[j] = s[j - 1] + 1;
    }
  }
  return out;
}

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& phi, std::span<const std::size_t> subset) {
  Eigen::MatrixXd out(phi.rows(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t j = 0; j < subset.size(); ++j) {
    if (subset[j] >= static_cast<std::size_t>(phi.cols())) throw ValidationError("column index out of range");
    out.col(static_cast<Eigen::Index>(j)) = phi.col(static_cast<Eigen::Index>(subset[j]));
  }
  return out;
}

/// Thin SVD factors of Phi_S restricted to singular values above
/// kPseudoInverseCutoff * sigma_max.
struct TruncatedSvd {
  Eigen::MatrixXd U;        // n x r
  Eigen::VectorXd values;   // r
  Eigen::MatrixXd V;        // |S| x r
  std::size_t rank() const { return static_cast<std::size_t>(values.size()); }
};

inline TruncatedSvd truncated_svd(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  Eigen::Index r = 0;
  while (r < s.size() && smax > 0.0 && s(r) > kPseudoInverseCutoff * smax) ++r;
  return {svd.matrixU().leftCols(r), s.head(r), svd.matrixV().leftCols(r)};
}

/// H_S = Phi_S (Phi_S^T Phi_S)^+ Phi_S^T.
inline Eigen::MatrixXd hat_matrix(const Eigen::MatrixXd& phi, std::span<const std::size_t> subset) {
  const auto svd = truncated_svd(select_columns(phi, subset));
  return svd.U * svd.U.transpose();
}

/// (Phi_S^T Phi_S)^+ via the truncated SVD of Phi_S.
inline Eigen::MatrixXd gram_pseudoinverse(const Eigen::MatrixXd& phi_s) {
  const auto svd = truncated_svd(phi_s);
  const Eigen::VectorXd inv_sq = svd.values.array().square().inverse();
  return svd.V * inv_sq.asDiagonal() * svd.V.transpose();
}

/// Precomputes, for every subset S, the factor M_S = V_r diag(1/s_r) so that
/// sigma^T H_S sigma = || M_S^T Phi_S^T sigma ||^2. Evaluating one sign
/// vector then costs one product Phi^T sigma plus O(k^2) per subset.
class SparseOffsetEvaluator {
 public:
  explicit SparseOffsetEvaluator(const SparseClassSpec& spec) : phi_(spec.phi) {
    validate(spec);
    subsets_ = enumerate_subsets(static_cast<std::size_t>(phi_.cols()), spec.k);
    factors_.resize(subsets_.size());
    parallel_for(subsets_.size(), [&](std::size_t i) {
      const auto svd = truncated_svd(select_columns(phi_, subsets_[i]));
      factors_[i] = svd.V * svd.values.cwiseInverse().asDiagonal();
    });
  }

  /// max_S sigma^T H_S sigma (the unscaled supremum times 4 gamma).
  double max_quadratic_form(std::span<const double> sigma) const {
    if (sigma.size() != static_cast<std::size_t>(phi_.rows())) throw ValidationError("sign vector length must equal n");
    const Eigen::Map<const Eigen::VectorXd> s(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
    const Eigen::VectorXd c = phi_.transpose() * s;
    double best = 0.0;
    Eigen::VectorXd cs;
    for (std::size_t i = 0; i < subsets_.size(); ++i) {
      const auto& S = subsets_[i];
      const auto& M = factors_[i];
      if (M.cols() == 0) continue;
      cs.resize(static_cast<Eigen::Index>(S.size()));
      for (std::size_t j = 0; j < S.size(); ++j) cs(static_cast<Eigen::Index>(j)) = c(static_cast<Eigen::Index>(S[j]));
      best = std::max(best, (M.transpose() * cs).squaredNorm());
    }
    return best;
  }

  std::size_t subset_total() const noexcept { return subsets_.size(); }

 private:
  Eigen::MatrixXd phi_;
  std::vector<std::vector<std::size_t>> subsets_;
  std::vector<Eigen::MatrixXd> factors_;
};

/// sup_{||w||_0 <= k} <Phi w, sigma> - gamma w^T Phi^T Phi w
///   = max_S (4 gamma)^{-1} sigma^T H_S sigma.
/// Unnormalized: divide by n for the empirical offset complexity.
inline double sparse_offset_exact(const SparseClassSpec& spec, std::span<const double> sigma) {
  return SparseOffsetEvaluator(spec).max_quadratic_form(sigma) / (4.0 * spec.gamma);
}

inline double sparse_offset_exact(const SparseOffsetEvaluator& eval, double gamma,
                                  std::span<const double> sigma) {
  if (!(gamma > 0.0)) throw ValidationError("sparse class: gamma must be positive");
  return eval.max_quadratic_form(sigma) / (4.0 * gamma);
}

/// Reference evaluation of one subset by a direct solve: maximizes
/// <c, w> - gamma w^T G w with c = Phi_S^T sigma and G = Phi_S^T Phi_S via the
/// stationarity system 2 gamma G w = c (minimum-norm solution).
inline double sparse_subset_value_by_solve(const Eigen::MatrixXd& phi, std::span<const std::size_t> subset,
                                           double gamma, std::span<const double> sigma) {
  if (!(gamma > 0.0)) throw ValidationError("sparse class: gamma must be positive");
  if (sigma.size() != static_cast<std::size_t>(phi.rows())) throw ValidationError("sign vector length must equal n");
  const Eigen::MatrixXd ps = select_columns(phi, subset);
  const Eigen::Map<const Eigen::VectorXd> s(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
  const Eigen::VectorXd c = ps.transpose() * s;
  const Eigen::MatrixXd G = ps.transpose() * ps;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(2.0 * gamma * G);
  cod.setThreshold(kPseudoInverseCutoff);
  const Eigen::VectorXd w = cod.solve(c);
  return c.dot(w) - gamma * w.dot(G * w);
}

/// max over all subsets of sparse_subset_value_by_solve.
inline double sparse_offset_by_solve(const SparseClassSpec& spec, std::span<const double> sigma) {
  validate(spec);
  double best = 0.0;
  for (const auto& S : enumerate_subsets(static_cast<std::size_t>(spec.phi.cols()), spec.k))
    best = std::max(best, sparse_subset_value_by_solve(spec.phi, S, spec.gamma, sigma));
  return best;
}

/// (1/gamma) k log(e d / k) / n.
inline double sparse_reference_rate(std::size_t n, std::size_t d, std::size_t k, double gamma) {
  const double kk = static_cast<double>(k);
  return kk * std::log(std::numbers::e * static_cast<double>(d) / kk) /
         (gamma * static_cast<double>(n));
}

struct SparseBoundReport {
  double estimate = 0.0;   // mean over sign draws of sparse_offset_exact / n
  double std_error = 0.0;
  double reference_rate = 0.0;
  double ratio = 0.0;      // estimate / reference_rate
  std::size_t replicates = 0;
  std::vector<double> draws;
};

inline std::vector<double> rademacher_vector(std::size_t n, std::uint64_t seed, std::uint64_t replicate) {
  CounterRng rng(seed, replicate, Stream::sigma);
  std::vector<double> s(n);
  for (auto& v : s) v = rng.rademacher();
  return s;
}

inline SparseBoundReport sparse_offset_bound_check(const SparseClassSpec& spec,
                                                   std::size_t sigma_replicates, std::uint64_t seed) {
  const SparseOffsetEvaluator eval(spec);
  const auto n = static_cast<std::size_t>(spec.phi.rows());
  SparseBoundReport rep;
  rep.replicates = sigma_replicates;
  rep.draws.resize(sigma_replicates);
  parallel_for(sigma_replicates, [&](std::size_t r) {
    const auto sigma = rademacher_vector(n, seed, r);
    rep.draws[r] = sparse_offset_exact(eval, spec.gamma, sigma) / static_cast<double>(n);
  });
  rep.estimate = sigma_replicates ? stats::mean(rep.draws) : 0.0;
  rep.std_error = stats::standard_error(rep.draws);
  rep.reference_rate = sparse_reference_rate(n, static_cast<std::size_t>(spec.phi.cols()), spec.k, spec.gamma);
  rep.ratio = rep.estimate > 0.0 ? rep.estimate / rep.reference_rate : 0.0;
  return rep;
}

/// Gaussian design with i.i.d. N(0, 1) entries.
inline Eigen::MatrixXd gaussian_design(std::size_t n, std::size_t d, std::uint64_t seed,
                                       std::uint64_t replicate = 0) {
  CounterRng rng(seed, replicate, Stream::features);
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < phi.cols(); ++j)
    for (Eigen::Index i = 0; i < phi.rows(); ++i) phi(i, j) = rng.normal();
  return phi;
}

}  // namespace offset_risk

#endif  // OFFSET_RISK_SPARSE_HPP
