#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "offset_risk/concentration.hpp"
#include "offset_risk/harness/instances.hpp"

using namespace offset_risk;

namespace {

/// One feature point, h = 1, zeta = +-1 with equal mass. Then
/// A = S (a sum of n signs), B = 2 gamma n, and
/// U = max_{lambda in [0,1]} lambda S - lambda^2 2 gamma n.
MultiplierSetup coin_setup(double gamma) {
  return MultiplierSetup({{0, 1.0}, {0, -1.0}}, {0.5, 0.5}, FiniteClassSpec{{{1.0}}, true}, gamma);
}

double coin_U(int S, double gamma, std::size_t n) {
  const double B = 2.0 * gamma * static_cast<double>(n);
  if (S <= 0) return 0.0;
  const double l = std::min(1.0, S / (2.0 * B));
  return l * S - l * l * B;
}

/// Law of U for the coin setup by enumerating the binomial count.
struct ExactLaw {
  std::vector<double> values, probs;
  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) m += probs[i] * values[i];
    return m;
  }
  double log_mgf_centred(double lambda) const {
    const double m = mean();
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += probs[i] * std::exp(lambda * (values[i] - m));
    return std::log(s);
  }
};

ExactLaw coin_law(double gamma, std::size_t n) {
  ExactLaw law;
  double logc = 0.0;  // log C(n, k)
  for (std::size_t k = 0; k <= n; ++k) {
    if (k > 0) logc += std::log(static_cast<double>(n - k + 1)) - std::log(static_cast<double>(k));
    law.values.push_back(coin_U(2 * static_cast<int>(k) - static_cast<int>(n), gamma, n));
    law.probs.push_back(std::exp(logc - static_cast<double>(n) * std::log(2.0)));
  }
  return law;
}

}  // namespace

TEST(MultiplierSetup, DerivedConstants) {
  const MultiplierSetup s({{0, 1.5}, {1, -0.5}, {1, 3.0}}, {0.5, 0.5, 0.0},
                          FiniteClassSpec{{{0.2, -0.8}, {0.4, 0.1}}, true}, 0.5);
  EXPECT_EQ(s.sigma_bound(), 1.5);  // the zero-mass atom is ignored
  EXPECT_EQ(s.kappa(), 0.8);
  EXPECT_DOUBLE_EQ(s.eta(), 8.0 * (2.25 / 0.5 + 0.5 * 0.64));
  EXPECT_DOUBLE_EQ(s.cross_moments()[0], 0.5 * 1.5 * 0.2 + 0.5 * -0.5 * -0.8);
  EXPECT_DOUBLE_EQ(s.second_moments()[1], 0.5 * 0.16 + 0.5 * 0.01);
}

TEST(MultiplierSetup, RejectsInvalidInputs) {
  const FiniteClassSpec cls{{{1.0, 0.0}}, true};
  EXPECT_THROW(MultiplierSetup({}, {}, cls, 1.0), ValidationError);
  EXPECT_THROW(MultiplierSetup({{0, 1.0}}, {0.9}, cls, 1.0), ValidationError);
  EXPECT_THROW(MultiplierSetup({{2, 1.0}}, {1.0}, cls, 1.0), ValidationError);
  EXPECT_THROW(MultiplierSetup({{0, 1.0}}, {1.0}, cls, 0.0), ValidationError);
  EXPECT_THROW(MultiplierSetup({{0, 1.0}}, {1.0}, FiniteClassSpec{{{1.0, 0.0}}, false}, 1.0), ValidationError);
  EXPECT_THROW(MultiplierSetup({{0, 1.0}}, {1.0}, FiniteClassSpec{{{1.0}, {1.0, 0.0}}, true}, 1.0), ValidationError);
}

TEST(MultiplierSup, MatchesBruteForceGrid) {
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const auto setup = harness::random_multiplier_setup(1, rep);
    const auto ids = setup.draw(1 + rep % 30, 1, rep);
    const auto& cls = setup.function_class();
    double oracle = 0.0;
    for (const auto& h : cls.base) {
      // E[zeta h] and E[h^2] straight from the joint atoms.
      double ezh = 0.0, eh2 = 0.0;
      for (std::size_t a = 0; a < setup.atoms().size(); ++a) {
        const double v = h[setup.atoms()[a].x];
        ezh += setup.probs()[a] * setup.atoms()[a].zeta * v;
        eh2 += setup.probs()[a] * v * v;
      }
      for (int k = 0; k <= 4000; ++k) {
        const double l = k / 4000.0;
        double total = 0.0;
        for (std::size_t id : ids) {
          const double v = l * h[setup.atoms()[id].x];
          total += setup.atoms()[id].zeta * v - l * ezh - setup.gamma() * (l * l * eh2 + v * v);
        }
        oracle = std::max(oracle, total);
      }
    }
    const auto sup = multiplier_sup(setup, ids);
    EXPECT_GE(sup.U, oracle - 1e-10) << "rep " << rep;
    EXPECT_LE(sup.U, oracle + 1e-4 * (1.0 + oracle)) << "rep " << rep;
    EXPECT_NEAR(sup.U, sup.A_tilde - sup.B_tilde, 1e-12);
  }
}

TEST(MultiplierSup, SelfLocalizationAtTheMaximizer) {
  for (std::uint64_t rep = 0; rep < 2000; ++rep) {
    const auto setup = harness::random_multiplier_setup(2, rep);
    const auto ids = setup.draw(1 + rep % 64, 2, rep);
    const auto r = self_localization_check(setup, ids);
    EXPECT_TRUE(r.holds) << "rep " << rep << " margin " << r.margin;
  }
}

TEST(Mgf, EmpiricalLogMgfOfTwoPoints) {
  const std::vector<double> U = {0.0, 1.0};
  for (double l : {0.1, 0.7, 3.0}) EXPECT_NEAR(empirical_log_mgf(U, l), std::log(std::cosh(l / 2.0)), 1e-14);
  EXPECT_NEAR(empirical_log_mgf(std::vector<double>{5.0, 5.0}, 100.0), 0.0, 1e-15);
}

TEST(Mgf, CoinSetupMatchesExactLaw) {
  const double gamma = 0.25;
  const std::size_t n = 40;
  const auto setup = coin_setup(gamma);
  const auto law = coin_law(gamma, n);
  const auto sim = simulate_multiplier(setup, n, 20000, 3);
  EXPECT_EQ(sim.self_localization_failures, 0u);
  EXPECT_NEAR(stats::mean(sim.U), law.mean(), 4.0 * stats::standard_error(sim.U));

  const auto lambdas = default_lambda_grid(setup.eta());
  const auto rep = mgf_verify_draws(sim, setup.eta(), lambdas, 3, 2000);
  EXPECT_TRUE(rep.violations.empty());
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    const double exact = law.log_mgf_centred(lambdas[l]);
    // The bound must hold for the exact law as well.
    const double bound = lambdas[l] * lambdas[l] * setup.eta() * law.mean() / (2.0 * (1.0 - setup.eta() * lambdas[l]));
    EXPECT_LE(exact, bound);
    // Interval covers the exact value up to a small Monte-Carlo allowance.
    const double width = rep.ci_upper[l] - rep.ci_lower[l];
    EXPECT_GE(exact, rep.ci_lower[l] - width);
    EXPECT_LE(exact, rep.ci_upper[l] + width);
  }
}

TEST(Mgf, BootstrapIntervalsAreOrderedAndDeterministic) {
  const auto setup = harness::random_multiplier_setup(4, 0);
  const auto sim = simulate_multiplier(setup, 30, 2000, 4);
  const auto lambdas = default_lambda_grid(setup.eta(), 5);
  const auto a = mgf_verify_draws(sim, setup.eta(), lambdas, 4, 500);
  const auto b = mgf_verify_draws(sim, setup.eta(), lambdas, 4, 500);
  EXPECT_EQ(a.ci_lower, b.ci_lower);
  EXPECT_EQ(a.ci_upper, b.ci_upper);
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    EXPECT_LE(a.ci_lower[l], a.log_mgf_hat[l]);
    EXPECT_GE(a.ci_upper[l], a.log_mgf_hat[l]);
    EXPECT_GE(a.log_mgf_hat[l], -1e-15);  // Jensen
  }
}

TEST(Mgf, LambdaGridAndValidation) {
  const auto grid = default_lambda_grid(2.0, 8);
  ASSERT_EQ(grid.size(), 8u);
  EXPECT_DOUBLE_EQ(grid.front(), 1.0 / 32.0);
  EXPECT_DOUBLE_EQ(grid.back(), 0.25);
  const auto setup = harness::random_multiplier_setup(5, 0);
  EXPECT_THROW(mgf_verify(setup, 10, 999, default_lambda_grid(setup.eta()), 5), ValidationError);
  const auto sim = simulate_multiplier(setup, 10, 1000, 5);
  EXPECT_THROW(mgf_verify_draws(sim, setup.eta(), {1.0 / setup.eta()}, 5), ValidationError);
  EXPECT_THROW(mgf_verify_draws(sim, setup.eta(), {0.0}, 5), ValidationError);
  EXPECT_THROW(mgf_verify_draws(sim, setup.eta(), {0.1 / setup.eta()}, 5, 0), ValidationError);
  EXPECT_THROW(simulate_multiplier(setup, 0, 10, 5), ValidationError);
}

TEST(Tail, FrequencyAgainstBinomialAllowance) {
  std::vector<double> U(100, 0.0);
  U.back() = 100.0;  // mean 1, threshold 2 when eta = 0, frequency 0.01
  const std::vector<double> ok = {0.01, 0.5};
  const auto pass = tail_verify_draws(U, 0.0, ok);
  EXPECT_TRUE(pass.all_pass);
  EXPECT_DOUBLE_EQ(pass.entries[0].threshold, 2.0);
  EXPECT_DOUBLE_EQ(pass.entries[0].frequency, 0.01);
  const std::vector<double> strict = {1e-4};
  EXPECT_FALSE(tail_verify_draws(U, 0.0, strict).all_pass);
  const std::vector<double> bad = {0.0};
  EXPECT_THROW(tail_verify_draws(U, 0.0, bad), ValidationError);
  EXPECT_NEAR(tail_verify_draws(U, 2.0, ok).entries[0].threshold, 2.0 + 1.5 * 2.0 * std::log(100.0), 1e-12);
}

TEST(Tail, CoinSetupStaysBelowDeviationThreshold) {
  const auto setup = coin_setup(0.25);
  const std::vector<double> deltas = {0.1, 0.01};
  const auto rep = tail_verify(setup, 40, 20000, deltas, 6);
  EXPECT_TRUE(rep.all_pass);
  // Exact exceedance probabilities are below delta too.
  const auto law = coin_law(0.25, 40);
  for (const auto& e : rep.entries) {
    double p = 0.0;
    for (std::size_t i = 0; i < law.values.size(); ++i) p += law.values[i] > e.threshold ? law.probs[i] : 0.0;
    EXPECT_LE(p, e.delta);
  }
}
