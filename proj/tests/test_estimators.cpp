#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "offset_risk/estimators.hpp"
#include "offset_risk/harness/instances.hpp"

using namespace offset_risk;

namespace {

const LossSpec kSq = LossSpec::squared(1.0);

// Fitted once on 20000 draws (random and multiscale instances, n = 16..512,
// delta = 0.05): the largest required constant was 0.086.
constexpr double kMidpointEpsilonConstant = 0.1;

double midpoint_epsilon(const LossSpec& loss, std::size_t m, std::size_t n, double delta) {
  return kMidpointEpsilonConstant * loss.C_b * loss.C_b / loss.gamma_sc *
         std::log(2.0 * static_cast<double>(m) / delta) / static_cast<double>(n);
}

double mixture_risk(const Sample& s, const DiscreteDistribution& d, const Dictionary& dict, std::size_t i,
                    std::size_t j, double lambda) {
  return empirical_risk(s, d, kSq, evaluate(dict, PredictorWeights::segment(dict.m(), i, j, lambda))).value;
}

LossSpec absolute_like_loss() {
  // Smooth convex surrogate: log-cosh scaled to stay Lipschitz on [-b, b].
  return LossSpec::custom([](double a, double y) { return std::log(std::cosh(a - y)); },
                          [](double a, double y) { return std::tanh(a - y); }, 1.0, 0.2, 1.0);
}

}  // namespace

TEST(Erm, SingleRowPerfectRowAndTies) {
  const DiscreteDistribution d({Atom{{0.0}, 0.5}, Atom{{1.0}, -0.5}}, {0.5, 0.5}, 1.0);
  const Sample s{{0, 1, 1}};
  EXPECT_EQ(erm(s, d, kSq, Dictionary({{0.0, 0.0}}, 1.0)), 0u);
  EXPECT_EQ(erm(s, d, kSq, Dictionary({{0.0, 0.0}, {0.5, -0.5}, {0.1, 0.1}}, 1.0)), 1u);
  EXPECT_EQ(erm(s, d, kSq, Dictionary({{0.2, 0.0}, {0.2, 0.0}}, 1.0)), 0u);
}

TEST(Star, SingleRowReturnsCanonicalLambda) {
  const auto inst = harness::random_instance(1, 0, {3, 6, 1, 1, 1.0});
  const auto s = draw_sample(inst.dist, 20, 1);
  const auto sol = star(s, inst.dist, kSq, *inst.dictionary);
  EXPECT_EQ(sol.erm_index, 0u);
  EXPECT_EQ(sol.partner_index, 0u);
  EXPECT_EQ(sol.lambda, 1.0);
  EXPECT_NEAR(sol.empirical_risk, empirical_risk(s, inst.dist, kSq, inst.dictionary->row(0)).value, 1e-15);
}

TEST(Star, ClosedFormLambdaMatchesDenseGrid) {
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto inst = harness::random_instance(2, rep, {3, 10, 2, 6, 1.0});
    const auto& dict = *inst.dictionary;
    const auto s = draw_sample(inst.dist, 30, 2, rep);
    const auto sol = star(s, inst.dist, kSq, dict);
    if (sol.partner_index == sol.erm_index) continue;
    // Grid oracle on the chosen segment, evaluated through the quadratic's
    // coefficients so 10^6 points stay cheap.
    const double r0 = mixture_risk(s, inst.dist, dict, sol.erm_index, sol.partner_index, 0.0);
    const double r1 = mixture_risk(s, inst.dist, dict, sol.erm_index, sol.partner_index, 1.0);
    const double rh = mixture_risk(s, inst.dist, dict, sol.erm_index, sol.partner_index, 0.5);
    const double qa = 2.0 * (r0 + r1 - 2.0 * rh), qb = r1 - r0 - qa;
    double best_l = 0.0, best = r0;
    for (int k = 0; k <= 1000000; ++k) {
      const double l = k / 1e6;
      const double v = r0 + qb * l + qa * l * l;
      if (v < best) best = v, best_l = l;
    }
    EXPECT_NEAR(sol.lambda, best_l, 2e-6) << "replicate " << rep;
  }
}

TEST(Star, MixtureIsTwoSparseAndNoWorseThanErm) {
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    const auto inst = harness::random_instance(3, rep);
    const auto& dict = *inst.dictionary;
    const auto s = draw_sample(inst.dist, 1 + rep % 40, 3, rep);
    const auto sol = star(s, inst.dist, kSq, dict);
    EXPECT_GE(sol.lambda, 0.0);
    EXPECT_LE(sol.lambda, 1.0);
    EXPECT_LE(sol.weights.sparsity(), 2u);
    const double mix = empirical_risk(s, inst.dist, kSq, evaluate(dict, sol.weights)).value;
    EXPECT_NEAR(sol.empirical_risk, mix, 1e-12);
    const double erm_risk = empirical_risk(s, inst.dist, kSq, dict.row(sol.erm_index)).value;
    EXPECT_LE(sol.empirical_risk, erm_risk + 1e-15);
    for (std::size_t j = 0; j < dict.m(); ++j)
      EXPECT_LE(erm_risk, empirical_risk(s, inst.dist, kSq, dict.row(j)).value);
  }
}

TEST(Star, TernarySearchAgreesWithGridForCustomLoss) {
  const auto loss = absolute_like_loss();
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto inst = harness::random_instance(4, rep, {3, 8, 2, 4, 1.0});
    const auto& dict = *inst.dictionary;
    const auto s = draw_sample(inst.dist, 25, 4, rep);
    const auto sol = star(s, inst.dist, loss, dict);
    double best = 1e300;
    for (std::size_t j = 0; j < dict.m(); ++j)
      for (int k = 0; k <= 2000; ++k) {
        const auto w = PredictorWeights::segment(dict.m(), sol.erm_index, j, k / 2000.0);
        best = std::min(best, empirical_risk(s, inst.dist, loss, evaluate(dict, w)).value);
      }
    EXPECT_LE(sol.empirical_risk, best + 1e-9);
  }
}

TEST(Star, OffsetConditionHoldsAgainstEveryRow) {
  for (std::uint64_t rep = 0; rep < 300; ++rep) {
    const auto inst = harness::random_instance(5, rep);
    const auto& dict = *inst.dictionary;
    CounterRng rng(5, rep, Stream::partner);
    const auto s = draw_sample(inst.dist, 1 + rng.below(50), 5, rep);
    const auto sol = star(s, inst.dist, kSq, dict);
    for (std::size_t g = 0; g < dict.m(); ++g)
      EXPECT_TRUE(check_offset(s, inst.dist, kSq, dict, sol.weights, g, 1.0 / 18.0, 0.0).holds);
  }
}

TEST(Star, OffsetConditionFailsWithInflatedGamma) {
  std::size_t failures = 0;
  for (std::uint64_t rep = 0; rep < 300; ++rep) {
    const auto inst = harness::random_instance(5, rep);
    const auto& dict = *inst.dictionary;
    const auto s = draw_sample(inst.dist, 30, 5, rep);
    const auto sol = star(s, inst.dist, kSq, dict);
    for (std::size_t g = 0; g < dict.m(); ++g)
      failures += !check_offset(s, inst.dist, kSq, dict, sol.weights, g, 10.0, 0.0).holds;
  }
  EXPECT_GT(failures, 0u);
}

TEST(Midpoint, SingleRowIsTheRowItself) {
  const auto inst = harness::random_instance(6, 0, {3, 6, 1, 1, 1.0});
  const auto s = draw_sample(inst.dist, 10, 6);
  const auto sol = midpoint(s, inst.dist, kSq, *inst.dictionary, 0.1);
  EXPECT_EQ(sol.partner_index, 0u);
  EXPECT_EQ(sol.weights[0], 1.0);
  EXPECT_THROW(midpoint(s, inst.dist, kSq, *inst.dictionary, 0.0), ValidationError);
  EXPECT_THROW(midpoint(s, inst.dist, kSq, *inst.dictionary, 1.0), ValidationError);
  EXPECT_THROW(midpoint(s, inst.dist, kSq, *inst.dictionary, 0.1, 0.0), ValidationError);
}

TEST(Midpoint, ErmIsAdmittedAndWeightsAreHalves) {
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    const auto inst = harness::random_instance(7, rep, {2, 12, 2, 10, 1.0});
    const auto& dict = *inst.dictionary;
    const auto s = draw_sample(inst.dist, 5 + rep % 60, 7, rep);
    const auto sol = midpoint(s, inst.dist, kSq, dict, 0.05);
    const auto& set = sol.almost_minimizer_set;
    EXPECT_NE(std::find(set.begin(), set.end(), sol.erm_index), set.end());
    EXPECT_NE(std::find(set.begin(), set.end(), sol.partner_index), set.end());
    if (sol.partner_index != sol.erm_index) {
      EXPECT_EQ(sol.weights[sol.erm_index], 0.5);
      EXPECT_EQ(sol.weights[sol.partner_index], 0.5);
      EXPECT_EQ(sol.weights.sparsity(), 2u);
    }
    const double erm_risk = empirical_risk(s, inst.dist, kSq, dict.row(sol.erm_index)).value;
    EXPECT_LE(sol.empirical_risk, erm_risk + 1e-15);
    // Admission rule re-derived from scratch.
    for (std::size_t j = 0; j < dict.m(); ++j) {
      const double sq = empirical_sq_norm(s, inst.dist, difference(dict.row(j), dict.row(sol.erm_index)));
      const double L = std::log(2.0 * dict.m() / 0.05);
      const double d = std::sqrt(sq * L / s.n()) + dict.b() * L / s.n();
      const bool in = empirical_risk(s, inst.dist, kSq, dict.row(j)).value <= erm_risk + 4.0 * kSq.C_b * d;
      EXPECT_EQ(in, std::find(set.begin(), set.end(), j) != set.end());
    }
  }
}

TEST(Midpoint, DesignedInstancePicksTruthAsPartner) {
  // y = 0 on both atoms; the sample only sees atom 0. Row 0 wins on the
  // sample, row 1 is the population minimizer, and their midpoint nearly
  // interpolates atom 0. Row 2 is far off.
  const DiscreteDistribution d({Atom{{0.0}, 0.0}, Atom{{1.0}, 0.0}}, {0.5, 0.5}, 1.0);
  const Dictionary dict({{0.29, 0.5}, {-0.3, 0.1}, {0.9, -0.9}}, 1.0);
  const Sample s{{0, 0, 0, 0}};
  const auto sol = midpoint(s, d, kSq, dict, 0.1);
  EXPECT_EQ(sol.erm_index, 0u);
  const auto gstar = population_minimizer(d, kSq, dict).gstar_index;
  ASSERT_EQ(gstar, 1u);
  ASSERT_NE(std::find(sol.almost_minimizer_set.begin(), sol.almost_minimizer_set.end(), gstar),
            sol.almost_minimizer_set.end());
  std::size_t best = 0;
  double best_r = 1e300;
  for (std::size_t j = 0; j < dict.m(); ++j) {
    const double r = mixture_risk(s, d, dict, sol.erm_index, j, 0.5);
    if (r < best_r) best_r = r, best = j;
  }
  EXPECT_EQ(best, gstar);
  EXPECT_EQ(sol.partner_index, gstar);
}

TEST(Midpoint, OffsetConditionAgainstTruthWithFittedEpsilon) {
  const double delta = 0.05;
  std::size_t fails = 0, trials = 0;
  for (std::uint64_t rep = 0; rep < 4000; ++rep) {
    const auto inst = rep % 2 ? harness::multiscale_instance(900 + rep % 40) : harness::random_instance(909, rep);
    const auto& dict = *inst.dictionary;
    const std::size_t n = std::size_t{16} << ((rep / 2) % 6);
    const auto s = draw_sample(inst.dist, n, 909, rep);
    const auto gs = population_minimizer(inst.dist, kSq, dict).gstar_index;
    const auto sol = midpoint(s, inst.dist, kSq, dict, delta);
    const auto r = check_offset(s, inst.dist, kSq, dict, sol.weights, gs, kSq.gamma_sc / 64.0,
                                midpoint_epsilon(kSq, dict.m(), n, delta));
    fails += !r.holds;
    ++trials;
  }
  const double freq = static_cast<double>(fails) / trials;
  EXPECT_LE(freq, delta + 3.0 * std::sqrt(delta * (1 - delta) / trials));
}

TEST(Offset, TrivialCasesAndErrors) {
  const auto inst = harness::random_instance(8, 0, {3, 6, 2, 4, 1.0});
  const auto& dict = *inst.dictionary;
  const auto s = draw_sample(inst.dist, 12, 8);
  const auto r = check_offset(s, inst.dist, kSq, dict, PredictorWeights::unit(dict.m(), 1), 1, 0.5, 0.0);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.quadratic, 0.0);
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.margin, r.rhs - r.lhs);
  EXPECT_THROW(check_offset(s, inst.dist, kSq, dict, PredictorWeights::unit(dict.m(), 0), 0, 0.0, 0.0),
               ValidationError);
  // ERM never has positive lhs.
  const auto e = erm(s, inst.dist, kSq, dict);
  for (std::size_t g = 0; g < dict.m(); ++g)
    EXPECT_LE(check_offset(s, inst.dist, kSq, dict, PredictorWeights::unit(dict.m(), e), g, 1e-9, 0.0).lhs, 0.0);
}

TEST(Loss, SquaredLossStrongConvexityCertificateOnGrid) {
  const double g = kSq.gamma_sc;
  for (double y = -1.0; y <= 1.0; y += 0.25)
    for (double a = -1.0; a <= 1.0; a += 0.25)
      for (double c = -1.0; c <= 1.0; c += 0.25)
        for (double l = 0.0; l <= 1.0; l += 0.125) {
          const double lhs = loss_value(kSq, l * a + (1 - l) * c, y);
          const double rhs = l * loss_value(kSq, a, y) + (1 - l) * loss_value(kSq, c, y) -
                             g / 2 * l * (1 - l) * (a - c) * (a - c);
          EXPECT_LE(lhs, rhs + 1e-14);
        }
}
