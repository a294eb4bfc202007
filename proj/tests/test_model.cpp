#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "offset_risk/harness/instances.hpp"
#include "offset_risk/instance_io.hpp"
#include "offset_risk/model.hpp"

using namespace offset_risk;

namespace {

DiscreteDistribution two_atoms(double p0 = 0.5) {
  return DiscreteDistribution({Atom{{0.0}, -1.0}, Atom{{1.0}, 1.0}}, {p0, 1.0 - p0}, 1.0);
}

}  // namespace

TEST(Distribution, RejectsInvalidInputs) {
  EXPECT_THROW(DiscreteDistribution({}, {}, 1.0), ValidationError);
  EXPECT_THROW(DiscreteDistribution({Atom{{0.0}, 0.0}}, {0.9}, 1.0), ValidationError);
  EXPECT_THROW(DiscreteDistribution({Atom{{0.0}, 0.0}, Atom{{0.0}, 0.0}}, {1.2, -0.2}, 1.0), ValidationError);
  EXPECT_THROW(DiscreteDistribution({Atom{{0.0}, 2.0}}, {1.0}, 1.0), ValidationError);
  EXPECT_THROW(DiscreteDistribution({Atom{{0.0}, 0.0}}, {1.0}, 0.0), ValidationError);
  EXPECT_THROW(DiscreteDistribution({Atom{{0.0}, 0.0}, Atom{{0.0, 1.0}, 0.0}}, {0.5, 0.5}, 1.0), ValidationError);
  EXPECT_NO_THROW(DiscreteDistribution({Atom{{0.0}, 0.0}}, {1.0 + 5e-13}, 1.0));
}

TEST(DrawSample, SingleAtomGivesConstantSample) {
  const DiscreteDistribution d({Atom{{0.0}, 0.5}}, {1.0}, 1.0);
  EXPECT_EQ(draw_sample(d, 5, 3).indices, (std::vector<std::size_t>{0, 0, 0, 0, 0}));
}

TEST(DrawSample, TwoEqualAtomsFrequencyWithinFourSigma) {
  const auto s = draw_sample(two_atoms(), 10000, 1);
  const auto c = s.counts(2);
  EXPECT_NEAR(static_cast<double>(c[0]) / 10000.0, 0.5, 0.02);
}

TEST(DrawSample, DeterministicAndReplicateSensitive) {
  const auto d = two_atoms(0.3);
  EXPECT_EQ(draw_sample(d, 100, 4), draw_sample(d, 100, 4));
  EXPECT_FALSE(draw_sample(d, 100, 4, 0) == draw_sample(d, 100, 4, 1));
  EXPECT_THROW(draw_sample(d, 0, 4), ValidationError);
}

TEST(DrawSample, ZeroMassAtomsAreNeverDrawn) {
  const DiscreteDistribution d({Atom{{0.0}, 0.0}, Atom{{1.0}, 0.0}, Atom{{2.0}, 0.0}}, {0.0, 1.0, 0.0}, 1.0);
  for (auto id : draw_sample(d, 1000, 2).indices) EXPECT_EQ(id, 1u);
}

TEST(DrawSample, FrequenciesMatchProbabilitiesByChiSquare) {
  const DiscreteDistribution d({Atom{{0.0}, 0}, Atom{{1.0}, 0}, Atom{{2.0}, 0}, Atom{{3.0}, 0}},
                               {0.1, 0.2, 0.3, 0.4}, 1.0);
  const std::size_t N = 40000;
  const auto c = draw_sample(d, N, 8).counts(4);
  double chi2 = 0.0;
  for (std::size_t a = 0; a < 4; ++a) {
    const double e = d.prob(a) * N;
    chi2 += (static_cast<double>(c[a]) - e) * (static_cast<double>(c[a]) - e) / e;
  }
  EXPECT_LT(chi2, 16.27);  // 0.999 quantile, 3 df
}

TEST(EmpiricalDistribution, ProbabilitiesAreCountsOverN) {
  const Sample s{{0, 1, 1, 1}};
  const auto pn = empirical_distribution(s, two_atoms());
  EXPECT_DOUBLE_EQ(pn.prob(0), 0.25);
  EXPECT_DOUBLE_EQ(pn.prob(1), 0.75);
  EXPECT_THROW(empirical_distribution(Sample{}, two_atoms()), ValidationError);
  EXPECT_THROW(empirical_distribution(Sample{{2}}, two_atoms()), ValidationError);
}

TEST(Predict, UnitZeroAndSymmetricMixture) {
  const Dictionary dict({{1.0, 0.2}, {-1.0, 0.4}}, 1.0);
  EXPECT_DOUBLE_EQ(predict(dict, PredictorWeights::unit(2, 1), 1), 0.4);
  EXPECT_DOUBLE_EQ(predict(dict, PredictorWeights(std::vector<double>{0.0, 0.0}), 0), 0.0);
  EXPECT_DOUBLE_EQ(predict(dict, PredictorWeights(std::vector<double>{0.5, 0.5}), 0), 0.0);
  EXPECT_THROW(predict(dict, PredictorWeights::unit(3, 0), 0), ValidationError);
}

TEST(PredictorWeights, SparsityCountsNonzeros) {
  EXPECT_EQ(PredictorWeights(std::vector<double>{0.0, 0.3, 0.0, -1.0}).sparsity(), 2u);
  EXPECT_EQ(PredictorWeights::segment(4, 1, 1, 0.3).sparsity(), 1u);
  EXPECT_DOUBLE_EQ(PredictorWeights::segment(4, 1, 1, 0.3)[1], 1.0);
  EXPECT_EQ(PredictorWeights::segment(4, 1, 2, 1.0).sparsity(), 1u);
}

TEST(Predict, TwoSparseMixturesStayWithinBound) {
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    const auto inst = harness::random_instance(31, rep);
    const auto& dict = *inst.dictionary;
    CounterRng rng(31, rep, Stream::partner);
    const auto i = rng.below(dict.m()), j = rng.below(dict.m());
    const auto w = PredictorWeights::segment(dict.m(), i, j, rng.uniform());
    for (double v : evaluate(dict, w)) EXPECT_LE(std::abs(v), dict.b() + 1e-15);
  }
}

TEST(Loss, SquaredValuesAndConstants) {
  const auto l = LossSpec::squared(1.0);
  EXPECT_DOUBLE_EQ(loss_value(l, 1.0, 0.5), 0.25);
  EXPECT_DOUBLE_EQ(loss_value(l, 0.3, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(l.C_b, 4.0);
  EXPECT_DOUBLE_EQ(l.gamma_sc, 2.0);
  EXPECT_DOUBLE_EQ(l.lipschitz_prime(1.0), 6.0);
  for (double y = -1.0; y <= 1.0; y += 0.125)
    EXPECT_LE(std::abs(loss_value(l, 0.9, y) - loss_value(l, 0.1, y)), 4.0 * 0.8 + 1e-15);
  EXPECT_DOUBLE_EQ(loss_grad(l, 0.5, -0.5), 2.0);
}

TEST(Loss, CustomLossValidatesConstants) {
  auto eval = [](double a, double y) { return std::abs(a - y); };
  auto grad = [](double a, double y) { return a > y ? 1.0 : -1.0; };
  EXPECT_THROW(LossSpec::custom(eval, grad, 1.0, 2.0, 1.0), ValidationError);
  EXPECT_THROW(LossSpec::custom(nullptr, grad, 1.0, 0.5, 1.0), ValidationError);
  const auto l = LossSpec::custom(eval, grad, 2.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(loss_value(l, 0.2, -0.3), 0.5);
}

TEST(InstanceIo, JsonRoundTripPreservesInstance) {
  const auto inst = harness::random_instance(3, 1);
  const auto doc = instance_to_json(inst.dist, &*inst.dictionary);
  const auto back = instance_from_json(nlohmann::json::parse(doc.dump()));
  ASSERT_EQ(back.dist.size(), inst.dist.size());
  for (std::size_t a = 0; a < inst.dist.size(); ++a) {
    EXPECT_EQ(back.dist.prob(a), inst.dist.prob(a));
    EXPECT_EQ(back.dist.y(a), inst.dist.y(a));
  }
  EXPECT_EQ(back.dictionary->rows(), inst.dictionary->rows());
}

TEST(InstanceIo, MalformedDocumentsAreValidationErrors) {
  EXPECT_THROW(instance_from_json(nlohmann::json::parse(R"({"atoms": []})")), ValidationError);
  EXPECT_THROW(instance_from_json(nlohmann::json::parse(R"({"b": 1, "atoms": [{"y": 0}], "probs": ["x"]})")),
               ValidationError);
  EXPECT_THROW(instance_from_json(nlohmann::json::parse(
                   R"({"b": 1, "atoms": [{"y": 0}], "probs": [1], "dictionary": [[0, 1]]})")),
               ValidationError);
  EXPECT_THROW(load_instance("/nonexistent/instance.json"), ValidationError);
}
