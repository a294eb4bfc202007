#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <set>
#include <stdexcept>
#include <vector>

#include "offset_risk/parallel.hpp"
#include "offset_risk/rng.hpp"
#include "offset_risk/stats.hpp"

using namespace offset_risk;

namespace {

struct ThreadsEnv {
  explicit ThreadsEnv(const char* value) {
    if (const char* old = std::getenv("OFFSET_RISK_THREADS")) saved = old;
    ::setenv("OFFSET_RISK_THREADS", value, 1);
  }
  ~ThreadsEnv() {
    if (saved.empty()) {
      ::unsetenv("OFFSET_RISK_THREADS");
    } else {
      ::setenv("OFFSET_RISK_THREADS", saved.c_str(), 1);
    }
  }
  std::string saved;
};

}  // namespace

TEST(CounterRng, SameKeyGivesSameStream) {
  CounterRng a(42, 3, Stream::sigma), b(42, 3, Stream::sigma);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(CounterRng, DistinctKeysGiveDistinctStreams) {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t seed : {1u, 2u})
    for (std::uint64_t rep : {0u, 1u, 2u})
      for (auto s : {Stream::sample, Stream::sigma, Stream::bootstrap}) firsts.insert(CounterRng(seed, rep, s)());
  EXPECT_EQ(firsts.size(), 18u);
}

TEST(CounterRng, UniformStaysInUnitInterval) {
  CounterRng rng(5);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / N, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / N));
}

TEST(CounterRng, BelowIsUniformByChiSquare) {
  CounterRng rng(9);
  const std::size_t k = 7, N = 70000;
  std::vector<double> counts(k, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto v = rng.below(k);
    ASSERT_LT(v, k);
    counts[v] += 1.0;
  }
  double chi2 = 0.0;
  const double e = static_cast<double>(N) / k;
  for (double c : counts) chi2 += (c - e) * (c - e) / e;
  EXPECT_LT(chi2, 22.46);  // 0.999 quantile of chi-square with 6 df
}

TEST(CounterRng, RademacherAndNormalMoments) {
  CounterRng rng(13);
  const int N = 200000;
  double rs = 0.0, ns = 0.0, nss = 0.0;
  for (int i = 0; i < N; ++i) {
    const int r = rng.rademacher();
    ASSERT_TRUE(r == 1 || r == -1);
    rs += r;
    const double z = rng.normal();
    ns += z;
    nss += z * z;
  }
  EXPECT_NEAR(rs / N, 0.0, 4.0 / std::sqrt(N));
  EXPECT_NEAR(ns / N, 0.0, 4.0 / std::sqrt(N));
  EXPECT_NEAR(nss / N, 1.0, 4.0 * std::sqrt(2.0 / N));
}

TEST(Stats, CompensatedSumRecoversCancellation) {
  std::vector<double> xs = {1e16, 1.0, -1e16, 1.0};
  EXPECT_EQ(stats::sum(xs), 2.0);
}

TEST(Stats, MeanStddevStandardError) {
  std::vector<double> xs = {2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(stats::mean(xs), 5.0);
  EXPECT_NEAR(stats::stddev(xs), std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_NEAR(stats::standard_error(xs), std::sqrt(32.0 / 7.0) / std::sqrt(8.0), 1e-12);
}

TEST(Stats, QuantileInterpolatesOrderStatistics) {
  std::vector<double> xs = {5, 1, 4, 2, 3};
  EXPECT_DOUBLE_EQ(stats::quantile(xs, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(stats::quantile(xs, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(stats::quantile(xs, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(stats::quantile(xs, 0.95), 4.8);
  EXPECT_DOUBLE_EQ(stats::median({1, 2, 3, 4}), 2.5);
  EXPECT_THROW(stats::quantile({}, 0.5), std::invalid_argument);
  EXPECT_THROW(stats::quantile(xs, 1.5), std::invalid_argument);
}

TEST(Stats, LeastSquaresRecoversExactLine) {
  std::vector<double> x = {0, 1, 2, 3}, y = {1, 3, 5, 7};
  const auto fit = stats::least_squares(x, y);
  EXPECT_NEAR(fit.slope, 2.0, 1e-14);
  EXPECT_NEAR(fit.intercept, 1.0, 1e-14);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-14);
  EXPECT_THROW(stats::least_squares(std::vector<double>{1, 1}, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(Parallel, WorkerCountFollowsEnvironment) {
  {
    ThreadsEnv env("3");
    EXPECT_EQ(worker_count(), 3u);
  }
  {
    ThreadsEnv env("junk");
    EXPECT_GE(worker_count(), 1u);
  }
}

TEST(Parallel, EveryIndexRunsOnceAndResultIsScheduleFree) {
  for (const char* threads : {"1", "4"}) {
    ThreadsEnv env(threads);
    std::vector<std::atomic<int>> hits(1000);
    std::vector<double> out(1000);
    parallel_for(hits.size(), [&](std::size_t i) {
      hits[i]++;
      CounterRng rng(1, i);
      out[i] = rng.uniform();
    });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
    EXPECT_DOUBLE_EQ(out[17], CounterRng(1, 17).uniform());
  }
}

TEST(Parallel, RethrowsWorkerException) {
  ThreadsEnv env("4");
  EXPECT_THROW(parallel_for(100, [](std::size_t i) {
                 if (i == 57) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}
