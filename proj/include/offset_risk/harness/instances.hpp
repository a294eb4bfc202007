#ifndef OFFSET_RISK_HARNESS_INSTANCES_HPP
#define OFFSET_RISK_HARNESS_INSTANCES_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "offset_risk/complexity.hpp"
#include "offset_risk/concentration.hpp"
#include "offset_risk/instance_io.hpp"
#include "offset_risk/model.hpp"
#include "offset_risk/rng.hpp"

namespace offset_risk::harness {

/// Random probability vector with every entry positive.
inline std::vector<double> random_probs(CounterRng& rng, std::size_t size) {
  std::vector<double> p(size);
  double total = 0.0;
  for (auto& v : p) {
    v = 0.05 + rng.uniform();
    total += v;
  }
  for (auto& v : p) v /= total;
  return p;
}

struct RandomInstanceShape {
  std::size_t min_support = 2;
  std::size_t max_support = 12;
  std::size_t min_m = 1;
  std::size_t max_m = 10;
  double b = 1.0;
};

/// Random finite-support distribution with labels in [-b, b] and a random
/// dictionary with values in [-b, b]. Features are one-hot atom ids.
inline Instance random_instance(std::uint64_t seed, std::uint64_t replicate,
                                const RandomInstanceShape& shape = {}) {
  CounterRng rng(seed, replicate, Stream::instance);
  const std::size_t support = shape.min_support + rng.below(shape.max_support - shape.min_support + 1);
  const std::size_t m = shape.min_m + rng.below(shape.max_m - shape.min_m + 1);
  std::vector<Atom> atoms(support);
  for (std::size_t a = 0; a < support; ++a) {
    atoms[a].x = {static_cast<double>(a)};
    atoms[a].y = rng.uniform(-shape.b, shape.b);
  }
  std::vector<AtomFunction> rows(m, AtomFunction(support));
  for (auto& row : rows)
    for (auto& v : row) v = rng.uniform(-shape.b, shape.b);
  DiscreteDistribution dist(std::move(atoms), random_probs(rng, support), shape.b);
  return Instance{std::move(dist), Dictionary(std::move(rows), shape.b)};
}

struct MultiscaleShape {
  std::size_t support = 32;
  std::size_t m = 16;
  double b = 1.0;
  double signal = 0.3;  // |g*| bound
  double noise = 0.5;   // Y = g*(X) +- noise
  double scale = 0.49;  // s_j^2 = scale * 2^{-j}
};

/// Dictionary-contains-truth instance. Each support point carries both
/// noise signs, so the regression function is g* and it lies in the
/// dictionary. The other rows are g* + s_j phi_j with random sign patterns
/// phi_j and geometrically shrinking s_j, so that at every sample size some
/// competitor sits near the resolution limit and the excess-risk quantile
/// decays like 1/n instead of collapsing to 0.
inline Instance multiscale_instance(std::uint64_t seed, const MultiscaleShape& shape = {}) {
  if (shape.m < 1 || shape.support < 1) throw ValidationError("multiscale instance: m and support must be positive");
  if (shape.signal + shape.noise > shape.b) throw ValidationError("multiscale instance: labels exceed b");
  CounterRng rng(seed, 0, Stream::instance);
  AtomFunction gstar(shape.support);
  for (auto& v : gstar) v = rng.uniform(-shape.signal, shape.signal);

  std::vector<Atom> atoms;
  std::vector<double> probs;
  const auto base_probs = random_probs(rng, shape.support);
  for (std::size_t a = 0; a < shape.support; ++a) {
    for (double sign : {-1.0, 1.0}) {
      atoms.push_back({{static_cast<double>(a)}, gstar[a] + sign * shape.noise});
      probs.push_back(0.5 * base_probs[a]);
    }
  }
  std::vector<AtomFunction> rows;
  auto lift = [&](const AtomFunction& f) {
    AtomFunction out(atoms.size());
    for (std::size_t a = 0; a < shape.support; ++a) out[2 * a] = out[2 * a + 1] = f[a];
    return out;
  };
  rows.push_back(lift(gstar));
  for (std::size_t j = 0; j + 1 < shape.m; ++j) {
    const double s = std::sqrt(shape.scale * std::ldexp(1.0, -static_cast<int>(j)));
    AtomFunction g(shape.support);
    for (std::size_t a = 0; a < shape.support; ++a) g[a] = gstar[a] + s * rng.rademacher();
    rows.push_back(lift(g));
  }
  DiscreteDistribution dist(std::move(atoms), std::move(probs), shape.b);
  return Instance{std::move(dist), Dictionary(std::move(rows), shape.b)};
}

/// Random distribution over one-hot features together with a random class
/// of 2..8 functions with values in [-1, 1]. The star hull flag is set.
struct RandomClass {
  DiscreteDistribution dist;
  FiniteClassSpec cls;
};

inline RandomClass random_star_class(std::uint64_t seed, std::uint64_t replicate) {
  CounterRng rng(seed, replicate, Stream::instance);
  const std::size_t support = 4 + rng.below(13);
  const std::size_t H = 2 + rng.below(7);
  std::vector<Atom> atoms(support);
  for (std::size_t a = 0; a < support; ++a) atoms[a] = {{static_cast<double>(a)}, 0.0};
  FiniteClassSpec cls;
  cls.star_hull = true;
  cls.base.assign(H, AtomFunction(support));
  for (auto& h : cls.base)
    for (auto& v : h) v = rng.uniform(-1.0, 1.0);
  return {DiscreteDistribution(std::move(atoms), random_probs(rng, support), 1.0), std::move(cls)};
}

/// Random multiplier setup: 2..10 feature points, 3..20 joint atoms with
/// multipliers in [-2, 2], 1..6 class functions in [-1, 1], gamma in [0.1, 2].
inline MultiplierSetup random_multiplier_setup(std::uint64_t seed, std::uint64_t replicate) {
  CounterRng rng(seed, replicate, Stream::instance);
  const std::size_t xs = 2 + rng.below(9);
  const std::size_t joint = 3 + rng.below(18);
  const std::size_t H = 1 + rng.below(6);
  std::vector<JointAtom> atoms(joint);
  for (auto& a : atoms) a = {rng.below(xs), rng.uniform(-2.0, 2.0)};
  FiniteClassSpec cls;
  cls.star_hull = true;
  cls.base.assign(H, AtomFunction(xs));
  for (auto& h : cls.base)
    for (auto& v : h) v = rng.uniform(-1.0, 1.0);
  const double gamma = rng.uniform(0.1, 2.0);
  return MultiplierSetup(std::move(atoms), random_probs(rng, joint), std::move(cls), gamma);
}

/// Linear regression instance for the mirror flow: features in [0, 1]^d,
/// a comparator w* with positive entries and labels <w*, x> plus noise.
struct LinearInstance {
  DiscreteDistribution dist;
  std::vector<double> w_star;
};

inline LinearInstance random_linear_instance(std::uint64_t seed, std::uint64_t replicate) {
  CounterRng rng(seed, replicate, Stream::instance);
  const std::size_t d = 1 + rng.below(4);
  const std::size_t support = d + 2 + rng.below(10);
  std::vector<double> w_star(d);
  for (auto& v : w_star) v = rng.uniform(0.05, 1.0) / static_cast<double>(d);
  std::vector<Atom> atoms(support);
  for (auto& a : atoms) {
    a.x.resize(d);
    double y = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      a.x[j] = rng.uniform();
      y += w_star[j] * a.x[j];
    }
    a.y = y + rng.uniform(-0.1, 0.1);
  }
  return {DiscreteDistribution(std::move(atoms), random_probs(rng, support), 1.2), std::move(w_star)};
}

}  // namespace offset_risk::harness

#endif  // OFFSET_RISK_HARNESS_INSTANCES_HPP
