#ifndef OFFSET_RISK_RNG_HPP
#define OFFSET_RISK_RNG_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>

namespace offset_risk {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Tags separating the random streams drawn inside one replicate.
enum class Stream : std::uint64_t {
  sample = 1,
  sigma = 2,
  bootstrap = 3,
  instance = 4,
  features = 5,
  partner = 6,
};

/// Counter-based generator: the i-th output is a pure function of
/// (seed, replicate, stream, i), so replicates can run in any order.
///
/// Satisfies UniformRandomBitGenerator, but the helpers below are used
/// instead of <random> distributions so that draws do not depend on the
/// standard library implementation.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t replicate = 0,
                      Stream stream = Stream::sample) noexcept
      : key_(mix64(mix64(mix64(seed + kGolden) ^ (replicate * kGolden + 1)) ^
                   static_cast<std::uint64_t>(stream))) {}

  CounterRng(std::uint64_t seed, std::uint64_t replicate,
             std::uint64_t stream) noexcept
      : CounterRng(seed, replicate, static_cast<Stream>(stream)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return mix64(key_ + (++counter_) * kGolden); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::size_t below(std::size_t n) noexcept {
    const auto bound = static_cast<std::uint64_t>(n);
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        x = (*this)();
        m = static_cast<__uint128_t>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::size_t>(m >> 64);
  }

  /// Symmetric +-1.
  int rademacher() noexcept { return ((*this)() >> 63) ? 1 : -1; }

  /// Standard normal via Box-Muller (one value per call).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace offset_risk

#endif  // OFFSET_RISK_RNG_HPP
