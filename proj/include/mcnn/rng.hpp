#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace mcnn {

/// Seedable generator with output that is identical on every platform.
///
/// The engine is std::mt19937_64 (its output sequence is fixed by the
/// standard); the distributions are implemented here because the standard
/// library's are not portable across implementations.
///
/// Stream splitting: substream(seed, index) seeds a fresh engine from
/// splitmix64(seed) mixed with splitmix64(index). Sample i of an infinite
/// stream always uses substream(seed, i), so a stream is reproducible no
/// matter in which order or how many times its samples are drawn.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  }

  static constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  int below(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; the spare deviate is kept for the next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mcnn
