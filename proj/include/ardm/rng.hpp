#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ardm {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/**
 * Seeded random stream.
 *
 * Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
 * draws uniforms and normals with explicit formulas instead of the
 * implementation-defined standard distributions, so that a given seed yields
 * the same numbers with every standard library.
 *
 * Independent streams are derived from a root seed with a counter-based
 * split: Rng::stream(root, a, b) depends only on its arguments, never on how
 * many draws other streams have made.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(mix64(seed)) {}

  static Rng stream(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return Rng(mix64(mix64(root) ^ mix64(a + 0x632BE59BD9B4E019ULL) ^
                     mix64(b + 0x85157AF5ULL) * 3));
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform index in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ardm
