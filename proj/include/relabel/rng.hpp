#pragma once

// Reproducible random stream.
//
// Engine: std::mt19937_64 seeded with splitmix64(seed). Its output sequence
// is fixed by the C++ standard. Distributions are implemented here instead of
// using <random>'s, whose algorithms are implementation-defined:
//   uniform()  top 53 bits of one draw, scaled to [0, 1)
//   normal()   Box-Muller cosine branch, two uniforms per draw
//   gamma(a)   Marsaglia-Tsang squeeze; a < 1 via gamma(a + 1) * u^(1/a)
//   beta(a,b)  X / (X + Y) with X ~ gamma(a), Y ~ gamma(b)
// split() and derive() give independent sub-streams for parallel workers.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "relabel/error.hpp"

namespace relabel {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  /// Sub-stream `stream` of `seed`; a pure function of both arguments.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ull)));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double gamma(double shape) {
    if (!(shape > 0.0)) throw InvalidArgument("gamma shape must be > 0");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      return g * std::pow(1.0 - uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = 0.0;
      double v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = 1.0 - uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  Rng split() { return Rng(splitmix64(engine_() ^ 0xD1B54A32D192ED03ull)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace relabel
