#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace crowdpref {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic random source. Wraps mt19937_64 and hand-rolls the few
/// distributions we need, so results never depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Requires n > 0.
  uint64_t uniform_int(uint64_t n) { return gen_() % n; }

  /// Standard normal via Box-Muller. The spare draw is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential() { return -std::log(1.0 - uniform01()); }

  /// Gamma(k, 1) for small integer shape, as a sum of exponentials.
  double gamma_int(int k) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += exponential();
    return s;
  }

  /// Beta(a, b) with integer parameters.
  double beta_int(int a, int b) {
    double x = gamma_int(a);
    double y = gamma_int(b);
    return x / (x + y);
  }

  /// Derive a child seed from a parent seed and a stream tag.
  static uint64_t mix(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace crowdpref
