#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace isac {

/// Small deterministic generator (splitmix64 core).
///
/// Every Monte Carlo trial derives its own stream from (seed, trial_index),
/// so results are identical regardless of how trials are scheduled across
/// threads. Distribution helpers are hand-rolled: std::*_distribution is
/// implementation-defined and would break the byte-identical-output contract.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  /// Standard normal (Box-Muller, no cached spare).
  double gaussian() {
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  /// Circularly-symmetric complex Gaussian with E|n|^2 = var.
  std::complex<double> cgaussian(double var) {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-std::log(u1) * var);
    const double ph = 6.283185307179586476925287 * u2;
    return {r * std::cos(ph), r * std::sin(ph)};
  }

 private:
  std::uint64_t state_;
};

/// Independent per-trial stream derived from a master seed.
inline Rng trial_rng(std::uint64_t seed, std::uint64_t trial) {
  Rng r(seed ^ (0xd1b54a32d192ed03ull * (trial + 1)));
  r.next_u64();  // burn-in decorrelates nearby seeds
  return r;
}

}  // namespace isac
