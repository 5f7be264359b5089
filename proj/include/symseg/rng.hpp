#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>

namespace symseg {

// Deterministic random source. std::mt19937_64 has a fully specified
// integer sequence, and the distributions below are written out by hand
// because the standard library's distribution objects are not guaranteed
// to produce identical streams across implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] via rejection-free modulo; the bias is
  // negligible for the small ranges used here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  // Standard normal via Box-Muller on the hand-rolled uniform.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925287;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  Eigen::ArrayXd uniform_array(Eigen::Index n, double lo, double hi) {
    Eigen::ArrayXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = uniform(lo, hi);
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace symseg
