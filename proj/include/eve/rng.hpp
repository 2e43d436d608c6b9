#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "eve/tensor.hpp"

namespace eve {

// All randomness in the project flows through this class so that a seed
// pins the full trajectory. Gaussians use Box-Muller rather than
// std::normal_distribution, whose draw sequence is not pinned by the
// standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  double uniform() {
    // 53-bit mantissa in [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Tensor normal_tensor(Shape shape, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (auto& x : t.v) x = normal() * stddev;
    return t;
  }

  // Deterministic sub-stream derivation (seed mixing via splitmix64).
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace eve
