// Seeded pseudo-random source with fixed transforms (53-bit uniforms,
// Box-Muller gaussians, Fisher-Yates shuffles) so that every draw is
// bit-identical across runs and platforms for a given seed.
#pragma once

#include <flowdet/types.hpp>

#include <cstdint>
#include <random>
#include <vector>

namespace flowdet {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  Real uniform() { return static_cast<Real>(gen_() >> 11) * 0x1.0p-53; }

  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (cosine branch only).
  Real gaussian() {
    const Real u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    const Real u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Uniform integer in [0, n).
  Index below(Index n) {
    // Rejection-free modulo is biased for huge n; fine for n << 2^64.
    return static_cast<Index>(gen_() % static_cast<std::uint64_t>(n));
  }

  Vector gaussian_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  Matrix gaussian_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    // Column-major fill order is part of the determinism contract.
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = gaussian();
    return m;
  }

  void shuffle(std::vector<Index>& idx) {
    for (Index i = static_cast<Index>(idx.size()) - 1; i > 0; --i)
      std::swap(idx[i], idx[below(i + 1)]);
  }

 private:
  static constexpr Real kPi = 3.14159265358979323846;
  std::mt19937_64 gen_;
};

}  // namespace flowdet
