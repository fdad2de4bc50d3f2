#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "scom/types.hpp"

namespace scom {

/// SplitMix64 step; used to derive independent substream seeds from one
/// master seed so that adding a consumer never shifts existing streams.
inline std::uint64_t split_seed(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return split_seed(s);
}

/// Seeded generator with explicit transforms, so draws do not depend on
/// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return (next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Circular complex Gaussian with per-entry variance `var` (E|x|^2 = var).
  cxd cnormal(double var = 1.0) {
    const double s = std::sqrt(var / 2.0);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  CVec cnormal_vector(Eigen::Index n, double var = 1.0) {
    CVec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = cnormal(var);
    return v;
  }

  CMat cnormal_matrix(Eigen::Index rows, Eigen::Index cols, double var = 1.0) {
    CMat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = cnormal(var);
    return m;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace scom
