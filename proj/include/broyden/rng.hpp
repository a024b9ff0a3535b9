#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

#include "broyden/linalg.hpp"

namespace broyden {

/// Seedable generator used for every random draw in the library.
///
/// Streams are split by hashing (master seed, tag) through SplitMix64, so a
/// new stream never shifts the draws of existing ones.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return mix(mix(master) ^ stream);
  }

  static std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return derive_seed(master, h);
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  Vector uniform_vector(std::size_t n, double lo, double hi) {
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }

  Vector normal_vector(std::size_t n) {
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t i = 0; i < rows; ++i) m(i, j) = uniform(lo, hi);
    }
    return m;
  }

  /// Standard normal draw normalized to unit length: uniform on S^{n-1}.
  Vector unit_sphere(std::size_t n) {
    for (;;) {
      Vector v = normal_vector(n);
      const double len = norm2(v);
      if (len > 0.0) return (1.0 / len) * std::move(v);
    }
  }

  /// Uniform point in the ball of `radius` centred at the origin.
  Vector ball(std::size_t n, double radius) {
    Vector dir = unit_sphere(n);
    const double rho = radius * std::pow(uniform(0.0, 1.0), 1.0 / static_cast<double>(n));
    return rho * std::move(dir);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace broyden
