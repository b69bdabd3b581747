#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "vkd/matrix.hpp"

namespace vkd {

using Rng = std::mt19937_64;

// Independent generator for one consumer of randomness. Streams with different
// tags never share state, so adding draws to one consumer leaves the others
// untouched.
inline Rng make_stream(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

inline void fill_normal(Matrix& m, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : m.data()) v = dist(rng);
}

inline void fill_uniform(Matrix& m, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : m.data()) v = dist(rng);
}

inline Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  fill_normal(m, stddev, rng);
  return m;
}

}  // namespace vkd
