#pragma once

#include <cstdint>
#include <random>

#include "dynlab/types.hpp"

namespace dynlab {

using Rng = std::mt19937_64;

// Stateless sub-seed derivation (splitmix64 finalizer). Used so that every
// parallel work item owns an independent stream keyed by its index.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Vec gaussian_vector(Rng& rng, Eigen::Index n, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline Vec unit_direction(Rng& rng, Eigen::Index n) {
  Vec v = gaussian_vector(rng, n);
  return v / v.norm();
}

}  // namespace dynlab
