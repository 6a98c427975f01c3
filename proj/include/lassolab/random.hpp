#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace lassolab {

/// Stream identifiers mixed into every derived seed so that two consumers
/// of the same user seed never share a random sequence.
enum class Stream : std::uint64_t {
  matrix = 1,
  noise = 2,
  support = 3,
  power_iteration = 4,
  candidates = 5,
  width = 6,
  deviation = 7,
};

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based seed derivation: (seed, stream, index) fully determines the
/// engine state, so work can be split across threads without changing results.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ index);
}

inline Engine make_engine(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Engine(derive_seed(seed, stream, index));
}

inline Eigen::VectorXd standard_normal_vector(Eigen::Index n, Engine& engine) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(engine);
  return v;
}

}  // namespace lassolab
