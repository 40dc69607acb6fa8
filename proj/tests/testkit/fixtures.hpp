#pragma once

// Seeded model and batch generators shared by the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "repsim/generators.hpp"
#include "repsim/model.hpp"

namespace repsim::testkit {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline Matrix gaussian(std::uint64_t seed, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  return repsim::detail::gaussian_matrix(rng, r, c, sd);
}

/// Random ReLU model with one hidden layer of width 8.
inline Model small_model(std::uint64_t seed, std::size_t d, std::size_t m, std::size_t k,
                         double unembedding_scale = 1.0) {
  std::mt19937_64 rng(seed);
  Model mdl = repsim::detail::random_mlp_model(rng, d, 8, m, k);
  return Model(mdl.f(), Unembeddings(unembedding_scale * mdl.g().matrix()));
}

/// Random well-conditioned m x m matrix.
inline Matrix invertible(std::uint64_t seed, std::size_t m) {
  const auto mi = static_cast<Eigen::Index>(m);
  Matrix a = Matrix::Identity(mi, mi) + gaussian(seed, mi, mi, 0.4);
  while (condition_number(a) > 50.0) a += Matrix::Identity(mi, mi);
  return a;
}

}  // namespace repsim::testkit
