#pragma once

// Seeded random model pairs whose conditionals are bounded below by a floor.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "repsim/errors.hpp"
#include "repsim/model.hpp"
#include "repsim/numerics.hpp"

namespace repsim {

inline constexpr int kMaxShrinkSteps = 20;

struct TauBoundedPair {
  Model a;
  Model b;
  Matrix x;
  std::string relation;  ///< independent | perturbed | reparameterized
  int shrink_steps_a = 0;
  int shrink_steps_b = 0;
};

namespace detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix out(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) out(i, j) = normal(rng);
  return out;
}

inline Model random_mlp_model(std::mt19937_64& rng, std::size_t d, std::size_t hidden,
                              std::size_t m, std::size_t k) {
  const auto di = static_cast<Eigen::Index>(d);
  const auto hi = static_cast<Eigen::Index>(hidden);
  const auto mi = static_cast<Eigen::Index>(m);
  std::vector<DenseLayer> layers;
  layers.push_back({gaussian_matrix(rng, hi, di, std::sqrt(2.0 / static_cast<double>(d))),
                    gaussian_matrix(rng, hi, 1, 0.5).col(0)});
  layers.push_back({gaussian_matrix(rng, mi, hi, std::sqrt(2.0 / static_cast<double>(hidden))),
                    gaussian_matrix(rng, mi, 1, 0.5).col(0)});
  return Model(EmbeddingNet(std::move(layers)),
               center_unembeddings(gaussian_matrix(rng, mi, static_cast<Eigen::Index>(k), 1.0)));
}

inline Model perturbed(const Model& base, std::mt19937_64& rng, double eps) {
  std::vector<DenseLayer> layers = base.f().layers();
  for (auto& l : layers) {
    l.weight += gaussian_matrix(rng, l.weight.rows(), l.weight.cols(), eps);
    l.bias += gaussian_matrix(rng, l.bias.size(), 1, eps).col(0);
  }
  const Matrix& g = base.g().matrix();
  return Model(EmbeddingNet(std::move(layers)),
               center_unembeddings(g + gaussian_matrix(rng, g.rows(), g.cols(), eps)));
}

}  // namespace detail

/// Halves the unembeddings until tau_min(model, x) >= floor. Returns the step count.
inline int shrink_to_tau_floor(Model& model, const Matrix& x, double floor) {
  int steps = 0;
  while (tau_min(model, x) < floor) {
    if (steps == kMaxShrinkSteps) {
      throw NumericalFailure("shrink_to_tau_floor: floor " + std::to_string(floor) +
                                 " not reached after " + std::to_string(kMaxShrinkSteps) +
                                 " halvings",
                             model.rep_dim(), model.label_count(), 0.0);
    }
    model = Model(model.f(), Unembeddings(0.5 * model.g().matrix()));
    ++steps;
  }
  return steps;
}

/// Pairs come in three flavours chosen by the seed: independent draws, small
/// parameter perturbations, and reparameterized-then-perturbed copies.
inline TauBoundedPair random_tau_bounded_pair(std::size_t k, std::size_t m, std::size_t n,
                                              double tau_floor, std::uint64_t seed) {
  if (k <= m + 1) throw ContractViolation("random_tau_bounded_pair: need k > m + 1");
  if (n == 0) throw ContractViolation("random_tau_bounded_pair: n must be positive");
  if (tau_floor < 0.0 || tau_floor >= 1.0 / static_cast<double>(k)) {
    throw ContractViolation("random_tau_bounded_pair: tau_floor must lie in [0, 1/k)");
  }
  std::mt19937_64 rng(mix_seed(seed, 0x7a));
  const std::size_t d = m + 2;
  const std::size_t hidden = 16;
  Matrix x = detail::gaussian_matrix(rng, static_cast<Eigen::Index>(n),
                                     static_cast<Eigen::Index>(d), 1.0);
  Model a = detail::random_mlp_model(rng, d, hidden, m, k);
  const int steps_a = shrink_to_tau_floor(a, x, tau_floor);

  std::uniform_int_distribution<int> pick(0, 2);
  std::uniform_real_distribution<double> log_eps(std::log(1e-3), std::log(0.3));
  const int kind = pick(rng);
  const double eps = std::exp(log_eps(rng));
  std::string relation;
  Model b = a;
  if (kind == 0) {
    relation = "independent";
    b = detail::random_mlp_model(rng, d, hidden, m, k);
  } else if (kind == 1) {
    relation = "perturbed";
    b = detail::perturbed(a, rng, eps);
  } else {
    relation = "reparameterized";
    const auto mi = static_cast<Eigen::Index>(m);
    Matrix t = Matrix::Identity(mi, mi) + detail::gaussian_matrix(rng, mi, mi, 0.5);
    while (condition_number(t) > 1e3) t += Matrix::Identity(mi, mi);
    b = detail::perturbed(a.reparameterized(t), rng, eps);
  }
  const int steps_b = shrink_to_tau_floor(b, x, tau_floor);
  return TauBoundedPair{std::move(a), std::move(b), std::move(x), relation, steps_a, steps_b};
}

}  // namespace repsim
