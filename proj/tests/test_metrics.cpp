#include <gtest/gtest.h>

#include "repsim/errors.hpp"
#include "repsim/metrics.hpp"
#include "testkit/fixtures.hpp"
#include "testkit/oracles.hpp"

using namespace repsim;
using repsim::testkit::gaussian;
using repsim::testkit::rel_err;
using repsim::testkit::small_model;

namespace {

struct Triple {
  Model a, b, c;
  Matrix x;
};

Triple random_triple(std::uint64_t seed, std::size_t k = 6, std::size_t m = 2) {
  return {small_model(mix_seed(seed, 1), 3, m, k), small_model(mix_seed(seed, 2), 3, m, k),
          small_model(mix_seed(seed, 3), 3, m, k), gaussian(mix_seed(seed, 4), 32, 3)};
}

}  // namespace

TEST(Metrics, IdenticalModelsHaveZeroDistances) {
  const Model a = small_model(1, 3, 2, 6);
  const Matrix x = gaussian(2, 20, 3);
  EXPECT_EQ(d_logit(a, a, x), 0.0);
  EXPECT_EQ(d_kl(a, a, x), 0.0);
  EXPECT_EQ(l1_logit_loss(a, a, x), 0.0);
  EXPECT_NEAR(d_rep(a, a, x, SubsetPlan::exact()).value, 0.0, 1e-12);
}

TEST(Metrics, LogitDistanceMatchesTripleSumOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t k = 4 + seed % 5;
    const std::size_t m = 1 + seed % 3;
    if (k <= m + 1) continue;
    const Model a = small_model(mix_seed(seed, 10), 3, m, k);
    const Model b = small_model(mix_seed(seed, 11), 3, m, k);
    const Matrix x = gaussian(mix_seed(seed, 12), 24, 3);
    EXPECT_LT(rel_err(d_logit(a, b, x), testkit::oracle_d_logit_triple_sum(a, b, x)), 1e-8)
        << "seed " << seed;
  }
}

TEST(Metrics, LogitDistanceHandCaseThreeLabels) {
  // k = 3, m = 1: a single input with logits u and u' (centered)
  const EmbeddingNet f = EmbeddingNet::linear(Matrix::Identity(1, 1));
  Matrix la(1, 3), lb(1, 3);
  la << 1.0, 0.0, -1.0;
  lb << 0.5, 0.5, -1.0;
  const Model a(f, Unembeddings(la)), b(f, Unembeddings(lb));
  Matrix x(1, 1);
  x << 2.0;
  // u - u' = (1, -1, 0) => squared norm 2
  EXPECT_NEAR(d_logit_sq(a, b, x), 2.0, 1e-15);
  EXPECT_NEAR(testkit::oracle_d_logit_sq_triple_sum(a, b, x), 2.0, 1e-14);
}

TEST(Metrics, AitchisonFormMatchesPerSample) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Model a = small_model(mix_seed(seed, 1), 3, 2, 6);
    const Model b = small_model(mix_seed(seed, 2), 3, 2, 6);
    const Matrix x = gaussian(seed, 5, 3);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Vector xi = x.row(i).transpose();
      const Matrix row = x.row(i);
      EXPECT_LT(rel_err(d_logit_aitchison(a, b, xi), d_logit(a, b, row)), 1e-8);
    }
  }
}

TEST(Metrics, LogitDistanceIsAMetric) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Triple t = random_triple(seed);
    const double ab = d_logit(t.a, t.b, t.x), ba = d_logit(t.b, t.a, t.x);
    EXPECT_EQ(ab, ba);
    EXPECT_LE(d_logit(t.a, t.c, t.x), ab + d_logit(t.b, t.c, t.x) + 1e-9);
  }
}

TEST(Metrics, EquivalentModelsHaveZeroLogitDistance) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Model a = small_model(seed, 3, 3, 7);
    const Model b = a.reparameterized(testkit::invertible(seed + 1000, 3));
    const Matrix x = gaussian(seed + 2000, 32, 3);
    EXPECT_LT(d_logit(a, b, x), 1e-7);
    EXPECT_LT(d_rep(a, b, x, SubsetPlan::exact()).value, 1e-7);
  }
}

TEST(Metrics, DRepExactMatchesExplicitOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t k = 4 + seed % 5;
    const std::size_t m = 1 + seed % 3;
    if (k <= m + 1) continue;
    const Model a = small_model(mix_seed(seed, 20), 3, m, k);
    const Model b = small_model(mix_seed(seed, 21), 3, m, k);
    const Matrix x = gaussian(mix_seed(seed, 22), 24, 3);
    const DRepResult r = d_rep(a, b, x, SubsetPlan::exact());
    EXPECT_EQ(r.subsets_visited, k * binomial(k - 1, m));
    EXPECT_LT(rel_err(r.value, testkit::oracle_d_rep_explicit(a, b, x)), 1e-8) << "seed " << seed;
  }
}

TEST(Metrics, SubsetCountIdentity) {
  for (std::size_t k = 3; k <= 12; ++k) {
    for (std::size_t m = 1; m + 1 < k; ++m) {
      const double n = static_cast<double>(binomial(k - 2, m - 1));
      const double j = static_cast<double>(binomial(k - 1, m));
      EXPECT_NEAR(2.0 * n / j, 2.0 * static_cast<double>(m) / static_cast<double>(k - 1), 1e-14);
    }
  }
}

TEST(Metrics, DRepSampledIsDeterministicAndCloseToExact) {
  const Model a = small_model(1, 3, 2, 8);
  const Model b = small_model(2, 3, 2, 8);
  const Matrix x = gaussian(3, 32, 3);
  const auto s1 = d_rep(a, b, x, SubsetPlan::sampled(15, 5));
  const auto s2 = d_rep(a, b, x, SubsetPlan::sampled(15, 5));
  EXPECT_EQ(s1.value, s2.value);
  EXPECT_EQ(s1.subsets_visited, 8u * 15u);
  // asking for more than C(7, 2) = 21 per pivot visits every subset once
  EXPECT_EQ(d_rep(a, b, x, SubsetPlan::sampled(200, 5)).subsets_visited, 8u * 21u);
  const double exact = d_rep(a, b, x, SubsetPlan::exact()).value;
  EXPECT_LT(rel_err(d_rep(a, b, x, SubsetPlan::sampled(200, 5)).value, exact), 1e-12);
  // the squared sampled value is an unbiased estimate of the squared exact one
  double mean_sq = 0.0;
  const int draws = 400;
  for (int s = 0; s < draws; ++s) {
    const double v = d_rep(a, b, x, SubsetPlan::sampled(15, static_cast<std::uint64_t>(s))).value;
    mean_sq += v * v / draws;
  }
  EXPECT_LT(rel_err(mean_sq, exact * exact), 0.05);
}

TEST(Metrics, DRepRejectsMismatchedDims) {
  const Model a = small_model(1, 3, 2, 8);
  const Model b = small_model(2, 3, 1, 8);
  EXPECT_THROW(d_rep(a, b, gaussian(3, 10, 3), SubsetPlan::exact()), ContractViolation);
}

TEST(Metrics, DRepSingularSubsetInExactModeThrows) {
  const Model a = small_model(1, 3, 2, 6);
  Matrix l = a.g().matrix();
  l.col(1) = l.col(0);
  const Model b(a.f(), center_unembeddings(l));
  EXPECT_THROW(d_rep(a, b, gaussian(3, 10, 3), SubsetPlan::exact()), SingularMatrixError);
}

TEST(Metrics, KlIsNonNegativeAndAsymmetric) {
  const Model a = small_model(1, 3, 2, 6, 3.0);
  const Model b = small_model(2, 3, 2, 6, 3.0);
  const Matrix x = gaussian(3, 40, 3);
  const Vector kl = kl_per_sample(a, b, x);
  EXPECT_GE(kl.minCoeff(), 0.0);
  EXPECT_NE(d_kl(a, b, x), d_kl(b, a, x));
}

TEST(Metrics, ShiftedLogitIdentityHolds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Triple t = random_triple(seed, 7, 2);
    const IdentitySides s = shifted_logit_identity_check(t.a, t.b, t.x.row(0).transpose());
    EXPECT_LT(rel_err(s.lhs, s.rhs), 1e-10);
  }
}

TEST(Metrics, NormalizedRepIdentityHoldsPerSubset) {
  const Model a = small_model(4, 3, 3, 7);
  const Model b = small_model(5, 3, 3, 7);
  const Vector x = gaussian(6, 3, 1).col(0);
  for (const auto& s : plan_subsets(7, 3, SubsetPlan::exact())) {
    const auto sides = normalized_rep_identity_check(a, b, x, s);
    EXPECT_LT(rel_err(sides.term_logit, sides.term_rep), 1e-8);
  }
}

TEST(Metrics, ComparabilityIsChecked) {
  const Model a = small_model(1, 3, 2, 6);
  const Model b = small_model(1, 3, 2, 7);
  EXPECT_THROW(d_logit(a, b, gaussian(1, 4, 3)), ContractViolation);
  EXPECT_THROW(d_logit(a, a, Matrix(0, 3)), ContractViolation);
}
