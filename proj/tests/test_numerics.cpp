#include <gtest/gtest.h>

#include <set>

#include "repsim/errors.hpp"
#include "repsim/numerics.hpp"
#include "testkit/fixtures.hpp"
#include "testkit/oracles.hpp"

using namespace repsim;
using repsim::testkit::gaussian;

TEST(Numerics, SvdReconstructsAndSortsDescending) {
  const Matrix a = gaussian(3, 6, 4);
  const SvdResult s = svd(a);
  EXPECT_LT((s.reconstruct() - a).norm(), 1e-12 * a.norm());
  for (Eigen::Index i = 1; i < s.singular_values.size(); ++i) {
    EXPECT_GE(s.singular_values(i - 1), s.singular_values(i));
  }
}

TEST(Numerics, SingularValuesAgreeWithJacobiGramOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix a = gaussian(seed, 5, 3);
    const Vector s = singular_values(a);
    const auto ref = testkit::gram_singular_values(a);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      EXPECT_NEAR(s(i), ref[static_cast<std::size_t>(i)], 1e-10 * s(0));
    }
  }
}

TEST(Numerics, ConditionAndRank) {
  EXPECT_DOUBLE_EQ(condition_number(Matrix::Identity(3, 3)), 1.0);
  Matrix r(3, 3);
  r << 1, 2, 3, 2, 4, 6, 1, 0, 1;
  EXPECT_EQ(numerical_rank(r), 2u);
  EXPECT_EQ(numerical_rank(Matrix::Zero(2, 2)), 0u);
  EXPECT_TRUE(std::isinf(condition_number(Matrix::Zero(2, 2))));
}

TEST(Numerics, SymEigDescendingAndReconstructs) {
  const Matrix g = gaussian(9, 4, 4);
  const Matrix a = g * g.transpose();
  const SymEigResult e = sym_eig(a);
  for (Eigen::Index i = 1; i < 4; ++i) EXPECT_GE(e.eigenvalues(i - 1), e.eigenvalues(i));
  const Matrix rec = e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
  EXPECT_LT((rec - a).norm(), 1e-12 * a.norm());
}

TEST(Numerics, SymEigRejectsAsymmetricInput) {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 1) = 1e-6;
  EXPECT_THROW(sym_eig(a), ContractViolation);
}

TEST(Numerics, SolveMatchesCramer) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix a = testkit::invertible(seed, 3);
    const Matrix b = gaussian(seed + 100, 3, 1);
    const Matrix x = solve(a, b);
    testkit::Grid ga(3, std::vector<double>(3));
    std::vector<double> gb(3);
    for (int r = 0; r < 3; ++r) {
      gb[r] = b(r, 0);
      for (int c = 0; c < 3; ++c) ga[r][c] = a(r, c);
    }
    const auto ref = testkit::cramer_solve(ga, gb);
    for (int r = 0; r < 3; ++r) EXPECT_NEAR(x(r, 0), ref[r], 1e-10);
  }
}

TEST(Numerics, SolveRefusesSingularMatrix) {
  Matrix a(2, 2);
  a << 1, 2, 2, 4;
  EXPECT_THROW(solve(a, Matrix::Identity(2, 2)), SingularMatrixError);
  EXPECT_THROW(solve(gaussian(1, 2, 3), Matrix::Identity(2, 2)), ContractViolation);
}

TEST(Numerics, InverseSqrtSpd) {
  const Matrix g = gaussian(4, 3, 3);
  const Matrix a = g * g.transpose() + Matrix::Identity(3, 3);
  const Matrix w = inverse_sqrt_spd(a, "test");
  EXPECT_LT((w * a * w - Matrix::Identity(3, 3)).norm(), 1e-10);
  Matrix singular = Matrix::Zero(2, 2);
  singular(0, 0) = 1.0;
  EXPECT_THROW(inverse_sqrt_spd(singular, "test"), RankDeficiencyError);
}

TEST(Numerics, BinomialAndCombinations) {
  EXPECT_EQ(binomial(9, 3), 84u);
  EXPECT_EQ(binomial(5, 0), 1u);
  EXPECT_EQ(binomial(3, 5), 0u);
  EXPECT_EQ(binomial(200, 100), std::numeric_limits<std::uint64_t>::max());
  std::vector<std::size_t> idx{0, 1, 2};
  std::size_t count = 1;
  while (next_combination(idx, 7)) ++count;
  EXPECT_EQ(count, binomial(7, 3));
}

TEST(Numerics, MixSeedIsDeterministicAndSpreads) {
  EXPECT_EQ(mix_seed(5, 1), mix_seed(5, 1));
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 50; ++a)
    for (std::uint64_t b = 0; b < 4; ++b) seen.insert(mix_seed(a, b));
  EXPECT_EQ(seen.size(), 200u);
}

TEST(Numerics, LogSoftmaxIsStableForLargeLogits) {
  Matrix u(1, 3);
  u << 1000.0, 1001.0, -1000.0;
  const Matrix lp = log_softmax_rows(u);
  EXPECT_TRUE(lp.allFinite());
  // log-probabilities carry the rounding of |u| ~ 1e3, one ulp ~ 1e-13
  EXPECT_NEAR(std::exp(lp(0, 0)) + std::exp(lp(0, 1)) + std::exp(lp(0, 2)), 1.0, 1e-12);
  EXPECT_NEAR(lp(0, 1), -std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(softmax_rows(u).row(0).sum(), 1.0, 1e-15);
}

TEST(Numerics, ArgmaxBreaksTiesLow) {
  Matrix m(1, 4);
  m << 0.2, 0.5, 0.5, 0.1;
  EXPECT_EQ(argmax_row(m, 0), 1);
}

TEST(Numerics, NonFiniteInputsAreRejected) {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 0) = std::nan("");
  EXPECT_THROW(svd(a), ContractViolation);
}
