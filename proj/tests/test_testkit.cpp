#include <gtest/gtest.h>

#include "testkit/fixtures.hpp"
#include "testkit/oracles.hpp"

using namespace repsim;
using namespace repsim::testkit;

TEST(Testkit, CramerSolvesSmallSystem) {
  const Grid a{{2, 1, 0}, {1, 3, 1}, {0, 1, 4}};
  const auto x = cramer_solve(a, {3, 5, 5});
  EXPECT_NEAR(x[0], 1.0, 1e-14);
  EXPECT_NEAR(x[1], 1.0, 1e-14);
  EXPECT_NEAR(x[2], 1.0, 1e-14);
  EXPECT_THROW(cramer_solve({{1, 2}, {2, 4}}, {1, 1}), std::domain_error);
}

TEST(Testkit, GramSingularValuesOfKnownMatrix) {
  Matrix a = Matrix::Zero(3, 2);
  a(0, 0) = 3.0;
  a(1, 1) = -2.0;
  const auto s = gram_singular_values(a);
  EXPECT_NEAR(s[0], 3.0, 1e-12);
  EXPECT_NEAR(s[1], 2.0, 1e-12);
}

TEST(Testkit, CapsAreEnforced) {
  const Model a = small_model(1, 3, 2, 10);
  EXPECT_THROW(oracle_d_logit_triple_sum(a, a, gaussian(1, 4, 3)), std::invalid_argument);
  const Model b = small_model(1, 3, 2, 6);
  EXPECT_THROW(oracle_d_rep_explicit(b, b, gaussian(1, 65, 3)), std::invalid_argument);
}

TEST(Testkit, OraclesVanishOnIdenticalModels) {
  const Model a = small_model(1, 3, 2, 6);
  const Matrix x = gaussian(2, 10, 3);
  EXPECT_EQ(oracle_d_logit_triple_sum(a, a, x), 0.0);
  EXPECT_NEAR(oracle_d_rep_explicit(a, a, x), 0.0, 1e-12);
}

TEST(Testkit, SubsetEnumerationCounts) {
  std::size_t n = 0;
  for_each_subset({0, 1, 2, 3, 4, 5}, 3, [&](const std::vector<std::size_t>&) { ++n; });
  EXPECT_EQ(n, 20u);
  EXPECT_EQ(choose(7, 3), 35u);
}
