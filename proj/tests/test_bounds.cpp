#include <gtest/gtest.h>

#include <sstream>

#include "repsim/bounds.hpp"
#include "testkit/fixtures.hpp"

using namespace repsim;
using repsim::testkit::gaussian;
using repsim::testkit::small_model;

namespace {

void expect_all_pass(const std::vector<BoundCertificate>& certs) {
  for (const auto& c : certs) {
    EXPECT_TRUE(c.passed || c.skipped) << to_json(c).dump();
  }
}

}  // namespace

TEST(Bounds, Constants) {
  EXPECT_NEAR(drep_constant(7, 2), std::sqrt(4.0 / 6.0), 1e-15);
  EXPECT_NEAR(drep_constant(7, 2), 0.8165, 1e-4);
  EXPECT_NEAR(kl_drep_constant(10, 3, 0.01),
              2.0 * drep_constant(10, 3) * std::abs(std::log(0.01)) / 0.1, 1e-12);
}

TEST(Bounds, CertificatePassRule) {
  const auto ok = make_certificate(BoundId::kl_lower, 1.0 + 5e-10, 1.0);
  EXPECT_TRUE(ok.passed);
  const auto bad = make_certificate(BoundId::kl_lower, 1.0 + 2e-9, 1.0);
  EXPECT_FALSE(bad.passed);
  EXPECT_DOUBLE_EQ(bad.slack, bad.rhs - bad.lhs);
  EXPECT_FALSE(make_certificate(BoundId::kl_lower, std::nan(""), 1.0).passed);
}

TEST(Bounds, CertificateJsonRoundTrip) {
  auto c = make_certificate(BoundId::eigen_weighted, 0.25, 0.5, {{"trial", 3}}, "g");
  c.vacuous = true;
  const auto back = certificate_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_THROW(parse_bound_id("NOPE"), ContractViolation);
  for (BoundId id : kAllBoundIds) EXPECT_EQ(parse_bound_id(to_string(id)), id);
}

TEST(Bounds, IdenticalModelsGiveZeroSides) {
  const auto p = random_tau_bounded_pair(8, 2, 64, 0.01, 3);
  std::vector<BoundCertificate> certs = check_kl_logit(p.a, p.a, p.x);
  auto add = [&](std::vector<BoundCertificate> v) { certs.insert(certs.end(), v.begin(), v.end()); };
  add(check_drep(p.a, p.a, p.x, SubsetPlan::exact()));
  certs.push_back(check_l1(p.a, p.a, p.x));
  for (const auto& c : certs) {
    EXPECT_TRUE(c.passed);
    EXPECT_NEAR(c.lhs, 0.0, 1e-12);
    EXPECT_NEAR(c.rhs, 0.0, 1e-12);
  }
  for (const auto& c : check_mcca(p.a, p.a, p.x)) {
    EXPECT_TRUE(c.passed);
    EXPECT_NEAR(c.lhs, 1.0, 1e-12);
    EXPECT_NEAR(c.rhs, 1.0, 1e-9);
  }
}

TEST(Bounds, RandomPairsPassEveryCheck) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto p = random_tau_bounded_pair(10, 3, 128, 0.005, seed);
    expect_all_pass(check_kl_logit(p.a, p.b, p.x));
    expect_all_pass(check_mcca(p.a, p.b, p.x));
    expect_all_pass(check_drep(p.a, p.b, p.x, SubsetPlan::exact()));
    expect_all_pass({check_l1(p.a, p.b, p.x)});
    expect_all_pass(check_eigen_weighted(p.a, p.b, p.x));
    expect_all_pass(check_approx_identity(p.a, p.b, p.x));
  }
}

TEST(Bounds, NearZeroProbabilitySkipsNothingButLowerBound) {
  // A large unembedding norm drives some probabilities far below the floor
  // while the largest ones exceed 1/3, so two-sided bounds are skipped.
  const Model a = small_model(1, 3, 2, 6, 60.0);
  const Model b = small_model(2, 3, 2, 6, 60.0);
  const Matrix x = gaussian(3, 40, 3);
  Matrix one(1, 3);
  one << 1.0, 0.0, 0.0;
  const Model c(EmbeddingNet::linear(Matrix::Identity(2, 3)),
                center_unembeddings((Matrix(2, 6) << 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0).finished() * 40.0));
  const auto certs = check_kl_logit(c, c, one);
  EXPECT_TRUE(certs[0].passed);
  const auto ab = check_kl_logit(a, b, x);
  EXPECT_TRUE(ab[0].passed);
  EXPECT_EQ(ab[0].id, BoundId::kl_lower);
}

TEST(Bounds, BothTauSkippedWhenProbabilitiesAreNearUniformForTwoLabels) {
  // k = 3 labels: tau_min can exceed 1/3 only when every probability equals 1/3.
  const EmbeddingNet f = EmbeddingNet::linear(Matrix::Zero(1, 1));
  const Model flat(f, center_unembeddings((Matrix(1, 3) << 1, 2, 3).finished()));
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  const auto certs = check_kl_logit(flat, flat, x);
  EXPECT_TRUE(certs[1].skipped);
  EXPECT_TRUE(certs[2].skipped);
  EXPECT_TRUE(certs[0].passed);
}

TEST(Bounds, IndependentModelsFlagVacuousMcca) {
  std::size_t vacuous = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Model a = small_model(mix_seed(seed, 1), 3, 2, 7, 3.0);
    const Model b = small_model(mix_seed(seed, 2), 3, 2, 7, 3.0);
    for (const auto& c : check_mcca(a, b, gaussian(seed, 80, 3))) {
      EXPECT_TRUE(c.passed);
      EXPECT_EQ(c.vacuous, c.lhs < 0.0);
      vacuous += c.vacuous;
    }
  }
  EXPECT_GT(vacuous, 0u);
}

TEST(Bounds, PcaDimensionBoundForLowerDimensionalModel) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Model a = small_model(mix_seed(seed, 1), 3, 3, 8);
    const Model b = small_model(mix_seed(seed, 2), 3, 1, 8);
    const auto certs = check_pca_dim(a, b, gaussian(seed, 60, 3));
    ASSERT_EQ(certs.size(), 2u);
    expect_all_pass(certs);
  }
  const Model a = small_model(1, 3, 2, 8);
  EXPECT_TRUE(check_pca_dim(a, a, gaussian(1, 20, 3)).front().skipped);
}

TEST(Bounds, TightnessPairAcrossTauGrid) {
  const auto pts = tightness_check({0.2, 0.1, 0.05, 0.01, 1e-3, 1e-4, 1e-6});
  for (const auto& p : pts) {
    EXPECT_TRUE(p.passed) << p.tau;
    EXPECT_GE(p.sq_log_diff, std::log(2.0) * std::log(2.0));
    EXPECT_LE(p.kl, p.tau * std::log(2.0));
  }
  EXPECT_THROW(tightness_check({0.6}), ContractViolation);
}

TEST(Bounds, CounterexampleFixture) {
  const auto equiv_a = counterexample_pair(1.0);
  const Model equiv_b = equiv_a.a.reparameterized(testkit::invertible(7, 2));
  const double base = d_rep(equiv_a.a, equiv_b, equiv_a.x, SubsetPlan::exact()).value;
  double prev_kl = INFINITY;
  for (double scale : {1.0, 2.0, 4.0, 8.0}) {
    const auto p = counterexample_pair(scale);
    EXPECT_NEAR(mcca_embeddings(p.a.embed(p.x), p.b.embed(p.x)).mean, 1.0, 1e-6);
    EXPECT_NEAR(mcca_unembeddings(p.a.g(), p.b.g()).mean, 0.67, 0.02);
    const double kl = d_kl(p.a, p.b, p.x);
    EXPECT_LT(kl, prev_kl);
    prev_kl = kl;
    EXPECT_GT(d_rep(p.a, p.b, p.x, SubsetPlan::exact()).value, 10.0 * base);
  }
  EXPECT_THROW(counterexample_pair(0.0), ContractViolation);
}

TEST(Bounds, EmptySuitePasses) {
  BoundSuiteConfig cfg;
  cfg.trials = 0;
  const auto r = run_bound_suite(cfg);
  EXPECT_TRUE(r.passed);
  EXPECT_TRUE(r.certificates.empty());
  EXPECT_EQ(r.summary["pass_rate"].get<double>(), 1.0);
}

TEST(Bounds, SmallSuitePassesAndReplaysBitForBit) {
  BoundSuiteConfig cfg;
  cfg.trials = 12;
  cfg.k = 8;
  cfg.m = 2;
  cfg.n = 96;
  cfg.seed = 42;
  const auto r = run_bound_suite(cfg);
  EXPECT_TRUE(r.passed) << r.summary.dump();
  std::ostringstream all;
  write_certificates_jsonl(all, r.certificates);
  const auto replay = run_bound_trial(cfg, 5);
  std::ostringstream one;
  write_certificates_jsonl(one, replay);
  EXPECT_NE(all.str().find(one.str()), std::string::npos);

  cfg.jobs = 3;
  const auto threaded = run_bound_suite(cfg);
  std::ostringstream again;
  write_certificates_jsonl(again, threaded.certificates);
  EXPECT_EQ(all.str(), again.str());
}

TEST(Bounds, SuiteRejectsTooFewLabels) {
  BoundSuiteConfig cfg;
  cfg.k = 4;
  cfg.m = 3;
  EXPECT_THROW(run_bound_suite(cfg), ContractViolation);
}
