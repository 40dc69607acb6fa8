#include <gtest/gtest.h>

#include <sstream>

#include "repsim/config.hpp"
#include "repsim/report.hpp"
#include "testkit/fixtures.hpp"

using namespace repsim;
using repsim::testkit::gaussian;
using repsim::testkit::small_model;

TEST(Aggregate, EqualVariancesGiveThePlainMean) {
  const auto a = inverse_variance({{1.0, 0.5}, {2.0, 0.5}, {6.0, 0.5}});
  EXPECT_NEAR(a.mean, 3.0, 1e-12);
  EXPECT_NEAR(a.std, 0.5 / std::sqrt(3.0), 1e-12);
  EXPECT_FALSE(a.capped);
}

TEST(Aggregate, SingleRunIsReturnedUnchanged) {
  const auto a = inverse_variance({{4.25, 0.75}});
  EXPECT_EQ(a.mean, 4.25);
  EXPECT_EQ(a.std, 0.75);
  EXPECT_EQ(a.runs, 1u);
}

TEST(Aggregate, PooledStdNeverExceedsTheSmallest) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 2.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::pair<double, double>> runs;
    double lo = INFINITY, mn = INFINITY, mx = -INFINITY;
    for (int i = 0; i < 2 + t % 5; ++i) {
      runs.emplace_back(u(rng) * 10 - 5, u(rng));
      lo = std::min(lo, runs.back().second);
      mn = std::min(mn, runs.back().first);
      mx = std::max(mx, runs.back().first);
    }
    const auto a = inverse_variance(runs);
    EXPECT_LE(a.std, lo);
    EXPECT_GE(a.mean, mn - 1e-12);
    EXPECT_LE(a.mean, mx + 1e-12);
  }
}

TEST(Aggregate, ZeroVarianceIsCapped) {
  const auto a = inverse_variance({{1.0, 0.0}, {3.0, 1.0}});
  EXPECT_TRUE(a.capped);
  EXPECT_NEAR(a.mean, 1.0, 1e-9);
  EXPECT_TRUE(std::isfinite(a.std));
  EXPECT_THROW(inverse_variance({}), ContractViolation);
  EXPECT_THROW(inverse_variance({{1.0, -1.0}, {1.0, 1.0}}), ContractViolation);
}

TEST(Aggregate, MeanStd) {
  const auto [m, s] = mean_std({1.0, 3.0});
  EXPECT_EQ(m, 2.0);
  EXPECT_EQ(s, 1.0);
  EXPECT_THROW(mean_std({}), ContractViolation);
}

TEST(Aggregate, GroupsByLossAndTeacher) {
  std::vector<MetricReport> rows;
  for (std::uint64_t t : {1, 2}) {
    for (std::uint64_t s : {10, 11}) {
      MetricReport r;
      r.teacher_seed = t;
      r.student_seed = s;
      r.loss_kind = "l2";
      r.d_kl = static_cast<double>(t) + (s == 10 ? -0.5 : 0.5);
      rows.push_back(r);
    }
  }
  rows.push_back(rows.front());
  rows.back().loss_kind = "kl";
  const auto j = aggregate_reports(rows);
  EXPECT_EQ(j.at("l2").at("runs"), 4);
  EXPECT_NEAR(j.at("l2").at("metrics").at("d_kl").at("mean").get<double>(), 1.5, 1e-12);
  EXPECT_NEAR(j.at("l2").at("metrics").at("d_kl").at("std").get<double>(), 0.5 / std::sqrt(2.0), 1e-12);
  EXPECT_FALSE(j.at("l2").at("metrics").contains("d_rep"));
  EXPECT_EQ(j.at("kl").at("runs"), 1);
}

TEST(Report, EvaluatePairFillsEveryMetric) {
  const Model t = small_model(1, 3, 2, 7);
  const Model s = small_model(2, 3, 2, 7);
  const Matrix x = gaussian(3, 50, 3);
  std::vector<int> y(50, 0);
  const auto r = evaluate_pair(t, s, x, y);
  EXPECT_NEAR(r.d_logit * r.d_logit, r.d_logit_sq, 1e-12);
  EXPECT_TRUE(r.d_rep && r.mcca_f && r.mcca_g && r.sigma_min && r.sigma_max);
  EXPECT_FALSE(r.acc_c.has_value());

  const Model narrow = small_model(4, 3, 1, 7);
  const auto rn = evaluate_pair(t, narrow, x, y);
  EXPECT_FALSE(rn.d_rep.has_value());
  EXPECT_TRUE(rn.mcca_f.has_value());
}

TEST(Report, SelfComparisonIsPerfect) {
  const Model t = small_model(5, 3, 2, 7);
  const Matrix x = gaussian(6, 40, 3);
  std::vector<int> y(40);
  const Matrix u = logits(t, x);
  for (Eigen::Index i = 0; i < u.rows(); ++i) y[static_cast<std::size_t>(i)] = argmax_row(u, i);
  const auto r = evaluate_pair(t, t, x, y);
  EXPECT_EQ(r.acc_y, 1.0);
  EXPECT_NEAR(r.d_kl, 0.0, 1e-12);
  EXPECT_NEAR(*r.d_rep, 0.0, 1e-9);
  EXPECT_NEAR(*r.mcca_f, 1.0, 1e-9);
}

TEST(Report, JsonRoundTripAndCsv) {
  MetricReport r;
  r.teacher_seed = 3;
  r.student_seed = 104;
  r.loss_kind = "kl";
  r.acc_y = 0.5;
  r.d_kl = 0.125;
  r.d_logit = 0.25;
  r.d_logit_sq = 0.0625;
  r.mcca_f = 0.9;
  const auto back = metric_report_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  std::ostringstream os;
  write_metric_csv(os, {r});
  const std::string s = os.str();
  EXPECT_EQ(s.rfind(kMetricCsvHeader, 0), 0u);
  EXPECT_NE(s.find("3,104,kl,0.5,,0.125,0.25,"), std::string::npos);
}

TEST(Config, SynthReaderIsStrict) {
  const auto c = synth_config_from_json({{"n_train", 10}, {"seed", 4}});
  EXPECT_EQ(c.n_train, 10u);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.k, 7u);
  EXPECT_THROW(synth_config_from_json({{"ntrain", 10}}), ContractViolation);
  EXPECT_THROW(synth_config_from_json({{"k", "seven"}}), ContractViolation);
  EXPECT_THROW(synth_config_from_json(nlohmann::json::array()), ContractViolation);
}

TEST(Config, BoundSuiteRoundTrip) {
  BoundSuiteConfig c;
  c.trials = 7;
  c.tau_floor = 0.01;
  c.include_pca = false;
  nlohmann::json j = c.to_json();
  j.erase("jobs");
  EXPECT_EQ(bound_suite_config_from_json(j).to_json(), c.to_json());
  EXPECT_THROW(bound_suite_config_from_json({{"trails", 3}}), ContractViolation);
}

TEST(Config, ProbeRoundTrip) {
  ProbeConfig c;
  c.epochs = 12;
  c.l2 = 0.1;
  EXPECT_EQ(to_json(probe_config_from_json(to_json(c))), to_json(c));
  EXPECT_THROW(probe_config_from_json({{"lr", true}}), ContractViolation);
}
