#pragma once

// Checks for the distance inequalities on concrete model pairs, the two-outcome
// tightness pair, the equal-embedding counterexample fixture and the randomized suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "repsim/cca.hpp"
#include "repsim/certificate.hpp"
#include "repsim/generators.hpp"
#include "repsim/metrics.hpp"
#include "repsim/model.hpp"
#include "repsim/subsets.hpp"

namespace repsim {

/// C = sqrt(2m / (k - 1)).
inline double drep_constant(std::size_t k, std::size_t m) {
  return std::sqrt(2.0 * static_cast<double>(m) / static_cast<double>(k - 1));
}

/// C_KL = 2 C |ln tau| / sqrt(tau).
inline double kl_drep_constant(std::size_t k, std::size_t m, double tau) {
  return 2.0 * drep_constant(k, m) * std::abs(std::log(tau)) / std::sqrt(tau);
}

/// Two-sided upper bounds need every probability of both models below this.
inline constexpr double kTauCeiling = 1.0 / 3.0;

namespace detail {

inline nlohmann::json with(nlohmann::json ctx, const nlohmann::json& extra) {
  if (!ctx.is_object()) ctx = nlohmann::json::object();
  for (auto it = extra.begin(); it != extra.end(); ++it) ctx[it.key()] = it.value();
  return ctx;
}

}  // namespace detail

/// KL_LOWER, KL_UPPER_BOTH_TAU and KL_UPPER_ONE_TAU. KL is taken from a to b,
/// so the one-sided bound uses model a's floor.
inline std::vector<BoundCertificate> check_kl_logit(const Model& a, const Model& b,
                                                    const Matrix& x,
                                                    const nlohmann::json& ctx = {}) {
  const double d2 = d_logit_sq(a, b, x);
  const Vector kl = kl_per_sample(a, b, x);
  const double dkl = kl.mean();
  const double kl_sq = kl.array().square().mean();
  const double tau_a = tau_min(a, x);
  const double tau_b = tau_min(b, x);
  const double tau = std::min(tau_a, tau_b);
  const auto c = detail::with(ctx, {{"tau_a", tau_a}, {"tau_b", tau_b}, {"d_kl", dkl}});

  std::vector<BoundCertificate> out;
  out.push_back(make_certificate(BoundId::kl_lower, 2.0 * dkl, d2, c));
  if (!(tau > 0.0) || tau >= kTauCeiling) {
    out.push_back(skipped_certificate(BoundId::kl_upper_both_tau,
                                      "tau_min=" + std::to_string(tau) + " outside (0, 1/3)", c));
  } else {
    const double lt = std::log(tau);
    out.push_back(make_certificate(BoundId::kl_upper_both_tau, d2, 4.0 * lt * lt / tau * dkl,
                                   detail::with(c, {{"tau", tau}})));
  }
  if (!(tau_a > 0.0) || tau_a >= kTauCeiling) {
    out.push_back(skipped_certificate(BoundId::kl_upper_one_tau,
                                      "tau_a=" + std::to_string(tau_a) + " outside (0, 1/3)", c));
  } else {
    const double lt = std::log(tau_a);
    const double rhs = 12.0 * lt * lt / tau_a * dkl + 9.0 / (tau_a * tau_a) * kl_sq;
    out.push_back(make_certificate(BoundId::kl_upper_one_tau, d2, rhs,
                                   detail::with(c, {{"tau", tau_a}, {"mean_kl_sq", kl_sq}})));
  }
  return out;
}

/// MCCA_LOWER for embeddings ("f") and unembeddings ("g"):
/// mCCA >= 1 - d_logit^2 / (m mu_m), mu_m from model a's logit covariance.
inline std::vector<BoundCertificate> check_mcca(const Model& a, const Model& b, const Matrix& x,
                                                const nlohmann::json& ctx = {}) {
  std::vector<BoundCertificate> out;
  const std::size_t m = a.rep_dim();
  if (b.rep_dim() != m) {
    for (const char* v : {"f", "g"}) {
      out.push_back(skipped_certificate(BoundId::mcca_lower, "representation dims differ", ctx, v));
    }
    return out;
  }
  const LogitSpectrum spec = logit_spectrum(a, x, CcaBasis::covariance);
  const double mu_m = spec.eigenvalues(static_cast<Eigen::Index>(m) - 1);
  if (!(mu_m > 1e-10)) {
    for (const char* v : {"f", "g"}) {
      out.push_back(skipped_certificate(BoundId::mcca_lower,
                                        "degenerate logit spectrum, mu_m=" + std::to_string(mu_m),
                                        ctx, v));
    }
    return out;
  }
  const double d2 = d_logit_sq(a, b, x);
  const double bound = 1.0 - d2 / (static_cast<double>(m) * mu_m);
  const auto c = detail::with(ctx, {{"mu_m", mu_m}});
  auto emit = [&](const char* variant, auto&& compute) {
    try {
      BoundCertificate cert = make_certificate(BoundId::mcca_lower, bound, compute(), c, variant);
      cert.vacuous = bound < 0.0;
      out.push_back(std::move(cert));
    } catch (const std::runtime_error& e) {
      out.push_back(skipped_certificate(BoundId::mcca_lower, e.what(), c, variant));
    }
  };
  emit("f", [&] { return mcca_embeddings(a.embed(x), b.embed(x), CcaBasis::covariance).mean; });
  emit("g", [&] { return mcca_unembeddings(a.g(), b.g()).mean; });
  return out;
}

/// DREP_UPPER, DREP_LOWER and KL_DREP.
inline std::vector<BoundCertificate> check_drep(const Model& a, const Model& b, const Matrix& x,
                                                const SubsetPlan& plan,
                                                const nlohmann::json& ctx = {}) {
  const std::size_t k = a.label_count();
  const std::size_t m = a.rep_dim();
  const DRepResult r = d_rep(a, b, x, plan);
  const double dl = d_logit(a, b, x);
  const double c_rep = drep_constant(k, m);
  const double tau = std::min(tau_min(a, x), tau_min(b, x));
  const auto c = detail::with(ctx, {{"sigma_min", r.sigma_min},
                                    {"sigma_max", r.sigma_max},
                                    {"subset_mode", r.subset_mode},
                                    {"subsets_visited", r.subsets_visited},
                                    {"d_logit", dl}});
  std::vector<BoundCertificate> out;
  out.push_back(make_certificate(BoundId::drep_upper, r.value, c_rep * dl / r.sigma_min, c));
  out.push_back(make_certificate(BoundId::drep_lower, c_rep * dl / r.sigma_max, r.value, c));
  if (!(tau > 0.0) || tau >= kTauCeiling) {
    out.push_back(skipped_certificate(BoundId::kl_drep,
                                      "tau_min=" + std::to_string(tau) + " outside (0, 1/3)", c));
  } else {
    const double dkl = d_kl(a, b, x);
    out.push_back(make_certificate(BoundId::kl_drep, r.value,
                                   kl_drep_constant(k, m, tau) * std::sqrt(dkl) / r.sigma_min,
                                   detail::with(c, {{"tau", tau}, {"d_kl", dkl}})));
  }
  return out;
}

/// L1_LOGIT: d_logit^2 <= 2 |ln tau| * mean ||u - u'||_1.
inline BoundCertificate check_l1(const Model& a, const Model& b, const Matrix& x,
                                 const nlohmann::json& ctx = {}) {
  const double tau = std::min(tau_min(a, x), tau_min(b, x));
  const double l1 = l1_logit_loss(a, b, x);
  return make_certificate(BoundId::l1_logit, d_logit_sq(a, b, x),
                          2.0 * std::abs(std::log(tau)) * l1,
                          detail::with(ctx, {{"tau", tau}, {"l1_logit", l1}}));
}

/// EIGEN_WEIGHTED: sum_i (1 - rho_i^2) mu_i <= d_logit^2, pairing the smallest
/// residual with the largest second-moment eigenvalue of model a's logits.
/// Variant "g" uses unembedding correlations, "f" moment-based embedding ones.
inline std::vector<BoundCertificate> check_eigen_weighted(const Model& a, const Model& b,
                                                          const Matrix& x,
                                                          const nlohmann::json& ctx = {}) {
  std::vector<BoundCertificate> out;
  if (a.rep_dim() != b.rep_dim()) {
    for (const char* v : {"g", "f"}) {
      out.push_back(
          skipped_certificate(BoundId::eigen_weighted, "representation dims differ", ctx, v));
    }
    return out;
  }
  const Vector mu = logit_spectrum(a, x, CcaBasis::moment).eigenvalues;
  const double d2 = d_logit_sq(a, b, x);
  auto emit = [&](const char* variant, auto&& spectrum) {
    try {
      const Vector s = spectrum();
      out.push_back(make_certificate(BoundId::eigen_weighted, s.dot(mu), d2, ctx, variant));
    } catch (const std::runtime_error& e) {
      out.push_back(skipped_certificate(BoundId::eigen_weighted, e.what(), ctx, variant));
    }
  };
  emit("g", [&] { return whitened_residual_spectrum(a.g(), b.g()); });
  emit("f", [&] { return whitened_residual_spectrum(a.embed(x), b.embed(x)); });
  return out;
}

/// PCA_DIM: with m' < m, d_logit^2 >= sum of model a's logit eigenvalues past m'.
inline std::vector<BoundCertificate> check_pca_dim(const Model& a, const Model& b,
                                                   const Matrix& x,
                                                   const nlohmann::json& ctx = {}) {
  std::vector<BoundCertificate> out;
  const std::size_t m = a.rep_dim();
  const std::size_t mp = b.rep_dim();
  if (mp >= m) {
    out.push_back(skipped_certificate(BoundId::pca_dim, "second model is not lower dimensional",
                                      ctx));
    return out;
  }
  const double d2 = d_logit_sq(a, b, x);
  for (CcaBasis basis : {CcaBasis::moment, CcaBasis::covariance}) {
    const Vector mu = logit_spectrum(a, x, basis).eigenvalues;
    const double tail = mu.segment(static_cast<Eigen::Index>(mp),
                                   static_cast<Eigen::Index>(m - mp)).sum();
    out.push_back(make_certificate(BoundId::pca_dim, tail, d2,
                                   detail::with(ctx, {{"m", m}, {"m_prime", mp}}),
                                   to_string(basis)));
  }
  return out;
}

/// APPROX_IDENTITY: the composed regression map reproduces u' within d_logit^2
/// ("model") and u within 4 d_logit^2 ("target").
inline std::vector<BoundCertificate> check_approx_identity(const Model& a, const Model& b,
                                                           const Matrix& x,
                                                           const nlohmann::json& ctx = {}) {
  std::vector<BoundCertificate> out;
  try {
    const ApproxIdentityTerms t = approx_identity_terms(a, b, x);
    out.push_back(
        make_certificate(BoundId::approx_identity, t.model_logits, t.d_logit_sq, ctx, "model"));
    out.push_back(make_certificate(BoundId::approx_identity, t.target_logits, 4.0 * t.d_logit_sq,
                                   ctx, "target"));
  } catch (const std::runtime_error& e) {
    for (const char* v : {"model", "target"}) {
      out.push_back(skipped_certificate(BoundId::approx_identity, e.what(), ctx, v));
    }
  }
  return out;
}

struct TightnessPoint {
  double tau = 0.0;
  double sq_log_diff = 0.0;  ///< sum_i (log p_i - log q_i)^2
  double kl = 0.0;           ///< KL(p || q)
  bool passed = false;       ///< sq_log_diff >= ln^2 2 and kl <= tau ln 2
};

/// p = (2 tau, 1 - 2 tau), q = (tau, 1 - tau): the squared log gap stays above
/// ln^2 2 while KL shrinks linearly in tau.
inline std::vector<TightnessPoint> tightness_check(const std::vector<double>& taus) {
  std::vector<TightnessPoint> out;
  const double ln2 = std::numbers::ln2;
  for (double tau : taus) {
    if (!(tau > 0.0) || tau >= 0.5) throw ContractViolation("tightness_check: tau must lie in (0, 1/2)");
    const double p0 = 2.0 * tau, p1 = 1.0 - 2.0 * tau;
    const double q0 = tau;
    TightnessPoint pt;
    pt.tau = tau;
    const double g0 = std::log(p0) - std::log(q0);
    const double g1 = std::log1p(-2.0 * tau) - std::log1p(-tau);
    pt.sq_log_diff = g0 * g0 + g1 * g1;
    pt.kl = p0 * g0 + p1 * g1;
    pt.passed = pt.sq_log_diff >= ln2 * ln2 && pt.kl <= tau * ln2;
    out.push_back(pt);
  }
  return out;
}

/// Half-angle offset of labels 5-8 around the 45 and 225 degree bisectors.
inline constexpr double kCounterexampleDelta = 0.52;
inline constexpr int kCounterexampleReplicas = 32;
/// Unembedding norm at scale 1; large enough that d_KL already falls with scale.
inline constexpr double kCounterexampleRadius = 40.0;

struct CounterexamplePair {
  Model a;
  Model b;
  Matrix x;  ///< embedding inputs; both models embed with the identity map
};

/// Eight labels in the plane: labels 1-4 at 0, 90, 180 and 270 degrees, labels
/// 5/6 either side of 45 degrees and 7/8 either side of 225 degrees, all with
/// norm kCounterexampleRadius * scale. The second model swaps labels 5<->6 and
/// 7<->8. Both models share the identity embedding; inputs are unit vectors at
/// the four axis angles and the two bisectors, each repeated 32 times.
inline CounterexamplePair counterexample_pair(double scale) {
  if (!(scale > 0.0)) throw ContractViolation("counterexample_pair: scale must be positive");
  const double pi = std::numbers::pi;
  const double q = pi / 4.0;
  const double d = kCounterexampleDelta;
  const std::vector<double> angles = {0.0,   2 * q, 4 * q,         6 * q,
                                      q - d, q + d, 5 * q - d, 5 * q + d};
  Matrix l(2, 8);
  for (int j = 0; j < 8; ++j) {
    l(0, j) = kCounterexampleRadius * scale * std::cos(angles[static_cast<std::size_t>(j)]);
    l(1, j) = kCounterexampleRadius * scale * std::sin(angles[static_cast<std::size_t>(j)]);
  }
  Matrix lp = l;
  lp.col(4).swap(lp.col(5));
  lp.col(6).swap(lp.col(7));

  const std::vector<double> dirs = {0.0, 2 * q, 4 * q, 6 * q, q, 5 * q};
  Matrix x(static_cast<Eigen::Index>(dirs.size() * kCounterexampleReplicas), 2);
  Eigen::Index row = 0;
  for (double t : dirs) {
    for (int r = 0; r < kCounterexampleReplicas; ++r, ++row) {
      x(row, 0) = std::cos(t);
      x(row, 1) = std::sin(t);
    }
  }
  const EmbeddingNet f = EmbeddingNet::linear(Matrix::Identity(2, 2));
  return CounterexamplePair{Model(f, center_unembeddings(l)), Model(f, center_unembeddings(lp)),
                            std::move(x)};
}

struct BoundSuiteConfig {
  std::size_t trials = 100;
  std::size_t k = 10;
  std::size_t m = 3;
  std::size_t n = 256;
  std::uint64_t seed = 1;
  double tau_floor = 0.005;
  bool include_pca = true;
  unsigned jobs = 1;

  nlohmann::json to_json() const {
    return {{"trials", trials}, {"k", k},   {"m", m},
            {"n", n},           {"seed", seed}, {"tau_floor", tau_floor},
            {"include_pca", include_pca}};
  }
};

struct BoundSuiteResult {
  std::vector<BoundCertificate> certificates;
  nlohmann::json summary;
  bool passed = true;
  std::vector<std::uint64_t> failed_trial_seeds;
};

inline std::uint64_t trial_seed(std::uint64_t suite_seed, std::size_t trial) {
  return mix_seed(suite_seed, 0x5eed0000ULL + trial);
}

/// Every applicable check on one seeded trial; recomputable from (config, trial).
inline std::vector<BoundCertificate> run_bound_trial(const BoundSuiteConfig& cfg,
                                                     std::size_t trial) {
  const std::uint64_t seed = trial_seed(cfg.seed, trial);
  nlohmann::json ctx = {{"suite_seed", cfg.seed}, {"trial", trial}, {"trial_seed", seed},
                        {"k", cfg.k},             {"m", cfg.m},     {"n", cfg.n},
                        {"tau_floor", cfg.tau_floor}};
  std::vector<BoundCertificate> out;
  auto append = [&](std::vector<BoundCertificate> v) {
    out.insert(out.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  };
  try {
    const TauBoundedPair p = random_tau_bounded_pair(cfg.k, cfg.m, cfg.n, cfg.tau_floor, seed);
    ctx["relation"] = p.relation;
    append(check_kl_logit(p.a, p.b, p.x, ctx));
    append(check_mcca(p.a, p.b, p.x, ctx));
    append(check_drep(p.a, p.b, p.x, SubsetPlan::automatic(cfg.k, cfg.m, seed), ctx));
    out.push_back(check_l1(p.a, p.b, p.x, ctx));
    append(check_eigen_weighted(p.a, p.b, p.x, ctx));
    append(check_approx_identity(p.a, p.b, p.x, ctx));
    if (cfg.include_pca && cfg.m > 1) {
      std::mt19937_64 rng(mix_seed(seed, 0x9ca));
      Model low = detail::random_mlp_model(rng, cfg.m + 2, 16, cfg.m - 1, cfg.k);
      shrink_to_tau_floor(low, p.x, cfg.tau_floor);
      append(check_pca_dim(p.a, low, p.x, ctx));
    }
  } catch (const std::exception& e) {
    BoundCertificate err = skipped_certificate(BoundId::kl_lower, e.what(), ctx, "trial_error");
    err.skipped = false;
    err.passed = false;
    out.push_back(std::move(err));
  }
  return out;
}

/// Runs `cfg.trials` trials, optionally on several threads; the output order
/// and content do not depend on the thread count.
inline BoundSuiteResult run_bound_suite(const BoundSuiteConfig& cfg) {
  if (cfg.k <= cfg.m + 1) throw ContractViolation("run_bound_suite: need k > m + 1");
  std::vector<std::vector<BoundCertificate>> per_trial(cfg.trials);
  const unsigned jobs = std::max(1u, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(
                                                                      std::max<std::size_t>(cfg.trials, 1))));
  if (jobs == 1) {
    for (std::size_t t = 0; t < cfg.trials; ++t) per_trial[t] = run_bound_trial(cfg, t);
  } else {
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t t = w; t < cfg.trials; t += jobs) per_trial[t] = run_bound_trial(cfg, t);
      });
    }
    for (auto& th : workers) th.join();
  }

  BoundSuiteResult res;
  std::map<std::string, nlohmann::json> per_bound;
  std::size_t passed = 0, failed = 0, skipped = 0, vacuous = 0;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    bool trial_ok = true;
    for (auto& c : per_trial[t]) {
      auto& pb = per_bound[to_string(c.id)];
      if (pb.is_null()) {
        pb = {{"passed", 0}, {"failed", 0}, {"skipped", 0}, {"vacuous", 0},
              {"worst_slack", nullptr}, {"worst_trial", nullptr}};
      }
      if (c.skipped) {
        ++skipped;
        pb["skipped"] = pb["skipped"].get<int>() + 1;
      } else {
        if (c.passed) {
          ++passed;
          pb["passed"] = pb["passed"].get<int>() + 1;
        } else {
          ++failed;
          trial_ok = false;
          pb["failed"] = pb["failed"].get<int>() + 1;
        }
        if (c.vacuous) {
          ++vacuous;
          pb["vacuous"] = pb["vacuous"].get<int>() + 1;
        }
        if (pb["worst_slack"].is_null() || c.slack < pb["worst_slack"].get<double>()) {
          pb["worst_slack"] = c.slack;
          pb["worst_trial"] = t;
        }
      }
      res.certificates.push_back(std::move(c));
    }
    if (!trial_ok) res.failed_trial_seeds.push_back(trial_seed(cfg.seed, t));
  }
  res.passed = failed == 0;
  const std::size_t evaluated = passed + failed;
  res.summary = {{"config", cfg.to_json()},
                 {"certificates", res.certificates.size()},
                 {"passed", passed},
                 {"failed", failed},
                 {"skipped", skipped},
                 {"vacuous", vacuous},
                 {"pass_rate", evaluated ? static_cast<double>(passed) / evaluated : 1.0},
                 {"suite_passed", res.passed},
                 {"failed_trial_seeds", res.failed_trial_seeds},
                 {"per_bound", per_bound}};
  return res;
}

}  // namespace repsim
