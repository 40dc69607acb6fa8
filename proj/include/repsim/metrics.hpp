#pragma once

// Distributional distances between two models of the family and the linear
// identifiability dissimilarity d_rep. Expectations over inputs are empirical
// means over the supplied batch.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "repsim/errors.hpp"
#include "repsim/model.hpp"
#include "repsim/numerics.hpp"
#include "repsim/subsets.hpp"

namespace repsim {

namespace detail {

inline void require_comparable(const Model& a, const Model& b, const Matrix& x, const char* what) {
  if (a.label_count() != b.label_count()) {
    throw ContractViolation(std::string(what) + ": label counts differ (" +
                            std::to_string(a.label_count()) + " vs " +
                            std::to_string(b.label_count()) + ")");
  }
  if (a.input_dim() != b.input_dim()) {
    throw ContractViolation(std::string(what) + ": input dims differ");
  }
  if (x.rows() == 0) {
    throw ContractViolation(std::string(what) + ": empty batch");
  }
}

inline Matrix as_row(const Vector& x) { return x.transpose(); }

}  // namespace detail

/// Mean over the batch of ||u(x) - u'(x)||^2.
inline double d_logit_sq(const Model& a, const Model& b, const Matrix& x) {
  detail::require_comparable(a, b, x, "d_logit");
  return (logits(a, x) - logits(b, x)).rowwise().squaredNorm().mean();
}

/// Root-mean-square Euclidean distance between the two models' logits.
inline double d_logit(const Model& a, const Model& b, const Matrix& x) {
  return std::sqrt(d_logit_sq(a, b, x));
}

/// Mean over the batch of ||u(x) - u'(x)||_1.
inline double l1_logit_loss(const Model& a, const Model& b, const Matrix& x) {
  detail::require_comparable(a, b, x, "l1_logit_loss");
  return (logits(a, x) - logits(b, x)).cwiseAbs().rowwise().sum().mean();
}

/// KL(p_a(.|x) || p_b(.|x)) for each row of x, in log space.
inline Vector kl_per_sample(const Model& a, const Model& b, const Matrix& x) {
  detail::require_comparable(a, b, x, "d_kl");
  const Matrix la = log_probabilities(a, x);
  const Matrix lb = log_probabilities(b, x);
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < la.cols(); ++j) {
      s += std::exp(la(i, j)) * (la(i, j) - lb(i, j));
    }
    out(i) = std::max(s, 0.0);
  }
  return out;
}

/// Mean KL divergence from model a to model b.
inline double d_kl(const Model& a, const Model& b, const Matrix& x) {
  return kl_per_sample(a, b, x).mean();
}

/// Aitchison distance between two points of the open simplex (given as log-probabilities).
inline double aitchison_distance_from_log(const RowVector& log_p, const RowVector& log_q) {
  const Eigen::Index k = log_p.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double d = (log_p(j) - log_p(i)) - (log_q(j) - log_q(i));
      acc += d * d;
    }
  }
  return std::sqrt(acc / (2.0 * static_cast<double>(k)));
}

/// Per-input logit distance evaluated through the log-ratio (Aitchison) form.
inline double d_logit_aitchison(const Model& a, const Model& b, const Vector& x) {
  const Matrix row = detail::as_row(x);
  detail::require_comparable(a, b, row, "d_logit_aitchison");
  return aitchison_distance_from_log(log_probabilities(a, row).row(0),
                                     log_probabilities(b, row).row(0));
}

struct DRepResult {
  double value = 0.0;
  double sigma_min = std::numeric_limits<double>::infinity();
  double sigma_max = 0.0;
  std::size_t subsets_visited = 0;
  std::size_t subsets_skipped = 0;
  std::string subset_mode;
};

/// Skips above this fraction of sampled subsets abort the d_rep evaluation.
inline constexpr double kMaxSkippedFraction = 0.01;

/// Linear identifiability dissimilarity: RMS of f(x) - A~_J f'(x) over inputs,
/// pivots and label subsets. sigma_min/sigma_max span the singular values of
/// every visited L~_J of model a.
inline DRepResult d_rep(const Model& a, const Model& b, const Matrix& x, const SubsetPlan& plan) {
  detail::require_comparable(a, b, x, "d_rep");
  if (a.rep_dim() != b.rep_dim()) {
    throw ContractViolation("d_rep: representation dims differ (" + std::to_string(a.rep_dim()) +
                            " vs " + std::to_string(b.rep_dim()) + ")");
  }
  const std::size_t k = a.label_count();
  const std::size_t m = a.rep_dim();
  const Matrix fa = a.embed(x);
  const Matrix fb = b.embed(x);
  const auto n = static_cast<double>(x.rows());
  const bool sampled = plan.mode == SubsetPlan::Mode::sampled;

  DRepResult out;
  out.subset_mode = plan.describe();
  double acc = 0.0;
  for (const auto& s : plan_subsets(k, m, plan)) {
    const Matrix lt = shifted_unembedding_matrix(a.g(), s);
    const Matrix lt_b = shifted_unembedding_matrix(b.g(), s);
    const Vector sv = singular_values(lt);
    Matrix a_tilde;
    try {
      if (!(condition_number(lt_b) <= kSingularCondition)) {
        throw SingularMatrixError("d_rep: second model's shifted unembeddings are singular",
                                  condition_number(lt_b), s);
      }
      a_tilde = transition_matrix(a.g(), b.g(), s);
    } catch (const SingularMatrixError&) {
      if (!sampled) {
        throw;
      }
      ++out.subsets_skipped;
      continue;
    }
    out.sigma_min = std::min(out.sigma_min, sv(sv.size() - 1));
    out.sigma_max = std::max(out.sigma_max, sv(0));
    const Matrix resid = fa - fb * a_tilde.transpose();
    acc += resid.squaredNorm() / n;
    ++out.subsets_visited;
  }
  const std::size_t total = out.subsets_visited + out.subsets_skipped;
  if (sampled && static_cast<double>(out.subsets_skipped) >
                     kMaxSkippedFraction * static_cast<double>(total)) {
    throw SingularMatrixError("d_rep: " + std::to_string(out.subsets_skipped) + " of " +
                                  std::to_string(total) + " sampled subsets were singular",
                              std::numeric_limits<double>::infinity());
  }
  if (out.subsets_visited == 0) {
    throw SingularMatrixError("d_rep: no invertible subsets", std::numeric_limits<double>::infinity());
  }
  out.value = std::sqrt(acc / static_cast<double>(out.subsets_visited));
  return out;
}

struct IdentitySides {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// ||u - u'||^2 versus (1/2k) sum_i ||u_i - u'_i||^2 with u_i the logits shifted by label i.
inline IdentitySides shifted_logit_identity_check(const Model& a, const Model& b, const Vector& x) {
  const Matrix row = detail::as_row(x);
  detail::require_comparable(a, b, row, "shifted_logit_identity_check");
  const RowVector ua = logits(a, row).row(0);
  const RowVector ub = logits(b, row).row(0);
  const Eigen::Index k = ua.size();
  IdentitySides out;
  out.lhs = (ua - ub).squaredNorm();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const RowVector sa = ua.array() - ua(i);
    const RowVector sb = ub.array() - ub(i);
    acc += (sa - sb).squaredNorm();
  }
  out.rhs = acc / (2.0 * static_cast<double>(k));
  return out;
}

struct NormalizedRepSides {
  double term_logit = 0.0;
  double term_rep = 0.0;
};

/// ||L~^T f - L~'^T f'||^2 and ||B~^{-T}(f - A~ f')||^2 with B~ = D^{-1} U^T from
/// the SVD L~ = U D V^T. The two agree for every subset.
inline NormalizedRepSides normalized_rep_identity_check(const Model& a, const Model& b,
                                                        const Vector& x, const LabelSubset& s) {
  const Matrix row = detail::as_row(x);
  detail::require_comparable(a, b, row, "normalized_rep_identity_check");
  if (a.rep_dim() != b.rep_dim()) {
    throw ContractViolation("normalized_rep_identity_check: representation dims differ");
  }
  const Matrix lt = shifted_unembedding_matrix(a.g(), s);
  const Matrix lt_b = shifted_unembedding_matrix(b.g(), s);
  const Matrix a_tilde = transition_matrix(a.g(), b.g(), s);
  const Vector fa = a.embed(row).row(0).transpose();
  const Vector fb = b.embed(row).row(0).transpose();
  const SvdResult dec = svd(lt);
  const Matrix b_inv_t = dec.singular_values.asDiagonal() * dec.u.transpose();
  NormalizedRepSides out;
  out.term_logit = (lt.transpose() * fa - lt_b.transpose() * fb).squaredNorm();
  out.term_rep = (b_inv_t * (fa - a_tilde * fb)).squaredNorm();
  return out;
}

}  // namespace repsim
