#pragma once

// Canonical correlations between embeddings and between unembeddings, the
// logit spectrum, and the regression-residual decompositions relating them to
// the logit distance.

#include <algorithm>
#include <cstddef>
#include <string>

#include "repsim/errors.hpp"
#include "repsim/model.hpp"
#include "repsim/numerics.hpp"

namespace repsim {

enum class CcaBasis { moment, covariance };

inline std::string to_string(CcaBasis b) { return b == CcaBasis::moment ? "moment" : "covariance"; }

inline CcaBasis parse_cca_basis(const std::string& s) {
  if (s == "moment") return CcaBasis::moment;
  if (s == "covariance") return CcaBasis::covariance;
  throw ContractViolation("unknown CCA basis '" + s + "'");
}

struct CcaResult {
  Vector correlations;  ///< non-increasing, clamped to [0,1], zero-padded to the first argument's dim
  Vector raw;           ///< before clamping
  double mean = 0.0;
};

namespace detail {

/// E[a b^T] over rows (optionally after removing column means).
inline Matrix cross_moment(const Matrix& a, const Matrix& b, CcaBasis basis) {
  const auto n = static_cast<double>(a.rows());
  if (basis == CcaBasis::moment) {
    return a.transpose() * b / n;
  }
  const Matrix ac = a.rowwise() - a.colwise().mean();
  const Matrix bc = b.rowwise() - b.colwise().mean();
  return ac.transpose() * bc / n;
}

inline Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// Singular values of S_aa^{-1/2} S_ab S_bb^{-1/2}, padded with zeros to `pad_to`.
inline CcaResult correlations_from_blocks(const Matrix& s_aa, const Matrix& s_ab,
                                          const Matrix& s_bb, Eigen::Index pad_to,
                                          const char* what) {
  const Matrix wa = inverse_sqrt_spd(symmetrized(s_aa), what);
  const Matrix wb = inverse_sqrt_spd(symmetrized(s_bb), what);
  const Vector sv = singular_values(wa * s_ab * wb);
  CcaResult out;
  out.raw = Vector::Zero(pad_to);
  const Eigen::Index r = std::min<Eigen::Index>(sv.size(), pad_to);
  out.raw.head(r) = sv.head(r);
  out.correlations = out.raw.cwiseMax(0.0).cwiseMin(1.0);
  out.mean = out.correlations.mean();
  return out;
}

}  // namespace detail

/// mCCA of two embedding batches (rows are samples).
inline CcaResult mcca_embeddings(const Matrix& fa, const Matrix& fb,
                                 CcaBasis basis = CcaBasis::covariance) {
  if (fa.rows() != fb.rows()) {
    throw ContractViolation("mcca_embeddings: batches have different row counts");
  }
  if (fa.rows() <= std::max(fa.cols(), fb.cols())) {
    throw ContractViolation("mcca_embeddings: need more samples than dimensions");
  }
  require_finite(fa, "mcca_embeddings");
  require_finite(fb, "mcca_embeddings");
  return detail::correlations_from_blocks(detail::cross_moment(fa, fa, basis),
                                          detail::cross_moment(fa, fb, basis),
                                          detail::cross_moment(fb, fb, basis), fa.cols(),
                                          "mcca_embeddings");
}

/// mCCA of the unembedding vectors viewed as k equally weighted samples.
inline CcaResult mcca_unembeddings(const Unembeddings& ga, const Unembeddings& gb) {
  if (ga.label_count() != gb.label_count()) {
    throw ContractViolation("mcca_unembeddings: label counts differ");
  }
  const Matrix& l = ga.matrix();
  const Matrix& lp = gb.matrix();
  return detail::correlations_from_blocks(l * l.transpose(), l * lp.transpose(),
                                          lp * lp.transpose(), l.rows(), "mcca_unembeddings");
}

struct LogitSpectrum {
  Vector eigenvalues;      ///< top m, non-increasing, >= 0
  Vector all_eigenvalues;  ///< all k, non-increasing
  std::size_t zero_count = 0;
  CcaBasis basis = CcaBasis::covariance;
};

/// Eigenvalues of the logit second moment L^T M_ff L or covariance L^T S_ff L.
inline LogitSpectrum logit_spectrum(const Model& model, const Matrix& x_batch,
                                    CcaBasis basis = CcaBasis::covariance) {
  const std::size_t m = model.rep_dim();
  if (static_cast<std::size_t>(x_batch.rows()) <= m) {
    throw ContractViolation("logit_spectrum: batch must have more than m rows");
  }
  const Matrix f = model.embed(x_batch);
  const Matrix& l = model.g().matrix();
  const Matrix m_uu = detail::symmetrized(l.transpose() * detail::cross_moment(f, f, basis) * l);
  const SymEigResult eig = sym_eig(m_uu);
  LogitSpectrum out;
  out.basis = basis;
  out.all_eigenvalues = eig.eigenvalues;
  out.eigenvalues = eig.eigenvalues.head(static_cast<Eigen::Index>(m)).cwiseMax(0.0);
  const double top = std::max(eig.eigenvalues(0), 0.0);
  for (Eigen::Index i = 0; i < eig.eigenvalues.size(); ++i) {
    if (eig.eigenvalues(i) <= kRankTolerance * top + std::numeric_limits<double>::min()) {
      ++out.zero_count;
    }
  }
  return out;
}

struct ResidualDecomposition {
  double cross_term = 0.0;
  double residual_term = 0.0;
  double total = 0.0;
};

/// Splits the mean squared logit difference using B = L L'^T (L' L'^T)^{-1} and
/// Delta = L - B L' into ||L'^T (B^T f - f')||^2 + ||Delta^T f||^2.
inline ResidualDecomposition residual_decomposition(const Model& a, const Model& b,
                                                    const Matrix& x_batch) {
  if (a.label_count() != b.label_count() || a.input_dim() != b.input_dim()) {
    throw ContractViolation("residual_decomposition: models are not comparable");
  }
  const Matrix& l = a.g().matrix();
  const Matrix& lp = b.g().matrix();
  const Matrix gram_p = detail::symmetrized(lp * lp.transpose());
  if (numerical_rank(gram_p) < static_cast<std::size_t>(lp.rows()) ||
      numerical_rank(l) < static_cast<std::size_t>(l.rows())) {
    throw RankDeficiencyError("residual_decomposition: unembeddings are rank deficient");
  }
  const Matrix bmat = solve(gram_p, lp * l.transpose()).transpose();
  const Matrix delta = l - bmat * lp;
  const Matrix fa = a.embed(x_batch);
  const Matrix fb = b.embed(x_batch);
  ResidualDecomposition out;
  out.cross_term = ((fa * bmat - fb) * lp).rowwise().squaredNorm().mean();
  out.residual_term = (fa * delta).rowwise().squaredNorm().mean();
  out.total = (fa * l - fb * lp).rowwise().squaredNorm().mean();
  return out;
}

/// Eigenvalues (ascending) of (L L^T)^{-1/2} Delta Delta^T (L L^T)^{-1/2}; these equal 1 - rho_i^2.
inline Vector whitened_residual_spectrum(const Unembeddings& ga, const Unembeddings& gb) {
  const Matrix& l = ga.matrix();
  const Matrix& lp = gb.matrix();
  const Matrix gram_p = detail::symmetrized(lp * lp.transpose());
  const Matrix bmat = solve(gram_p, lp * l.transpose()).transpose();
  const Matrix delta = l - bmat * lp;
  const Matrix w = inverse_sqrt_spd(detail::symmetrized(l * l.transpose()), "whitened_residual");
  return sym_eig(detail::symmetrized(w * delta * delta.transpose() * w)).eigenvalues.reverse();
}

/// Same for embeddings: M_ff^{-1/2} E[D D^T] M_ff^{-1/2} with D = f - M_ff' M_f'f'^{-1} f'.
inline Vector whitened_residual_spectrum(const Matrix& fa, const Matrix& fb) {
  const Matrix m_aa = detail::cross_moment(fa, fa, CcaBasis::moment);
  const Matrix m_ab = detail::cross_moment(fa, fb, CcaBasis::moment);
  const Matrix m_bb = detail::cross_moment(fb, fb, CcaBasis::moment);
  const Matrix bt = solve(detail::symmetrized(m_bb), m_ab.transpose()).transpose();
  const Matrix d = fa - fb * bt.transpose();
  const Matrix w = inverse_sqrt_spd(detail::symmetrized(m_aa), "whitened_residual");
  const Matrix e_dd = detail::cross_moment(d, d, CcaBasis::moment);
  return sym_eig(detail::symmetrized(w * e_dd * w)).eigenvalues.reverse();
}

struct ApproxIdentityTerms {
  double model_logits = 0.0;    ///< mean ||L'^T B^T B~ f' - u'||^2
  double target_logits = 0.0;   ///< mean ||L'^T B^T B~ f' - u||^2
  double d_logit_sq = 0.0;      ///< mean ||u - u'||^2
};

/// Terms of the approximate-identity relation between B (unembedding
/// regression) and B~ = M_ff' M_f'f'^{-1} (embedding regression).
inline ApproxIdentityTerms approx_identity_terms(const Model& a, const Model& b,
                                                 const Matrix& x_batch) {
  const Matrix& l = a.g().matrix();
  const Matrix& lp = b.g().matrix();
  const Matrix fa = a.embed(x_batch);
  const Matrix fb = b.embed(x_batch);
  const Matrix bmat =
      solve(detail::symmetrized(lp * lp.transpose()), lp * l.transpose()).transpose();
  const Matrix m_ab = detail::cross_moment(fa, fb, CcaBasis::moment);
  const Matrix m_bb = detail::symmetrized(detail::cross_moment(fb, fb, CcaBasis::moment));
  const Matrix bt = solve(m_bb, m_ab.transpose()).transpose();
  const Matrix u = fa * l;
  const Matrix up = fb * lp;
  const Matrix pred = fb * bt.transpose() * bmat * lp;
  ApproxIdentityTerms out;
  out.model_logits = (pred - up).rowwise().squaredNorm().mean();
  out.target_logits = (pred - u).rowwise().squaredNorm().mean();
  out.d_logit_sq = (u - up).rowwise().squaredNorm().mean();
  return out;
}

}  // namespace repsim
