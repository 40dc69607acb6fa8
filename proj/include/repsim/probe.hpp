#pragma once

// Softmax-linear concept probes on frozen embeddings, probe transfer through
// the unembeddings, and two-component LDA projections.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "repsim/certificate.hpp"
#include "repsim/concept.hpp"
#include "repsim/errors.hpp"
#include "repsim/metrics.hpp"
#include "repsim/model.hpp"
#include "repsim/numerics.hpp"

namespace repsim {

/// p(h = c | x) = softmax(W^T f(x) + b)_c. `alpha` holds concept weights A
/// with W = L A once attached to a model's unembeddings.
struct LinearProbe {
  Matrix w;  ///< m x C
  Vector b;  ///< C
  std::optional<Matrix> alpha;
  double alpha_residual = 0.0;  ///< ||L A - W||_F / ||W||_F

  std::size_t values() const { return static_cast<std::size_t>(w.cols()); }

  Matrix logits(const Matrix& f) const {
    Matrix z = f * w;
    z.rowwise() += b.transpose();
    return z;
  }
};

struct ProbeConfig {
  std::size_t epochs = 3000;
  double lr = 0.05;
  double l2 = 0.0;
  std::uint64_t seed = 0;
};

/// Mean KL(p_h || probe) over the rows.
inline double probe_objective(const LinearProbe& probe, const Matrix& f, const Concept& hc) {
  const Matrix target = hc.distributions();
  const Matrix lq = log_softmax_rows(probe.logits(f));
  double s = 0.0;
  for (Eigen::Index i = 0; i < target.rows(); ++i) {
    for (Eigen::Index c = 0; c < target.cols(); ++c) {
      const double p = target(i, c);
      if (p > 0.0) s += p * (std::log(p) - lq(i, c));
    }
  }
  return s / static_cast<double>(target.rows());
}

/// Full-batch Adam on standardized embeddings; the fitted weights are mapped
/// back to the raw embedding coordinates.
inline LinearProbe fit_probe(const Matrix& f, const Concept& hc, const ProbeConfig& cfg = {}) {
  const auto n = f.rows();
  const auto m = f.cols();
  const auto nc = static_cast<Eigen::Index>(hc.values());
  if (static_cast<std::size_t>(n) != hc.size()) {
    throw ContractViolation("fit_probe: embedding rows and concept size differ");
  }
  if (n < nc) throw ContractViolation("fit_probe: need at least as many samples as concept values");
  require_finite(f, "fit_probe");

  const RowVector mean = f.colwise().mean();
  RowVector sd = ((f.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n))
                     .sqrt()
                     .matrix();
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!(sd(j) > 0.0)) sd(j) = 1.0;
  }
  const Matrix z = (f.rowwise() - mean).array().rowwise() / sd.array();
  const Matrix target = hc.distributions();

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x9b0e));
  std::normal_distribution<double> normal(0.0, 0.01);
  Matrix w(m, nc);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index c = 0; c < nc; ++c) w(i, c) = normal(rng);
  Vector b = Vector::Zero(nc);

  Matrix mw = Matrix::Zero(m, nc), vw = Matrix::Zero(m, nc);
  Vector mb = Vector::Zero(nc), vb = Vector::Zero(nc);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double p1 = 1.0, p2 = 1.0;
  for (std::size_t t = 0; t < cfg.epochs; ++t) {
    Matrix logit = z * w;
    logit.rowwise() += b.transpose();
    const Matrix resid = (softmax_rows(logit) - target) / static_cast<double>(n);
    const Matrix gw = z.transpose() * resid + cfg.l2 * w;
    const Vector gb = resid.colwise().sum().transpose();
    p1 *= b1;
    p2 *= b2;
    mw = b1 * mw + (1 - b1) * gw;
    vw = b2 * vw + (1 - b2) * gw.cwiseProduct(gw);
    mb = b1 * mb + (1 - b1) * gb;
    vb = b2 * vb + (1 - b2) * gb.cwiseProduct(gb);
    w.array() -= cfg.lr * (mw.array() / (1 - p1)) / ((vw.array() / (1 - p2)).sqrt() + eps);
    b.array() -= cfg.lr * (mb.array() / (1 - p1)) / ((vb.array() / (1 - p2)).sqrt() + eps);
  }

  LinearProbe probe;
  probe.w = w.array().colwise() / sd.transpose().array();
  probe.b = b - (mean * probe.w).transpose();
  if (!probe.w.allFinite() || !probe.b.allFinite()) {
    throw NumericalFailure("fit_probe: non-finite weights", static_cast<std::size_t>(m),
                           static_cast<std::size_t>(nc), 0.0);
  }
  return probe;
}

/// Argmax of the probe against the concept's hard labels.
inline double concept_accuracy(const LinearProbe& probe, const Matrix& f, const Concept& hc) {
  if (static_cast<std::size_t>(f.rows()) != hc.size() || f.rows() == 0) {
    throw ContractViolation("concept_accuracy: embedding rows and concept size differ");
  }
  const Matrix z = probe.logits(f);
  const std::vector<int> labels = hc.hard_labels();
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (argmax_row(z, i) == labels[static_cast<std::size_t>(i)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(z.rows());
}

/// Minimum-norm A with L A = W.
inline LinearProbe attach_concept_weights(LinearProbe probe, const Unembeddings& g) {
  const Matrix& l = g.matrix();
  if (l.rows() != probe.w.rows()) {
    throw ContractViolation("attach_concept_weights: probe and unembedding dims differ");
  }
  const Matrix gram = l * l.transpose();
  if (numerical_rank(gram) < static_cast<std::size_t>(l.rows())) {
    throw RankDeficiencyError("attach_concept_weights: unembeddings do not have full row rank");
  }
  const Matrix a = l.transpose() * solve(gram, probe.w);
  const double wn = probe.w.norm();
  probe.alpha_residual = wn > 0.0 ? (l * a - probe.w).norm() / wn : 0.0;
  probe.alpha = a;
  return probe;
}

/// W' = L' A with unchanged biases.
inline LinearProbe transfer_probe(const LinearProbe& probe, const Unembeddings& g_target) {
  if (!probe.alpha) throw ContractViolation("transfer_probe: concept weights not attached");
  if (g_target.label_count() != static_cast<std::size_t>(probe.alpha->rows())) {
    throw ContractViolation("transfer_probe: label counts differ");
  }
  LinearProbe out;
  out.w = g_target.matrix() * *probe.alpha;
  out.b = probe.b;
  out.alpha = probe.alpha;
  return out;
}

/// Mean KL between the teacher probe's distribution and the transferred
/// probe's distribution on the student, against 0.5 ||A||_op^2 d_logit^2.
inline BoundCertificate check_concept_bound(const Model& teacher, const Model& student,
                                            const LinearProbe& probe_on_teacher,
                                            const Concept& hc, const Matrix& x,
                                            const nlohmann::json& ctx = {}) {
  if (!probe_on_teacher.alpha) {
    throw ContractViolation("check_concept_bound: probe has no concept weights");
  }
  const LinearProbe moved = transfer_probe(probe_on_teacher, student.g());
  const Matrix lp = log_softmax_rows(probe_on_teacher.logits(teacher.embed(x)));
  const Matrix lq = log_softmax_rows(moved.logits(student.embed(x)));
  double kl = 0.0;
  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < lp.cols(); ++c) s += std::exp(lp(i, c)) * (lp(i, c) - lq(i, c));
    kl += std::max(s, 0.0);
  }
  kl /= static_cast<double>(lp.rows());
  const double op = operator_norm(*probe_on_teacher.alpha);
  const double d2 = d_logit_sq(teacher, student, x);
  nlohmann::json c = ctx.is_object() ? ctx : nlohmann::json::object();
  c["alpha_op_norm"] = op;
  c["d_logit_sq"] = d2;
  c["alpha_residual"] = probe_on_teacher.alpha_residual;
  if (hc.size() == static_cast<std::size_t>(x.rows())) {
    c["transferred_accuracy"] = concept_accuracy(moved, student.embed(x), hc);
  }
  return make_certificate(BoundId::concept_robustness, kl, 0.5 * op * op * d2, c);
}

struct LdaResult {
  Matrix projection;  ///< n x 2
  Matrix directions;  ///< m x 2
  bool ridge_added = false;
};

/// Two leading discriminant directions of between- vs within-class scatter.
inline LdaResult lda_project(const Matrix& f, const Concept& hc) {
  const std::vector<int> labels = hc.hard_labels();
  const auto n = f.rows();
  const auto m = f.cols();
  const auto nc = static_cast<Eigen::Index>(hc.values());
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw ContractViolation("lda_project: embedding rows and concept size differ");
  }
  if (nc < 3) throw ContractViolation("lda_project: need at least three concept values");
  Matrix means = Matrix::Zero(nc, m);
  std::vector<double> counts(static_cast<std::size_t>(nc), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    means.row(labels[static_cast<std::size_t>(i)]) += f.row(i);
    counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += 1.0;
  }
  std::size_t present = 0;
  for (Eigen::Index c = 0; c < nc; ++c) {
    const double cnt = counts[static_cast<std::size_t>(c)];
    if (cnt == 1.0) throw ContractViolation("lda_project: every present class needs two samples");
    if (cnt > 0.0) {
      means.row(c) /= cnt;
      ++present;
    }
  }
  if (present < 2) throw ContractViolation("lda_project: concept takes a single value");

  const RowVector mu = f.colwise().mean();
  Matrix sw = Matrix::Zero(m, m), sb = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowVector d = f.row(i) - means.row(labels[static_cast<std::size_t>(i)]);
    sw += d.transpose() * d;
  }
  for (Eigen::Index c = 0; c < nc; ++c) {
    const double cnt = counts[static_cast<std::size_t>(c)];
    if (cnt == 0.0) continue;
    const RowVector d = means.row(c) - mu;
    sb += cnt * d.transpose() * d;
  }
  sw /= static_cast<double>(n);
  sb /= static_cast<double>(n);

  LdaResult out;
  const SymEigResult ew = sym_eig(0.5 * (sw + sw.transpose()));
  if (!(ew.eigenvalues(m - 1) > kRankTolerance * std::max(ew.eigenvalues(0), 0.0)) ||
      !(ew.eigenvalues(m - 1) > 0.0)) {
    sw += 1e-6 * std::max(sw.trace(), 1e-300) * Matrix::Identity(m, m);
    out.ridge_added = true;
  }
  const Matrix wh = inverse_sqrt_spd(0.5 * (sw + sw.transpose()), "lda within-class scatter");
  const SymEigResult eb = sym_eig(0.5 * (wh * sb * wh + (wh * sb * wh).transpose()));
  const Eigen::Index keep = std::min<Eigen::Index>(2, m);
  out.directions = Matrix::Zero(m, 2);
  out.directions.leftCols(keep) = wh * eb.eigenvectors.leftCols(keep);
  out.projection = (f.rowwise() - mu) * out.directions;
  return out;
}

}  // namespace repsim
