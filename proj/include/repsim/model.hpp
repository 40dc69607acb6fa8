#pragma once

// Softmax embedding/unembedding model family: p(y|x) = softmax(f(x)^T g(y)).

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "repsim/errors.hpp"
#include "repsim/numerics.hpp"
#include "repsim/subsets.hpp"

namespace repsim {

/// Affine layer y = W x + b with W stored out x in.
struct DenseLayer {
  Matrix weight;
  Vector bias;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// ReLU MLP: affine layers with elementwise ReLU between consecutive layers
/// (none after the last one). The output dimension is the representation dim m.
class EmbeddingNet {
 public:
  EmbeddingNet() = default;

  explicit EmbeddingNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) {
      throw ContractViolation("EmbeddingNet: at least one layer required");
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      require_nonempty(l.weight, "EmbeddingNet weight");
      require_finite(l.weight, "EmbeddingNet weight");
      require_finite(l.bias, "EmbeddingNet bias");
      if (l.bias.size() != l.out_dim()) {
        throw ContractViolation("EmbeddingNet: bias length does not match layer " +
                                std::to_string(i) + " output");
      }
      if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
        throw ContractViolation("EmbeddingNet: layer " + std::to_string(i) +
                                " input does not chain with the previous output");
      }
    }
  }

  /// Single linear layer f(x) = W x.
  static EmbeddingNet linear(const Matrix& w) {
    return EmbeddingNet({DenseLayer{w, Vector::Zero(w.rows())}});
  }

  std::size_t input_dim() const { return static_cast<std::size_t>(layers_.front().in_dim()); }
  std::size_t rep_dim() const { return static_cast<std::size_t>(layers_.back().out_dim()); }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
      n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    }
    return n;
  }

  /// Rows of x are inputs; returns n x m embeddings.
  Matrix forward(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim()) {
      throw ContractViolation("EmbeddingNet: input has " + std::to_string(x.cols()) +
                              " columns, expected " + std::to_string(input_dim()));
    }
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix z = h * layers_[i].weight.transpose();
      z.rowwise() += layers_[i].bias.transpose();
      if (i + 1 < layers_.size()) {
        z = z.cwiseMax(0.0);
      }
      h = std::move(z);
    }
    return h;
  }

  /// Same network with the output mapped through A (f -> A f).
  EmbeddingNet transformed(const Matrix& a) const {
    auto layers = layers_;
    layers.back().weight = a * layers.back().weight;
    layers.back().bias = a * layers.back().bias;
    return EmbeddingNet(std::move(layers));
  }

 private:
  std::vector<DenseLayer> layers_;
};

inline constexpr double kCenteringTolerance = 1e-9;

/// Unembedding matrix L (m x k), column i is g(y_i); columns sum to zero.
class Unembeddings {
 public:
  Unembeddings() = default;

  explicit Unembeddings(Matrix l) : l_(std::move(l)) {
    require_nonempty(l_, "Unembeddings");
    require_finite(l_, "Unembeddings");
    const double drift = l_.rowwise().sum().cwiseAbs().maxCoeff();
    if (drift > kCenteringTolerance * std::max(1.0, max_abs(l_))) {
      throw ContractViolation("Unembeddings: columns do not sum to zero (max row sum " +
                              std::to_string(drift) + ")");
    }
  }

  const Matrix& matrix() const { return l_; }
  std::size_t rep_dim() const { return static_cast<std::size_t>(l_.rows()); }
  std::size_t label_count() const { return static_cast<std::size_t>(l_.cols()); }
  Vector column(std::size_t i) const { return l_.col(static_cast<Eigen::Index>(i)); }

 private:
  Matrix l_;
};

/// Removes the column mean so that the unembeddings sum to zero.
inline Unembeddings center_unembeddings(const Matrix& l_raw) {
  require_nonempty(l_raw, "center_unembeddings");
  Matrix l = l_raw;
  l.colwise() -= l_raw.rowwise().mean();
  return Unembeddings(std::move(l));
}

/// Pair (f, g). Requires k > m + 1.
class Model {
 public:
  Model(EmbeddingNet f, Unembeddings g) : f_(std::move(f)), g_(std::move(g)) {
    if (f_.rep_dim() != g_.rep_dim()) {
      throw ContractViolation("Model: embedding dim " + std::to_string(f_.rep_dim()) +
                              " != unembedding dim " + std::to_string(g_.rep_dim()));
    }
    if (g_.label_count() <= g_.rep_dim() + 1) {
      throw ContractViolation("Model: need k > m + 1 (k=" + std::to_string(g_.label_count()) +
                              ", m=" + std::to_string(g_.rep_dim()) + ")");
    }
  }

  const EmbeddingNet& f() const { return f_; }
  const Unembeddings& g() const { return g_; }
  std::size_t input_dim() const { return f_.input_dim(); }
  std::size_t rep_dim() const { return f_.rep_dim(); }
  std::size_t label_count() const { return g_.label_count(); }

  Matrix embed(const Matrix& x) const { return f_.forward(x); }

  /// The equivalent model (A f, A^{-T} g); identical logits for invertible A.
  Model reparameterized(const Matrix& a) const {
    const Matrix inv_t = solve(a.transpose(), Matrix::Identity(a.rows(), a.cols()));
    Matrix l = inv_t * g_.matrix();
    l.colwise() -= l.rowwise().mean();
    return Model(f_.transformed(a), Unembeddings(std::move(l)));
  }

 private:
  EmbeddingNet f_;
  Unembeddings g_;
};

/// n x k logits u(x) = L^T f(x); rows sum to zero.
inline Matrix logits(const Model& model, const Matrix& x_batch) {
  return model.embed(x_batch) * model.g().matrix();
}

inline Matrix log_probabilities(const Model& model, const Matrix& x_batch) {
  return log_softmax_rows(logits(model, x_batch));
}

/// n x k conditional probabilities via max-shifted softmax.
inline Matrix probabilities(const Model& model, const Matrix& x_batch) {
  return softmax_rows(logits(model, x_batch));
}

/// Empirical minimum probability over the batch (estimator of the tau bound).
inline double tau_min(const Model& model, const Matrix& x_batch) {
  if (x_batch.rows() == 0) {
    throw ContractViolation("tau_min: empty batch");
  }
  // exp(min log p) avoids underflowing tiny probabilities to an exact zero
  // earlier than necessary.
  return std::exp(log_probabilities(model, x_batch).minCoeff());
}

inline void validate_subset(const LabelSubset& s, std::size_t k, std::size_t m) {
  if (s.members.size() != m) {
    throw ContractViolation("LabelSubset: expected " + std::to_string(m) + " members, got " +
                            std::to_string(s.members.size()));
  }
  if (s.pivot >= k) {
    throw ContractViolation("LabelSubset: pivot out of range");
  }
  for (std::size_t i = 0; i < s.members.size(); ++i) {
    if (s.members[i] >= k || s.members[i] == s.pivot) {
      throw ContractViolation("LabelSubset: invalid member " + std::to_string(s.members[i]));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (s.members[j] == s.members[i]) {
        throw ContractViolation("LabelSubset: duplicate member");
      }
    }
  }
}

/// m x m matrix whose column j is g(y_j) - g(pivot).
inline Matrix shifted_unembedding_matrix(const Unembeddings& g, const LabelSubset& s) {
  const std::size_t m = g.rep_dim();
  validate_subset(s, g.label_count(), m);
  const Matrix& l = g.matrix();
  Matrix out(m, m);
  const auto pivot = static_cast<Eigen::Index>(s.pivot);
  for (std::size_t j = 0; j < m; ++j) {
    out.col(static_cast<Eigen::Index>(j)) =
        l.col(static_cast<Eigen::Index>(s.members[j])) - l.col(pivot);
  }
  return out;
}

/// L~_J^{-T} L~'_J^T, computed by a linear solve.
inline Matrix transition_matrix(const Unembeddings& g, const Unembeddings& g_prime,
                                const LabelSubset& s) {
  if (g.rep_dim() != g_prime.rep_dim() || g.label_count() != g_prime.label_count()) {
    throw ContractViolation("transition_matrix: unembedding shapes differ");
  }
  const Matrix lt = shifted_unembedding_matrix(g, s);
  const Matrix lt_prime = shifted_unembedding_matrix(g_prime, s);
  try {
    return solve(lt.transpose(), lt_prime.transpose());
  } catch (const SingularMatrixError& e) {
    throw SingularMatrixError("transition_matrix: shifted unembedding matrix is singular",
                              e.condition_estimate(), s);
  }
}

struct GeneralPositionReport {
  bool ok = false;
  bool unembeddings_ok = false;
  bool embeddings_span = false;  ///< batch embeddings have rank m
  bool diversity = false;        ///< logit matrix has rank m
  double min_singular = std::numeric_limits<double>::infinity();
  double max_singular = 0.0;
  double worst_ratio = std::numeric_limits<double>::infinity();
  LabelSubset worst_subset;
  std::size_t subsets_checked = 0;
  bool estimated = false;  ///< true when subsets were sampled instead of enumerated
};

/// Checks that every visited L~_J is invertible (smallest singular value above
/// 1e-12 of its largest) and that embeddings and logits span R^m on the batch.
inline GeneralPositionReport check_general_position(const Model& model, const Matrix& x_batch,
                                                    const SubsetPlan& plan) {
  GeneralPositionReport rep;
  const std::size_t k = model.label_count();
  const std::size_t m = model.rep_dim();
  rep.estimated = plan.mode == SubsetPlan::Mode::sampled;
  rep.unembeddings_ok = true;
  for (const auto& s : plan_subsets(k, m, plan)) {
    const Vector sv = singular_values(shifted_unembedding_matrix(model.g(), s));
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    const double ratio = smax > 0.0 ? smin / smax : 0.0;
    ++rep.subsets_checked;
    rep.max_singular = std::max(rep.max_singular, smax);
    if (smin < rep.min_singular) {
      rep.min_singular = smin;
    }
    if (ratio < rep.worst_ratio) {
      rep.worst_ratio = ratio;
      rep.worst_subset = s;
    }
    if (!(smin > kRankTolerance * smax)) {
      rep.unembeddings_ok = false;
    }
  }
  if (x_batch.rows() > 0) {
    rep.embeddings_span = numerical_rank(model.embed(x_batch)) == m;
    rep.diversity = numerical_rank(logits(model, x_batch)) == m;
  }
  rep.ok = rep.unembeddings_ok && rep.embeddings_span && rep.diversity;
  return rep;
}

inline GeneralPositionReport check_general_position(const Model& model, const Matrix& x_batch) {
  return check_general_position(model, x_batch,
                                SubsetPlan::automatic(model.label_count(), model.rep_dim()));
}

}  // namespace repsim
