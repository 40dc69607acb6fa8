#pragma once

// Teacher training and student distillation with exact backpropagation through
// the ReLU MLP and the centered unembedding layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "repsim/data.hpp"
#include "repsim/errors.hpp"
#include "repsim/model.hpp"
#include "repsim/numerics.hpp"

namespace repsim {

enum class LossKind { cross_entropy, kl_to_teacher, l1_logit, l2_logit };
enum class OptimizerKind { adam, sgd };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::kl_to_teacher: return "kl_to_teacher";
    case LossKind::l1_logit: return "l1_logit";
    case LossKind::l2_logit: return "l2_logit";
  }
  return "?";
}

/// Accepts the full names and the short forms ce, kl, l1, l2.
inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "cross_entropy" || s == "ce") return LossKind::cross_entropy;
  if (s == "kl_to_teacher" || s == "kl") return LossKind::kl_to_teacher;
  if (s == "l1_logit" || s == "l1") return LossKind::l1_logit;
  if (s == "l2_logit" || s == "l2") return LossKind::l2_logit;
  throw ContractViolation("unknown loss kind '" + s + "'");
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ContractViolation("unknown optimizer '" + s + "'");
}

/// Bumped whenever a change to the training code alters results for a fixed config.
inline constexpr int kTrainingEngineVersion = 2;

struct TrainConfig {
  std::size_t epochs = 1;
  double lr = 1e-3;
  double lr_decay_gamma = 0.995;
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::cross_entropy;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double label_ce_weight = 0.0;  ///< extra cross-entropy on labels during distillation
  std::vector<std::size_t> hidden{512, 512};
  std::size_t rep_dim = 2;
  std::size_t log_every = 1;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractViolation("TrainConfig: lr must be > 0");
    if (!(lr_decay_gamma > 0.0 && lr_decay_gamma <= 1.0)) {
      throw ContractViolation("TrainConfig: lr_decay_gamma must lie in (0, 1]");
    }
    if (batch_size == 0) throw ContractViolation("TrainConfig: batch_size must be positive");
    if (rep_dim == 0) throw ContractViolation("TrainConfig: rep_dim must be positive");
    if (log_every == 0) throw ContractViolation("TrainConfig: log_every must be positive");
    if (label_ce_weight < 0.0) throw ContractViolation("TrainConfig: label_ce_weight < 0");
    for (auto h : hidden) {
      if (h == 0) throw ContractViolation("TrainConfig: hidden widths must be positive");
    }
  }

  /// Learning rate used throughout epoch t (0-based): lr * gamma^t.
  double lr_at(std::size_t epoch) const {
    return lr * std::pow(lr_decay_gamma, static_cast<double>(epoch));
  }

  nlohmann::json to_json() const {
    return {{"engine", kTrainingEngineVersion},
            {"epochs", epochs},
            {"lr", lr},
            {"lr_decay_gamma", lr_decay_gamma},
            {"batch_size", batch_size},
            {"seed", seed},
            {"loss_kind", to_string(loss_kind)},
            {"optimizer", to_string(optimizer)},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"label_ce_weight", label_ce_weight},
            {"hidden", hidden},
            {"rep_dim", rep_dim},
            {"log_every", log_every}};
  }
};

/// Parameter-shaped gradient (or parameter) collection.
struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
  Matrix unembedding;

  double max_abs_entry() const {
    double m = max_abs(unembedding);
    for (const auto& w : weight) m = std::max(m, max_abs(w));
    for (const auto& b : bias) m = std::max(m, b.size() ? b.cwiseAbs().maxCoeff() : 0.0);
    return m;
  }
};

struct LossGrad {
  double loss = 0.0;
  Gradients grads;
};

/// Uniform fan-in init: weights and biases of a layer with n inputs drawn
/// from U(-1/sqrt(n), 1/sqrt(n)); unembeddings from U(-1/sqrt(m), 1/sqrt(m)), then centered.
inline Model init_model(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        std::size_t rep_dim, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::vector<DenseLayer> layers;
  std::size_t in = input_dim;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(rep_dim);
  for (std::size_t out : widths) {
    DenseLayer l{Matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                 Vector(static_cast<Eigen::Index>(out))};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = u(rng);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = u(rng);
    layers.push_back(std::move(l));
    in = out;
  }
  Matrix g(static_cast<Eigen::Index>(rep_dim), static_cast<Eigen::Index>(k));
  const double gbound = 1.0 / std::sqrt(static_cast<double>(rep_dim));
  std::uniform_real_distribution<double> ug(-gbound, gbound);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = ug(rng);
  return Model(EmbeddingNet(std::move(layers)), center_unembeddings(g));
}

namespace detail {

struct ForwardCache {
  std::vector<Matrix> inputs;  ///< input to layer i
  std::vector<Matrix> pre;     ///< pre-activation of layer i
  Matrix f;
  Matrix u;
};

inline ForwardCache forward_cached(const std::vector<Matrix>& w, const std::vector<Vector>& b,
                                   const Matrix& l, const Matrix& x) {
  ForwardCache c;
  c.inputs.reserve(w.size());
  c.pre.reserve(w.size());
  Matrix h = x;
  for (std::size_t i = 0; i < w.size(); ++i) {
    Matrix z(h.rows(), w[i].rows());
    z.noalias() = h * w[i].transpose();
    z.rowwise() += b[i].transpose();
    c.inputs.push_back(std::move(h));
    h = i + 1 < w.size() ? Matrix(z.cwiseMax(0.0)) : z;
    c.pre.push_back(std::move(z));
  }
  c.f = std::move(h);
  c.u.noalias() = c.f * l;
  return c;
}

/// Loss of the logit head and its gradient with respect to the logits.
inline double head_loss(const Matrix& u, LossKind kind, const std::vector<int>* y,
                        const Matrix* teacher_u, double ce_weight, Matrix& du) {
  const auto n = static_cast<double>(u.rows());
  double loss = 0.0;
  du.resize(u.rows(), u.cols());
  auto add_ce = [&](double weight) {
    const Matrix logp = log_softmax_rows(u);
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const int yi = (*y)[static_cast<std::size_t>(i)];
      loss -= weight * logp(i, yi) / n;
      du.row(i) += weight * logp.row(i).array().exp().matrix() / n;
      du(i, yi) -= weight / n;
    }
  };
  switch (kind) {
    case LossKind::cross_entropy:
      du.setZero();
      add_ce(1.0);
      return loss;
    case LossKind::kl_to_teacher: {
      const Matrix ls = log_softmax_rows(u);
      const Matrix lt = log_softmax_rows(*teacher_u);
      const Matrix pt = lt.array().exp();
      loss = (pt.array() * (lt - ls).array()).sum() / n;
      du = (ls.array().exp().matrix() - pt) / n;
      break;
    }
    case LossKind::l2_logit: {
      const Matrix diff = u - *teacher_u;
      loss = diff.squaredNorm() / n;
      du = 2.0 * diff / n;
      break;
    }
    case LossKind::l1_logit: {
      const Matrix diff = u - *teacher_u;
      loss = diff.cwiseAbs().sum() / n;
      du = diff.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }) / n;
      break;
    }
  }
  if (ce_weight > 0.0 && y != nullptr) {
    add_ce(ce_weight);
  }
  return loss;
}

inline Gradients backward(const std::vector<Matrix>& w, const Matrix& l, const ForwardCache& c,
                          const Matrix& du) {
  Gradients g;
  g.weight.resize(w.size());
  g.bias.resize(w.size());
  g.unembedding.noalias() = c.f.transpose() * du;
  g.unembedding.colwise() -= g.unembedding.rowwise().mean();
  Matrix dz(c.f.rows(), c.f.cols());
  dz.noalias() = du * l.transpose();
  for (std::size_t ii = w.size(); ii-- > 0;) {
    g.weight[ii].noalias() = dz.transpose() * c.inputs[ii];
    g.bias[ii] = dz.colwise().sum().transpose();
    if (ii > 0) {
      Matrix dh(dz.rows(), w[ii].cols());
      dh.noalias() = dz * w[ii];
      dz = dh.cwiseProduct((c.pre[ii - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

struct Params {
  std::vector<Matrix> w;
  std::vector<Vector> b;
  Matrix l;

  static Params from(const Model& m) {
    Params p;
    for (const auto& layer : m.f().layers()) {
      p.w.push_back(layer.weight);
      p.b.push_back(layer.bias);
    }
    p.l = m.g().matrix();
    return p;
  }

  Model to_model() const {
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i < w.size(); ++i) layers.push_back(DenseLayer{w[i], b[i]});
    return Model(EmbeddingNet(std::move(layers)), Unembeddings(l));
  }
};

inline void validate_targets(const Model& model, const Matrix& x, const std::vector<int>* y,
                             const Matrix* teacher_u, LossKind kind) {
  if (static_cast<std::size_t>(x.cols()) != model.input_dim()) {
    throw ContractViolation("loss_and_grad: input dim mismatch");
  }
  if (kind == LossKind::cross_entropy) {
    if (y == nullptr || y->size() != static_cast<std::size_t>(x.rows())) {
      throw ContractViolation("loss_and_grad: cross entropy needs one label per row");
    }
    for (int v : *y) {
      if (v < 0 || static_cast<std::size_t>(v) >= model.label_count()) {
        throw ContractViolation("loss_and_grad: label out of range");
      }
    }
  } else {
    if (teacher_u == nullptr || teacher_u->rows() != x.rows() ||
        static_cast<std::size_t>(teacher_u->cols()) != model.label_count()) {
      throw ContractViolation("loss_and_grad: distillation needs teacher logits for every row");
    }
  }
}

}  // namespace detail

/// Batch-mean loss and exact gradients. The teacher must be given iff kind is
/// not cross_entropy; y is required for cross_entropy and for label_ce_weight > 0.
inline LossGrad loss_and_grad(const Model& model, const Model* teacher, const Matrix& x,
                              const std::vector<int>* y, LossKind kind,
                              double label_ce_weight = 0.0) {
  if ((kind == LossKind::cross_entropy) != (teacher == nullptr)) {
    throw ContractViolation("loss_and_grad: teacher must be present iff the loss is distillation");
  }
  std::optional<Matrix> tu;
  if (teacher != nullptr) {
    if (teacher->label_count() != model.label_count() ||
        teacher->input_dim() != model.input_dim()) {
      throw ContractViolation("loss_and_grad: teacher and student shapes disagree");
    }
    tu = logits(*teacher, x);
  }
  detail::validate_targets(model, x, y, tu ? &*tu : nullptr, kind);
  const auto p = detail::Params::from(model);
  const auto cache = detail::forward_cached(p.w, p.b, p.l, x);
  Matrix du;
  LossGrad out;
  out.loss = detail::head_loss(cache.u, kind, y, tu ? &*tu : nullptr, label_ce_weight, du);
  out.grads = detail::backward(p.w, p.l, cache, du);
  return out;
}

struct GradReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  std::string worst;  ///< parameter name of the worst coordinate
};

inline constexpr std::size_t kGradCheckMaxParams = 2000;
inline constexpr double kKinkBand = 1e-7;

namespace detail {

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

struct ExtendedEval {
  long double loss = 0.0L;
  std::vector<bool> relu;
  std::vector<long double> diff;
};

inline LMatrix log_softmax_ext(const LMatrix& u) {
  LMatrix out(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const long double mx = u.row(i).maxCoeff();
    long double s = 0.0L;
    for (Eigen::Index j = 0; j < u.cols(); ++j) s += std::exp(u(i, j) - mx);
    const long double lse = mx + std::log(s);
    for (Eigen::Index j = 0; j < u.cols(); ++j) out(i, j) = u(i, j) - lse;
  }
  return out;
}

inline ExtendedEval eval_extended(const std::vector<LMatrix>& w, const std::vector<LVector>& b,
                                  const LMatrix& l, const LMatrix& x, const std::vector<int>* y,
                                  const LMatrix* tu, LossKind kind, long double ce_weight) {
  ExtendedEval e;
  LMatrix h = x;
  for (std::size_t i = 0; i < w.size(); ++i) {
    LMatrix z = h * w[i].transpose();
    z.rowwise() += b[i].transpose();
    if (i + 1 < w.size()) {
      for (Eigen::Index r = 0; r < z.rows(); ++r)
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
          e.relu.push_back(z(r, c) > 0.0L);
          z(r, c) = std::max(z(r, c), 0.0L);
        }
    }
    h = std::move(z);
  }
  const LMatrix u = h * l;
  const auto n = static_cast<long double>(u.rows());
  auto ce = [&]() {
    const LMatrix lp = log_softmax_ext(u);
    long double s = 0.0L;
    for (Eigen::Index i = 0; i < u.rows(); ++i) s -= lp(i, (*y)[static_cast<std::size_t>(i)]);
    return s / n;
  };
  switch (kind) {
    case LossKind::cross_entropy:
      e.loss = ce();
      return e;
    case LossKind::kl_to_teacher: {
      const LMatrix ls = log_softmax_ext(u);
      const LMatrix lt = log_softmax_ext(*tu);
      long double s = 0.0L;
      for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (Eigen::Index j = 0; j < u.cols(); ++j) s += std::exp(lt(i, j)) * (lt(i, j) - ls(i, j));
      e.loss = s / n;
      break;
    }
    case LossKind::l2_logit:
    case LossKind::l1_logit: {
      long double s = 0.0L;
      for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (Eigen::Index j = 0; j < u.cols(); ++j) {
          const long double d = u(i, j) - (*tu)(i, j);
          e.diff.push_back(d);
          s += kind == LossKind::l2_logit ? d * d : std::fabs(d);
        }
      e.loss = s / n;
      break;
    }
  }
  if (ce_weight > 0.0L && y != nullptr) e.loss += ce_weight * ce();
  return e;
}

/// True when the +h and -h evaluations sit on different smooth pieces.
inline bool straddles_kink(const ExtendedEval& a, const ExtendedEval& b, LossKind kind) {
  if (a.relu != b.relu) return true;
  if (kind == LossKind::l1_logit) {
    for (std::size_t i = 0; i < a.diff.size(); ++i) {
      const long double p = a.diff[i];
      const long double q = b.diff[i];
      if ((p > 0.0L) != (q > 0.0L) || (p < 0.0L) != (q < 0.0L)) return true;
      if (p != q && (std::fabs(p) < kKinkBand || std::fabs(q) < kKinkBand)) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Central finite differences (step h) against the analytic gradient. Loss
/// evaluations for the differences run in extended precision. Unembedding
/// coordinates are perturbed and then re-centered, matching the projected gradient.
inline GradReport grad_check(const Model& model, const Model* teacher, const Matrix& x,
                             const std::vector<int>* y, LossKind kind, double label_ce_weight = 0.0,
                             double h = 1e-5) {
  const std::size_t nparams = model.f().parameter_count() +
                              static_cast<std::size_t>(model.g().matrix().size());
  if (nparams > kGradCheckMaxParams) {
    throw ContractViolation("grad_check: model has " + std::to_string(nparams) +
                            " parameters (limit " + std::to_string(kGradCheckMaxParams) + ")");
  }
  const LossGrad analytic = loss_and_grad(model, teacher, x, y, kind, label_ce_weight);
  const auto p = detail::Params::from(model);
  std::vector<detail::LMatrix> w;
  std::vector<detail::LVector> b;
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    w.push_back(p.w[i].cast<long double>());
    b.push_back(p.b[i].cast<long double>());
  }
  detail::LMatrix l = p.l.cast<long double>();
  const detail::LMatrix xl = x.cast<long double>();
  std::optional<detail::LMatrix> tu;
  if (teacher != nullptr) tu = logits(*teacher, x).cast<long double>();
  const long double step = h;
  const long double ce_w = label_ce_weight;

  GradReport rep;
  auto eval = [&]() {
    return detail::eval_extended(w, b, l, xl, y, tu ? &*tu : nullptr, kind, ce_w);
  };
  auto record = [&](double a, const detail::ExtendedEval& plus, const detail::ExtendedEval& minus,
                    const std::string& name) {
    if (detail::straddles_kink(plus, minus, kind)) {
      ++rep.excluded;
      return;
    }
    const double num = static_cast<double>((plus.loss - minus.loss) / (2.0L * step));
    const double err = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-8});
    ++rep.checked;
    if (err > rep.max_rel_err || rep.worst.empty()) {
      if (err >= rep.max_rel_err) rep.worst = name;
      rep.max_rel_err = std::max(rep.max_rel_err, err);
    }
  };
  for (std::size_t li = 0; li < w.size(); ++li) {
    for (Eigen::Index r = 0; r < w[li].rows(); ++r) {
      for (Eigen::Index c = 0; c < w[li].cols(); ++c) {
        const long double orig = w[li](r, c);
        w[li](r, c) = orig + step;
        const auto plus = eval();
        w[li](r, c) = orig - step;
        const auto minus = eval();
        w[li](r, c) = orig;
        record(analytic.grads.weight[li](r, c), plus, minus,
               "w" + std::to_string(li) + "[" + std::to_string(r) + "," + std::to_string(c) + "]");
      }
    }
    for (Eigen::Index r = 0; r < b[li].size(); ++r) {
      const long double orig = b[li](r);
      b[li](r) = orig + step;
      const auto plus = eval();
      b[li](r) = orig - step;
      const auto minus = eval();
      b[li](r) = orig;
      record(analytic.grads.bias[li](r), plus, minus,
             "b" + std::to_string(li) + "[" + std::to_string(r) + "]");
    }
  }
  const auto k = static_cast<long double>(l.cols());
  for (Eigen::Index r = 0; r < l.rows(); ++r) {
    for (Eigen::Index c = 0; c < l.cols(); ++c) {
      const detail::LMatrix orig = l;
      l.row(r).array() -= step / k;
      l(r, c) += step;
      const auto plus = eval();
      l = orig;
      l.row(r).array() += step / k;
      l(r, c) -= step;
      const auto minus = eval();
      l = orig;
      record(analytic.grads.unembedding(r, c), plus, minus,
             "L[" + std::to_string(r) + "," + std::to_string(c) + "]");
    }
  }
  return rep;
}

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> bound_slack;  ///< l1 runs: 2|ln tau| l1 - d_logit^2 on the last batch
};

inline void write_training_log_csv(std::ostream& os, const std::vector<EpochLog>& log) {
  os << "epoch,lr,loss,train_acc,bound_slack\n";
  os.precision(17);
  for (const auto& e : log) {
    os << e.epoch << "," << e.lr << "," << e.loss << "," << e.train_acc << ",";
    if (e.bound_slack) os << *e.bound_slack;
    os << "\n";
  }
}

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  nlohmann::json meta;
};

/// Non-finite loss; carries the parameters from the end of the last good epoch.
class DivergenceError : public TrainingDiverged {
 public:
  DivergenceError(const std::string& what, Model last_good, std::size_t epoch)
      : TrainingDiverged(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const Model& last_good() const { return last_good_; }
  std::size_t epoch() const { return epoch_; }

 private:
  Model last_good_;
  std::size_t epoch_;
};

/// The l1 distillation loss upper-bounds the squared logit distance: the
/// training loop asserts this on every logged epoch.
class BoundAssertionFailure : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

inline Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& perm, std::size_t lo,
                          std::size_t hi) {
  Matrix out(static_cast<Eigen::Index>(hi - lo), src.cols());
  for (std::size_t r = lo; r < hi; ++r) {
    out.row(static_cast<Eigen::Index>(r - lo)) = src.row(static_cast<Eigen::Index>(perm[r]));
  }
  return out;
}

inline double l1_bound_slack(const Matrix& u, const Matrix& tu) {
  const double tau = std::min(std::exp(log_softmax_rows(u).minCoeff()),
                              std::exp(log_softmax_rows(tu).minCoeff()));
  const Matrix diff = u - tu;
  const auto n = static_cast<double>(u.rows());
  const double d2 = diff.squaredNorm() / n;
  const double l1 = diff.cwiseAbs().sum() / n;
  const double rhs = 2.0 * std::abs(std::log(tau)) * l1;
  const double slack = rhs - d2;
  if (slack < -1e-9 * std::max({std::abs(d2), std::abs(rhs), 1.0})) {
    throw BoundAssertionFailure("l1 training: d_logit^2 = " + std::to_string(d2) +
                                " exceeds 2|ln tau| l1 = " + std::to_string(rhs));
  }
  return slack;
}

/// Shared optimization loop. `teacher_u` holds teacher logits aligned with x
/// (distillation); `y` labels drive cross-entropy and the accuracy log.
inline TrainResult train_loop(Model init, const Matrix& x, const std::vector<int>* y,
                              const Matrix* teacher_u, const TrainConfig& cfg) {
  cfg.validate();
  detail::validate_targets(init, x, y, teacher_u, cfg.loss_kind);
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0) throw ContractViolation("train: empty training set");
  Params p = Params::from(init);
  Params m1;
  Params m2;
  if (cfg.optimizer == OptimizerKind::adam) {
    for (std::size_t i = 0; i < p.w.size(); ++i) {
      m1.w.push_back(Matrix::Zero(p.w[i].rows(), p.w[i].cols()));
      m1.b.push_back(Vector::Zero(p.b[i].size()));
    }
    m1.l = Matrix::Zero(p.l.rows(), p.l.cols());
    m2 = m1;
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 2));
  std::uint64_t step = 0;
  TrainResult res{init, {}, {}};
  Model last_good = init;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);
    const double lr = cfg.lr_at(epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::optional<double> slack;
    for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      const Matrix xb = gather_rows(x, perm, lo, hi);
      std::vector<int> yb;
      if (y != nullptr) {
        yb.reserve(hi - lo);
        for (std::size_t r = lo; r < hi; ++r) yb.push_back((*y)[perm[r]]);
      }
      std::optional<Matrix> tb;
      if (teacher_u != nullptr) tb = gather_rows(*teacher_u, perm, lo, hi);
      const auto cache = forward_cached(p.w, p.b, p.l, xb);
      Matrix du;
      const double loss = head_loss(cache.u, cfg.loss_kind, y ? &yb : nullptr, tb ? &*tb : nullptr,
                                    cfg.label_ce_weight, du);
      if (!std::isfinite(loss)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                  " (non-finite loss)",
                              last_good, epoch);
      }
      loss_sum += loss * static_cast<double>(hi - lo);
      if (y != nullptr) {
        for (Eigen::Index r = 0; r < cache.u.rows(); ++r) {
          if (argmax_row(cache.u, r) == yb[static_cast<std::size_t>(r)]) ++correct;
        }
      }
      const bool last_batch = hi == n;
      if (last_batch && cfg.loss_kind == LossKind::l1_logit &&
          (epoch % cfg.log_every == 0 || epoch + 1 == cfg.epochs)) {
        slack = l1_bound_slack(cache.u, *tb);
      }
      const Gradients g = backward(p.w, p.l, cache, du);
      ++step;
      if (cfg.optimizer == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < p.w.size(); ++i) {
          p.w[i] -= lr * g.weight[i];
          p.b[i] -= lr * g.bias[i];
        }
        p.l -= lr * g.unembedding;
      } else {
        const double b1 = cfg.adam_beta1;
        const double b2 = cfg.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        const double a = lr * std::sqrt(c2) / c1;
        const double eps_hat = cfg.adam_eps * std::sqrt(c2);
        auto update = [&](auto& param, auto& mom, auto& vel, const auto& grad) {
          mom = b1 * mom + (1.0 - b1) * grad;
          vel = b2 * vel + (1.0 - b2) * grad.cwiseAbs2();
          param.array() -= a * mom.array() / (vel.array().sqrt() + eps_hat);
        };
        for (std::size_t i = 0; i < p.w.size(); ++i) {
          update(p.w[i], m1.w[i], m2.w[i], g.weight[i]);
          update(p.b[i], m1.b[i], m2.b[i], g.bias[i]);
        }
        update(p.l, m1.l, m2.l, g.unembedding);
      }
      p.l.colwise() -= p.l.rowwise().mean();
    }
    if (!p.l.allFinite()) {
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch), last_good, epoch);
    }
    last_good = p.to_model();
    if (epoch % cfg.log_every == 0 || epoch + 1 == cfg.epochs) {
      res.log.push_back(EpochLog{epoch, lr, loss_sum / static_cast<double>(n),
                                 y ? static_cast<double>(correct) / static_cast<double>(n) : 0.0,
                                 slack});
    }
  }
  res.model = p.to_model();
  res.meta = {{"config", cfg.to_json()},
              {"init", "uniform fan-in weights and biases, U(+-1/sqrt(m)) centered unembeddings"},
              {"train_rows", n}};
  return res;
}

}  // namespace detail

/// Cross-entropy training on the train split. Deterministic given cfg.seed.
inline TrainResult train_teacher(const Dataset& data, const TrainConfig& cfg) {
  if (cfg.loss_kind != LossKind::cross_entropy) {
    throw ContractViolation("train_teacher: loss_kind must be cross_entropy");
  }
  cfg.validate();
  const Batch train = data.part(Split::train);
  Model init = init_model(data.dim(), cfg.hidden, cfg.rep_dim, data.k, cfg.seed);
  auto res = detail::train_loop(std::move(init), train.x, &train.y, nullptr, cfg);
  res.meta["role"] = "teacher";
  return res;
}

/// Trains a student against the frozen teacher's logits on the training inputs.
/// Labels are only used for the accuracy log unless label_ce_weight > 0.
/// `init` overrides the random initialization (same architecture required).
inline TrainResult distill_student(const Model& teacher, const Dataset& data,
                                   const TrainConfig& cfg, const Model* init = nullptr) {
  if (cfg.loss_kind == LossKind::cross_entropy) {
    throw ContractViolation("distill_student: loss_kind must be a distillation loss");
  }
  cfg.validate();
  if (teacher.input_dim() != data.dim() || teacher.label_count() != data.k) {
    throw ContractViolation("distill_student: teacher does not match the dataset");
  }
  const Batch train = data.part(Split::train);
  const Matrix tu = logits(teacher, train.x);
  Model start = init ? *init : init_model(data.dim(), cfg.hidden, cfg.rep_dim, data.k, cfg.seed);
  if (start.label_count() != teacher.label_count() || start.input_dim() != teacher.input_dim()) {
    throw ContractViolation("distill_student: initial student shape mismatch");
  }
  auto res = detail::train_loop(std::move(start), train.x, &train.y, &tu, cfg);
  res.meta["role"] = "student";
  return res;
}

}  // namespace repsim
