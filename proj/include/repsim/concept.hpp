#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "repsim/errors.hpp"
#include "repsim/numerics.hpp"

namespace repsim {

/// Per-sample concept assignment: hard values in [0, C) or full distributions (n x C).
class Concept {
 public:
  Concept() = default;

  static Concept hard(std::vector<int> labels, std::size_t values) {
    if (values < 2) {
      throw ContractViolation("Concept: need at least two values");
    }
    for (int v : labels) {
      if (v < 0 || static_cast<std::size_t>(v) >= values) {
        throw ContractViolation("Concept: value " + std::to_string(v) + " out of range");
      }
    }
    Concept c;
    c.values_ = values;
    c.labels_ = std::move(labels);
    return c;
  }

  static Concept soft(Matrix distributions) {
    if (distributions.cols() < 2) {
      throw ContractViolation("Concept: need at least two values");
    }
    require_finite(distributions, "Concept");
    for (Eigen::Index i = 0; i < distributions.rows(); ++i) {
      if (distributions.row(i).minCoeff() < 0.0 ||
          std::abs(distributions.row(i).sum() - 1.0) > 1e-9) {
        throw ContractViolation("Concept: row " + std::to_string(i) + " is not a distribution");
      }
    }
    Concept c;
    c.values_ = static_cast<std::size_t>(distributions.cols());
    c.dist_ = std::move(distributions);
    return c;
  }

  std::size_t values() const { return values_; }
  std::size_t size() const {
    return labels_ ? labels_->size() : static_cast<std::size_t>(dist_ ? dist_->rows() : 0);
  }
  bool is_hard() const { return labels_.has_value(); }

  /// n x C target distributions (one-hot for hard assignments).
  Matrix distributions() const {
    if (dist_) {
      return *dist_;
    }
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(values_));
    for (std::size_t i = 0; i < size(); ++i) {
      out(static_cast<Eigen::Index>(i), (*labels_)[i]) = 1.0;
    }
    return out;
  }

  /// Hard labels; argmax of the distribution otherwise, ties to the lowest index.
  std::vector<int> hard_labels() const {
    if (labels_) {
      return *labels_;
    }
    std::vector<int> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<int>(argmax_row(*dist_, static_cast<Eigen::Index>(i)));
    }
    return out;
  }

  Concept rows(const std::vector<std::size_t>& idx) const {
    if (labels_) {
      std::vector<int> sel;
      sel.reserve(idx.size());
      for (auto i : idx) sel.push_back((*labels_)[i]);
      return hard(std::move(sel), values_);
    }
    Matrix sel(static_cast<Eigen::Index>(idx.size()), dist_->cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      sel.row(static_cast<Eigen::Index>(r)) = dist_->row(static_cast<Eigen::Index>(idx[r]));
    }
    return soft(std::move(sel));
  }

 private:
  std::size_t values_ = 0;
  std::optional<std::vector<int>> labels_;
  std::optional<Matrix> dist_;
};

}  // namespace repsim
