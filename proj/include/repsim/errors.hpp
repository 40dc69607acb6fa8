#pragma once

#include <cstddef>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace repsim {

/// Pivot label plus an m-element label set used to build shifted unembedding matrices.
struct LabelSubset {
  std::size_t pivot = 0;
  std::vector<std::size_t> members;

  std::string to_string() const {
    std::ostringstream os;
    os << "pivot=" << pivot << " members={";
    for (std::size_t i = 0; i < members.size(); ++i) {
      os << (i ? "," : "") << members[i];
    }
    os << "}";
    return os.str();
  }

  friend bool operator==(const LabelSubset&, const LabelSubset&) = default;
};

/// A precondition or argument contract was violated by the caller.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (non-convergence, non-finite result).
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::size_t rows, std::size_t cols,
                   double condition_estimate)
      : std::runtime_error(what + " (" + std::to_string(rows) + "x" + std::to_string(cols) +
                           ", cond~" + std::to_string(condition_estimate) + ")"),
        rows_(rows),
        cols_(cols),
        condition_(condition_estimate) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double condition_estimate() const { return condition_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  double condition_;
};

/// Matrix is numerically singular; optionally names the label subset that produced it.
class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, double condition_estimate,
                      std::optional<LabelSubset> subset = std::nullopt)
      : std::runtime_error(compose(what, condition_estimate, subset)),
        condition_(condition_estimate),
        subset_(std::move(subset)) {}

  double condition_estimate() const { return condition_; }
  const std::optional<LabelSubset>& subset() const { return subset_; }

 private:
  static std::string compose(const std::string& what, double cond,
                             const std::optional<LabelSubset>& s) {
    std::string msg = what + " (cond~" + std::to_string(cond) + ")";
    if (s) {
      msg += " at " + s->to_string();
    }
    return msg;
  }

  double condition_;
  std::optional<LabelSubset> subset_;
};

/// Second-moment / covariance / unembedding Gram matrix lacks full rank.
class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk artifact could not be parsed (bad header, version, truncation).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged (non-finite loss).
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace repsim
