#pragma once

// Dense linear-algebra kernels shared by every other module. All arithmetic is
// 64-bit; the bound checks downstream are too tight for single precision.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "repsim/errors.hpp"

namespace repsim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Condition number above which a square matrix is declared non-invertible.
inline constexpr double kSingularCondition = 1e12;
/// Singular values below this fraction of the largest count as zero for rank.
inline constexpr double kRankTolerance = 1e-12;

struct SvdResult {
  Matrix u;                ///< rows x r, orthonormal columns
  Vector singular_values;  ///< r values, non-increasing
  Matrix v;                ///< cols x r, orthonormal columns

  Matrix reconstruct() const { return u * singular_values.asDiagonal() * v.transpose(); }
};

struct SymEigResult {
  Vector eigenvalues;  ///< non-increasing
  Matrix eigenvectors; ///< column i pairs with eigenvalues(i)
};

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) {
    throw ContractViolation(std::string(what) + ": non-finite entries");
  }
}

inline void require_nonempty(const Matrix& a, const char* what) {
  if (a.rows() == 0 || a.cols() == 0) {
    throw ContractViolation(std::string(what) + ": empty matrix");
  }
}

inline double max_abs(const Matrix& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

/// Thin SVD with singular values sorted descending.
inline SvdResult svd(const Matrix& a) {
  require_nonempty(a, "svd");
  require_finite(a, "svd");
  Eigen::JacobiSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success || !solver.singularValues().allFinite()) {
    const auto& s = solver.singularValues();
    const double cond = s.size() && s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1)
                                                        : std::numeric_limits<double>::infinity();
    throw NumericalFailure("svd did not converge", static_cast<std::size_t>(a.rows()),
                           static_cast<std::size_t>(a.cols()), cond);
  }
  // JacobiSVD already returns non-increasing singular values.
  return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

inline Vector singular_values(const Matrix& a) {
  require_nonempty(a, "singular_values");
  require_finite(a, "singular_values");
  Eigen::JacobiSVD<Matrix> solver(a);
  return solver.singularValues();
}

/// 2-norm condition number; infinity when the smallest singular value is zero.
inline double condition_number(const Matrix& a) {
  const Vector s = singular_values(a);
  const double smin = s(s.size() - 1);
  if (smin <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return s(0) / smin;
}

inline std::size_t numerical_rank(const Matrix& a) {
  const Vector s = singular_values(a);
  if (s(0) == 0.0) {
    return 0;
  }
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > kRankTolerance * s(0)) {
      ++r;
    }
  }
  return r;
}

/// Symmetric eigendecomposition, eigenvalues non-increasing. The input must be
/// symmetric within 1e-10 absolute; it is symmetrized as (A + A^T) / 2.
inline SymEigResult sym_eig(const Matrix& a) {
  require_nonempty(a, "sym_eig");
  require_finite(a, "sym_eig");
  if (a.rows() != a.cols()) {
    throw ContractViolation("sym_eig: matrix is not square");
  }
  const double asym = max_abs(a - a.transpose());
  if (asym > 1e-10) {
    throw ContractViolation("sym_eig: asymmetry " + std::to_string(asym) + " exceeds 1e-10");
  }
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericalFailure("sym_eig did not converge", static_cast<std::size_t>(a.rows()),
                           static_cast<std::size_t>(a.cols()),
                           std::numeric_limits<double>::quiet_NaN());
  }
  // Eigen sorts ascending.
  const Eigen::Index n = sym.rows();
  SymEigResult out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.eigenvalues(i) = solver.eigenvalues()(n - 1 - i);
    out.eigenvectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

/// Solves A X = B for square A. Refuses matrices with condition > 1e12.
inline Matrix solve(const Matrix& a, const Matrix& b) {
  require_nonempty(a, "solve");
  require_finite(a, "solve");
  require_finite(b, "solve");
  if (a.rows() != a.cols()) {
    throw ContractViolation("solve: matrix is not square");
  }
  if (b.rows() != a.rows()) {
    throw ContractViolation("solve: right-hand side row count mismatch");
  }
  const double cond = condition_number(a);
  if (!(cond <= kSingularCondition)) {
    throw SingularMatrixError("solve: matrix is numerically singular", cond);
  }
  return a.partialPivLu().solve(b);
}

/// A^{-1/2} for symmetric positive definite A. Eigenvalues below
/// 1e-12 * lambda_max raise RankDeficiencyError instead of pseudo-inverting.
inline Matrix inverse_sqrt_spd(const Matrix& a, const char* what) {
  const SymEigResult eig = sym_eig(a);
  const double top = eig.eigenvalues(0);
  const double floor = kRankTolerance * std::max(top, 0.0);
  const Eigen::Index n = a.rows();
  if (!(top > 0.0) || eig.eigenvalues(n - 1) <= floor) {
    throw RankDeficiencyError(std::string(what) + ": matrix is rank deficient (lambda_min=" +
                              std::to_string(eig.eigenvalues(n - 1)) +
                              ", lambda_max=" + std::to_string(top) + ")");
  }
  const Vector inv_sqrt = eig.eigenvalues.array().rsqrt();
  return eig.eigenvectors * inv_sqrt.asDiagonal() * eig.eigenvectors.transpose();
}

/// Largest singular value.
inline double operator_norm(const Matrix& a) { return singular_values(a)(0); }

/// Exact binomial coefficient; saturates at uint64 max.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) {
    return 0;
  }
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    const std::uint64_t num = n - k + i;
    const std::uint64_t g = std::gcd(r, i);
    const std::uint64_t r_div = r / g;
    const std::uint64_t i_div = i / g;
    if (r_div > std::numeric_limits<std::uint64_t>::max() / num) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    r = r_div * num / i_div;
  }
  return r;
}

/// Advances `idx` (sorted, distinct, values < n) to the next combination in
/// lexicographic order; returns false after the last one.
inline bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
  const std::size_t r = idx.size();
  if (r == 0) {
    return false;
  }
  std::size_t i = r;
  while (i > 0) {
    --i;
    if (idx[i] < n - r + i) {
      ++idx[i];
      for (std::size_t j = i + 1; j < r; ++j) {
        idx[j] = idx[j - 1] + 1;
      }
      return true;
    }
  }
  return false;
}

/// splitmix64 step; used to derive independent per-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Row-wise numerically stable log-softmax.
inline Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    RowVector e = (logits.row(i).array() - mx).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

/// Index of the first maximal entry (ties break to the lowest index).
inline Eigen::Index argmax_row(const Matrix& m, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) {
      best = j;
    }
  }
  return best;
}

}  // namespace repsim
