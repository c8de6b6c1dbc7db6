#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "buckopt/errors.hpp"

namespace buckopt {

struct Inertia {
  int n_positive = 0;
  int n_negative = 0;
  int n_zero = 0;
};

struct FactorizationReport {
  Inertia inertia;
  double log_abs_det = 0.0; // -inf when zero pivots are present
  double min_pivot = 0.0;   // signed smallest pivot
};

/// Symmetric LDL^T factorisation without pivoting.
///
/// The pivots equal ratios of consecutive leading principal minors, so their
/// signs give the inertia of the matrix (Sylvester's law).  This is what makes
/// the factorisation usable for stability monitoring along equilibrium paths;
/// a pivoted factorisation would reorder the minors and lose that readout.
/// log|det| is accumulated as a sum of pivot logs to avoid over/underflow.
///
/// A pivot with |d_j| <= pivot_rel_tol * max|A_ij| is treated as zero; its
/// column is skipped (decoupled) so the remaining counts stay meaningful, and
/// solves are refused.  Exact zero leading minors of a nonsingular indefinite
/// matrix trigger the same path; along generic load paths this does not occur.
class SymmetricFactor {
public:
  explicit SymmetricFactor(const Eigen::MatrixXd& A,
                           double pivot_rel_tol = 128.0 * std::numeric_limits<double>::epsilon()) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n) throw InputError("factorize_symmetric: matrix must be square");
    L_ = Eigen::MatrixXd::Identity(n, n);
    d_ = Eigen::VectorXd::Zero(n);

    const double scale = n > 0 ? A.cwiseAbs().maxCoeff() : 0.0;
    const double tol = pivot_rel_tol * std::max(scale, std::numeric_limits<double>::min());

    double log_det = 0.0;
    double min_pivot = std::numeric_limits<double>::infinity();
    Inertia inertia;

    Eigen::VectorXd w; // L(j,0:j) scaled by d(0:j)
    for (Eigen::Index j = 0; j < n; ++j) {
      w = L_.row(j).head(j).transpose().cwiseProduct(d_.head(j));
      const double dj = A(j, j) - L_.row(j).head(j).dot(w);
      min_pivot = std::min(min_pivot, dj);
      if (std::abs(dj) <= tol) {
        ++inertia.n_zero; // column skipped, solve will be refused
        continue;
      }
      d_(j) = dj;
      (dj > 0.0 ? inertia.n_positive : inertia.n_negative) += 1;
      log_det += std::log(std::abs(dj));
      if (j + 1 < n)
        L_.col(j).tail(n - j - 1) =
            (A.col(j).tail(n - j - 1) - L_.bottomLeftCorner(n - j - 1, j) * w) / dj;
    }

    report_.inertia = inertia;
    report_.log_abs_det =
        inertia.n_zero > 0 ? -std::numeric_limits<double>::infinity() : log_det;
    report_.min_pivot = n > 0 ? min_pivot : 0.0;
  }

  const FactorizationReport& report() const { return report_; }
  const Inertia& inertia() const { return report_.inertia; }
  double log_abs_det() const { return report_.log_abs_det; }
  double min_pivot() const { return report_.min_pivot; }
  bool singular() const { return report_.inertia.n_zero > 0; }
  Eigen::Index size() const { return d_.size(); }

  template <typename Derived>
  Eigen::Matrix<double, Eigen::Dynamic, Derived::ColsAtCompileTime>
  solve(const Eigen::MatrixBase<Derived>& B) const {
    if (singular()) throw SolveError("SymmetricFactor::solve: matrix is singular");
    if (B.rows() != d_.size()) throw InputError("SymmetricFactor::solve: dimension mismatch");
    Eigen::Matrix<double, Eigen::Dynamic, Derived::ColsAtCompileTime> X =
        L_.triangularView<Eigen::UnitLower>().solve(B.derived());
    X.array().colwise() /= d_.array();
    return L_.transpose().triangularView<Eigen::UnitUpper>().solve(X);
  }

private:
  Eigen::MatrixXd L_;
  Eigen::VectorXd d_;
  FactorizationReport report_;
};

inline SymmetricFactor factorize_symmetric(const Eigen::MatrixXd& A) {
  return SymmetricFactor(A);
}

} // namespace buckopt
