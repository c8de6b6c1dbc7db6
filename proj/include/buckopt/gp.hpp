#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>

#include "buckopt/errors.hpp"
#include "buckopt/gaussian.hpp"
#include "buckopt/local_search.hpp"
#include "buckopt/log.hpp"
#include "buckopt/sobol.hpp"

namespace buckopt {

/// Matern smoothness is restricted to the half-integer orders with closed
/// forms; continuous-order fitting would need modified-Bessel derivatives
/// for no practical gain.  The noise level sigma_eps is a standard
/// deviation, not a variance.
struct GpHyperparameters {
  double nu = 2.5;
  double eta = 1.0;
  double sigma_eps = 1e-8;
};

inline bool matern_order_allowed(double nu) { return nu == 0.5 || nu == 1.5 || nu == 2.5; }

/// Matern covariance at distance r, unit variance.  Continuous at r = 0
/// with value 1.
inline double matern_cov(double r, double nu, double eta) {
  if (!(eta > 0.0)) throw InputError("matern_cov: eta must be positive");
  if (!matern_order_allowed(nu)) throw InputError("matern_cov: nu must be 0.5, 1.5 or 2.5");
  const double s = r / eta;
  if (nu == 0.5) return std::exp(-s);
  if (nu == 1.5) {
    const double t = std::sqrt(3.0) * s;
    return (1.0 + t) * std::exp(-t);
  }
  const double t = std::sqrt(5.0) * s;
  return (1.0 + t + t * t / 3.0) * std::exp(-t);
}

inline double matern_cov(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double nu,
                         double eta) {
  if (a.size() != b.size()) throw InputError("matern_cov: point dimensions differ");
  return matern_cov((a - b).norm(), nu, eta);
}

namespace detail {

inline Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd R(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    R(i, i) = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      R(i, j) = (A.row(i) - A.row(j)).norm();
      R(j, i) = R(i, j);
    }
  }
  return R;
}

inline Eigen::MatrixXd kernel_from_distances(const Eigen::MatrixXd& R,
                                             const GpHyperparameters& theta) {
  Eigen::MatrixXd C(R.rows(), R.cols());
  for (Eigen::Index j = 0; j < R.cols(); ++j)
    for (Eigen::Index i = 0; i < R.rows(); ++i)
      C(i, j) = matern_cov(R(i, j), theta.nu, theta.eta);
  return C;
}

/// Cholesky of C + sigma_eps^2 I with diagonal jitter escalated from 1e-12
/// to 1e-8 when the plain factorisation fails.  The kernel has unit
/// diagonal, so absolute jitter is also relative.
inline Eigen::LLT<Eigen::MatrixXd> factor_kernel(const Eigen::MatrixXd& C, double sigma_eps,
                                                 double* jitter_used = nullptr) {
  const Eigen::Index n = C.rows();
  Eigen::MatrixXd M = C;
  M.diagonal().array() += sigma_eps * sigma_eps;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  double jitter = 0.0;
  for (double j = 1e-12; llt.info() != Eigen::Success && j <= 1e-8 * 1.0001; j *= 10.0) {
    Eigen::MatrixXd Mj = M;
    Mj.diagonal().array() += j;
    llt.compute(Mj);
    jitter = j;
  }
  if (llt.info() != Eigen::Success)
    throw SolveError("factor_kernel: kernel matrix not positive definite (n = " +
                     std::to_string(n) + ")");
  if (jitter_used) *jitter_used = jitter;
  return llt;
}

inline double lml_from_factor(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& g) {
  const Eigen::Index n = g.size();
  const Eigen::VectorXd alpha = llt.solve(g);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * g.dot(alpha) - 0.5 * log_det -
         0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

} // namespace detail

/// Log marginal likelihood of outputs g under the zero-mean prior with
/// covariance C(A, A) + sigma_eps^2 I, computed through the Cholesky factor
/// (log-det from the factor diagonal).  g is used as given; standardisation
/// is the caller's business.
inline double log_marginal_likelihood(const Eigen::MatrixXd& A, const Eigen::VectorXd& g,
                                      const GpHyperparameters& theta) {
  if (A.rows() != g.size()) throw InputError("log_marginal_likelihood: row count mismatch");
  if (A.rows() < 1) throw InputError("log_marginal_likelihood: no data");
  if (!(theta.sigma_eps >= 0.0)) throw InputError("log_marginal_likelihood: negative noise");
  const Eigen::MatrixXd C = detail::kernel_from_distances(detail::pairwise_distances(A), theta);
  return detail::lml_from_factor(detail::factor_kernel(C, theta.sigma_eps), g);
}

/// Gaussian-process regressor on inputs in the unit box.  Outputs are
/// standardised internally (population mean/std, stored for
/// de-standardisation); the prior mean is zero on the standardised scale.
/// Immutable once built, safe to share across threads for prediction.
class GpModel {
public:
  GpModel(Eigen::MatrixXd A, const Eigen::VectorXd& y, const GpHyperparameters& theta)
      : A_(std::move(A)), theta_(theta) {
    const Eigen::Index n = A_.rows();
    if (n < 1) throw InputError("GpModel: no training points");
    if (y.size() != n) throw InputError("GpModel: output size does not match input rows");
    if (!(theta_.eta > 0.0) || !(theta_.sigma_eps >= 0.0) || !matern_order_allowed(theta_.nu))
      throw InputError("GpModel: invalid hyperparameters");

    y_mean_ = y.mean();
    const double ss = (y.array() - y_mean_).square().sum() / static_cast<double>(n);
    y_std_ = std::sqrt(ss);
    if (y_std_ < 1e-300) y_std_ = 1.0; // constant outputs: keep g = 0
    g_ = (y.array() - y_mean_) / y_std_;

    const Eigen::MatrixXd C =
        detail::kernel_from_distances(detail::pairwise_distances(A_), theta_);
    llt_ = detail::factor_kernel(C, theta_.sigma_eps, &jitter_);
    alpha_ = llt_.solve(g_);
    lml_ = detail::lml_from_factor(llt_, g_);
  }

  int n_points() const { return static_cast<int>(A_.rows()); }
  int dim() const { return static_cast<int>(A_.cols()); }
  const Eigen::MatrixXd& inputs() const { return A_; }
  const GpHyperparameters& theta() const { return theta_; }
  double output_mean() const { return y_mean_; }
  double output_std() const { return y_std_; }
  double jitter() const { return jitter_; }

  /// Cached value for the training data at the stored hyperparameters
  /// (standardised outputs).
  double log_marginal_likelihood() const { return lml_; }

  /// Cross-covariance rows between test points and the training set.
  Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& At) const {
    Eigen::MatrixXd Ks(At.rows(), A_.rows());
    for (Eigen::Index i = 0; i < At.rows(); ++i)
      for (Eigen::Index j = 0; j < A_.rows(); ++j)
        Ks(i, j) = matern_cov((At.row(i) - A_.row(j)).norm(), theta_.nu, theta_.eta);
    return Ks;
  }

  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return llt_; }
  const Eigen::VectorXd& standardized_outputs() const { return g_; }
  const Eigen::VectorXd& weights() const { return alpha_; }

private:
  Eigen::MatrixXd A_;
  GpHyperparameters theta_;
  double y_mean_ = 0.0;
  double y_std_ = 1.0;
  Eigen::VectorXd g_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
  double lml_ = 0.0;
};

struct GpPrediction {
  Eigen::VectorXd mean; // de-standardised
  Eigen::MatrixXd cov;  // de-standardised (scaled by output_std^2)
};

/// Posterior mean and covariance at the rows of At.  Test points outside the
/// unit box are clamped in (with a warning); negative variances from
/// round-off are clipped at zero.
inline GpPrediction gp_predict(const GpModel& model, const Eigen::MatrixXd& At_in) {
  if (At_in.cols() != model.dim()) throw InputError("gp_predict: test point dimension mismatch");
  Eigen::MatrixXd At = At_in;
  bool clamped = false;
  for (Eigen::Index i = 0; i < At.rows(); ++i)
    for (Eigen::Index j = 0; j < At.cols(); ++j)
      if (At(i, j) < 0.0 || At(i, j) > 1.0) {
        At(i, j) = std::clamp(At(i, j), 0.0, 1.0);
        clamped = true;
      }
  if (clamped) log_warn("gp_predict: test points outside the unit box were clamped");

  const Eigen::MatrixXd Ks = model.cross_covariance(At);
  GpPrediction out;
  out.mean =
      (model.output_mean() + model.output_std() * (Ks * model.weights()).array()).matrix();

  Eigen::MatrixXd Ctt(At.rows(), At.rows());
  for (Eigen::Index i = 0; i < At.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      Ctt(i, j) = matern_cov((At.row(i) - At.row(j)).norm(), model.theta().nu,
                             model.theta().eta);
      Ctt(j, i) = Ctt(i, j);
    }
  out.cov = Ctt - Ks * model.factor().solve(Ks.transpose());
  for (Eigen::Index i = 0; i < out.cov.rows(); ++i)
    if (out.cov(i, i) < 0.0) {
      if (out.cov(i, i) < -1e-10)
        log_warn("gp_predict: variance %.3g clipped to zero", out.cov(i, i));
      out.cov(i, i) = 0.0;
    }
  out.cov *= model.output_std() * model.output_std();
  return out;
}

/// Single-point prediction, semantically gp_predict on one row but without
/// the matrix assembly; the acquisition search calls this in a tight loop.
inline void gp_predict_one(const GpModel& model, const Eigen::VectorXd& at_in, double& mean,
                           double& variance) {
  if (at_in.size() != model.dim()) throw InputError("gp_predict: test point dimension mismatch");
  Eigen::VectorXd at = at_in;
  bool clamped = false;
  for (Eigen::Index j = 0; j < at.size(); ++j)
    if (at(j) < 0.0 || at(j) > 1.0) {
      at(j) = std::clamp(at(j), 0.0, 1.0);
      clamped = true;
    }
  if (clamped) log_warn("gp_predict: test points outside the unit box were clamped");

  const Eigen::Index n = model.inputs().rows();
  Eigen::VectorXd k(n);
  for (Eigen::Index j = 0; j < n; ++j)
    k(j) = matern_cov((at.transpose() - model.inputs().row(j)).norm(), model.theta().nu,
                      model.theta().eta);
  mean = model.output_mean() + model.output_std() * k.dot(model.weights());
  const Eigen::VectorXd v =
      model.factor().matrixL().solve(k); // var = 1 - k' (C + s^2 I)^-1 k
  double var = 1.0 - v.squaredNorm();
  if (var < 0.0) {
    if (var < -1e-10) log_warn("gp_predict: variance %.3g clipped to zero", var);
    var = 0.0;
  }
  variance = var * model.output_std() * model.output_std();
}

/// Hyperparameter fit by log-marginal-likelihood maximisation: for each
/// admissible Matern order, 8 Sobol-seeded compass searches over
/// (log10 eta, log10 sigma_eps) in [-3, 3] x [-8, 0]; the best triple wins.
/// A single training point keeps the default hyperparameters.  Kernels that
/// stay indefinite after max jitter just skip that start.
inline GpModel gp_fit(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
  const Eigen::Index n = A.rows();
  if (n < 1) throw InputError("gp_fit: no training points");
  if (y.size() != n) throw InputError("gp_fit: output size does not match input rows");
  if (n == 1) return GpModel(A, y, GpHyperparameters{});

  const double y_mean = y.mean();
  double y_std = std::sqrt((y.array() - y_mean).square().sum() / static_cast<double>(n));
  if (y_std < 1e-300) y_std = 1.0;
  const Eigen::VectorXd g = (y.array() - y_mean) / y_std;
  const Eigen::MatrixXd R = detail::pairwise_distances(A);

  Eigen::Vector2d box_lo(-3.0, -8.0), box_hi(3.0, 0.0);
  CompassSettings cs;
  cs.initial_step = 0.25;
  cs.min_step = 2e-3;
  cs.max_evaluations = 60;

  GpHyperparameters best;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double nu : {0.5, 1.5, 2.5}) {
    const auto objective = [&](const Eigen::VectorXd& p) {
      GpHyperparameters th{nu, std::pow(10.0, p(0)), std::pow(10.0, p(1))};
      try {
        return detail::lml_from_factor(
            detail::factor_kernel(detail::kernel_from_distances(R, th), th.sigma_eps), g);
      } catch (const SolveError&) {
        return -std::numeric_limits<double>::infinity();
      }
    };
    SobolStream starts(2, 1);
    for (int s = 0; s < 8; ++s) {
      const Eigen::VectorXd u = starts.next();
      Eigen::Vector2d p0 = box_lo + u.cwiseProduct(box_hi - box_lo);
      const auto [p, lml] = compass_maximize(objective, p0, box_lo, box_hi, cs);
      if (lml > best_lml) {
        best_lml = lml;
        best = GpHyperparameters{nu, std::pow(10.0, p(0)), std::pow(10.0, p(1))};
      }
    }
  }
  if (!std::isfinite(best_lml))
    throw SolveError("gp_fit: every hyperparameter start produced an indefinite kernel");
  log_debug("gp_fit: n %d nu %.1f eta %.4g sigma_eps %.3g lml %.6g", static_cast<int>(n),
            best.nu, best.eta, best.sigma_eps, best_lml);
  return GpModel(A, y, best);
}

} // namespace buckopt
