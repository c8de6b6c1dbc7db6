#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "buckopt/continuation.hpp"
#include "buckopt/errors.hpp"
#include "buckopt/gaussian.hpp"
#include "buckopt/log.hpp"
#include "buckopt/model.hpp"
#include "buckopt/sobol.hpp"
#include "buckopt/stability.hpp"

namespace buckopt {

struct SamplingSettings {
  ContinuationSettings continuation;
  ExtendedSolveSettings extended;
  double max_flagged_fraction = 0.01; // tolerated fraction of failed samples
};

/// One realisation of the imperfection amplitudes and its buckling load.
struct BucklingSample {
  Eigen::VectorXd beta;
  double lambda_c = std::numeric_limits<double>::quiet_NaN();
  bool flagged = false;       // no solution even after the cold restart
  bool cold_restart = false;  // warm start failed, full trace succeeded
  std::uint64_t sobol_index = 0;
};

struct BucklingStatistics {
  double lambda_c0 = 0.0; // critical load of the perfect geometry
  double mean = 0.0;
  double std_dev = 0.0;
  int n_flagged = 0;
  std::vector<BucklingSample> samples; // in caller (stream) order
};

/// Mean and sample standard deviation over the unflagged entries.
inline void empirical_moments(const std::vector<BucklingSample>& samples, double& mean,
                              double& std_dev) {
  double sum = 0.0;
  int n = 0;
  for (const BucklingSample& s : samples)
    if (!s.flagged) {
      sum += s.lambda_c;
      ++n;
    }
  if (n == 0) throw SolveError("empirical_moments: no valid samples");
  mean = sum / n;
  double ss = 0.0;
  for (const BucklingSample& s : samples)
    if (!s.flagged) ss += (s.lambda_c - mean) * (s.lambda_c - mean);
  std_dev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
}

/// Buckling loads for a given matrix of imperfection amplitudes (one row per
/// sample, one column per mode).  Samples are solved in two chains that walk
/// outward from the perfect geometry, ordered by imperfection size, so each
/// one starts from the previous critical point.  That predictor fails only
/// across sharp mode switches; a full cold trace is retried once and the
/// sample is flagged if that fails too.  The returned samples are in input
/// row order regardless of the internal chain order.
inline BucklingStatistics buckling_statistics_from_betas(const TrussModel& model,
                                                         const Eigen::VectorXd& a,
                                                         const ModeBasis& basis,
                                                         const Eigen::MatrixXd& betas,
                                                         const SamplingSettings& ss = {}) {
  const Eigen::Index n_samples = betas.rows();
  if (betas.cols() != basis.Phi.cols())
    throw InputError("buckling_statistics_from_betas: beta/mode count mismatch");
  if (n_samples < 1) throw InputError("buckling_statistics_from_betas: no samples");

  BucklingStatistics stats;
  stats.samples.resize(n_samples);

  // Critical point of the perfect structure: chain seed and reference value.
  const StabilityPoint sp0 = critical_load(model, a, ss.continuation, ss.extended);
  stats.lambda_c0 = sp0.lambda;
  const Eigen::VectorXd& X0 = model.reference_coords();

  std::vector<int> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    const bool plus_i = betas(i, 0) >= 0.0, plus_j = betas(j, 0) >= 0.0;
    if (plus_i != plus_j) return plus_i; // plus branch first, then minus
    return betas.row(i).norm() < betas.row(j).norm();
  });

  struct ChainState {
    Eigen::VectorXd X_full;
    Eigen::VectorXd x;
    Eigen::VectorXd phi;
    double lambda;
  };
  const ChainState seed{X0, sp0.x, sp0.phi, sp0.lambda};
  ChainState chain = seed;
  bool minus_branch = false;

  for (int rank = 0; rank < n_samples; ++rank) {
    const int row = order[rank];
    if (!minus_branch && betas(row, 0) < 0.0) {
      chain = seed; // restart at the origin for the second branch
      minus_branch = true;
    }

    BucklingSample& sample = stats.samples[row];
    sample.beta = betas.row(row).transpose();

    try {
      const Eigen::VectorXd X_imp = apply_imperfection(X0, basis.Phi, sample.beta);
      const TrussModel imperfect = model.with_reference_geometry(X_imp);
      StabilityPoint sp;
      try {
        const Eigen::VectorXd x_pred = chain.x + imperfect.gather_free(X_imp - chain.X_full);
        sp = extended_system_solve(imperfect, a, x_pred, chain.phi, chain.lambda, ss.extended);
      } catch (const SolveError&) {
        sample.cold_restart = true;
        sp = critical_load(imperfect, a, ss.continuation, ss.extended);
      }
      sample.lambda_c = sp.lambda;
      chain = ChainState{X_imp, sp.x, sp.phi, sp.lambda};
    } catch (const SolveError& err) {
      sample.flagged = true;
      ++stats.n_flagged;
      log_warn("sample %d failed: %s", row, err.what());
    }
  }

  if (stats.n_flagged > ss.max_flagged_fraction * static_cast<double>(n_samples))
    throw SolveError("buckling_statistics: " + std::to_string(stats.n_flagged) + " of " +
                     std::to_string(n_samples) + " samples failed");
  empirical_moments(stats.samples, stats.mean, stats.std_dev);
  return stats;
}

/// Low-discrepancy buckling statistics: 2m Sobol points in the unit cube map
/// through the normal quantile to imperfection amplitudes beta = sigma z.
/// `skip` offsets the start of the (zero-skipping) sequence, so disjoint
/// skips give disjoint sample sets.
inline BucklingStatistics buckling_statistics(const TrussModel& model, const Eigen::VectorXd& a,
                                              const ModeBasis& basis,
                                              const Eigen::VectorXd& sigma, int m,
                                              std::uint64_t skip = 0,
                                              const SamplingSettings& ss = {}) {
  const int n_modes = static_cast<int>(basis.Phi.cols());
  if (sigma.size() != n_modes)
    throw InputError("buckling_statistics: sigma size must match the mode count");
  if (!(sigma.minCoeff() >= 0.0)) throw InputError("buckling_statistics: sigma must be >= 0");
  if (m < 1) throw InputError("buckling_statistics: need m >= 1");

  const int n_samples = 2 * m;
  SobolStream stream(n_modes, 1 + skip);
  Eigen::MatrixXd betas(n_samples, n_modes);
  std::vector<std::uint64_t> indices(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    indices[i] = stream.index();
    const Eigen::VectorXd u = stream.next();
    for (int j = 0; j < n_modes; ++j) betas(i, j) = sigma(j) * normal_quantile(u(j));
  }

  BucklingStatistics stats = buckling_statistics_from_betas(model, a, basis, betas, ss);
  for (int i = 0; i < n_samples; ++i) stats.samples[i].sobol_index = indices[i];
  return stats;
}

inline BucklingStatistics buckling_statistics(const TrussModel& model, const Eigen::VectorXd& a,
                                              const ModeBasis& basis, double sigma, int m,
                                              std::uint64_t skip = 0,
                                              const SamplingSettings& ss = {}) {
  return buckling_statistics(model, a, basis,
                             Eigen::VectorXd::Constant(basis.Phi.cols(), sigma), m, skip, ss);
}

} // namespace buckopt
