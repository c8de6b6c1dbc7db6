#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "buckopt/errors.hpp"
#include "buckopt/linalg.hpp"
#include "buckopt/log.hpp"
#include "buckopt/model.hpp"

namespace buckopt {

struct NewtonSettings {
  double tol_rel = 1e-10; // residual tolerance relative to ||f|| * max(1, |lambda|)
  int max_iterations = 20;
};

struct PathPoint {
  Eigen::VectorXd x;
  double lambda = 0.0;
  int step = 0;
  int newton_iterations = 0;
  FactorizationReport stiffness; // factorisation report at the converged state
};

struct ContinuationSettings {
  NewtonSettings newton;
  double initial_dlambda = 0.0; // first (load-controlled) step; 0 = displacement-scaled
  int target_iterations = 5;    // aimed-for corrector iterations per step
  double growth_min = 0.5;      // step adaptation clamp
  double growth_max = 2.0;
  double max_step = std::numeric_limits<double>::infinity();
  int max_halvings = 8;  // per-step retries on failure
  int max_steps = 500;
  double switch_ratio = 0.2; // smallest-pivot ratio that flags the critical zone
};

namespace detail {

inline double structure_span(const TrussModel& model) {
  Eigen::Map<const Eigen::MatrixXd> nodes(model.reference_coords().data(), 3, model.n_nodes());
  const double span = (nodes.rowwise().maxCoeff() - nodes.rowwise().minCoeff()).norm();
  return span > 0.0 ? span : 1.0;
}

inline double newton_tolerance(const TrussModel& model, const Eigen::VectorXd& a, double lambda,
                               double tol_rel) {
  // The relative part measures convergence against the applied load.  The
  // floor covers the roundoff of evaluating internal forces, which scales
  // with the element stiffness E a independently of lambda; without it,
  // equilibria at small loads on stiff structures can never pass.
  const double force_noise = std::numeric_limits<double>::epsilon() * model.youngs_modulus() *
                             a.maxCoeff() * std::sqrt(static_cast<double>(model.n_elements()));
  return std::max(tol_rel * model.load_pattern().norm() * std::max(1.0, std::abs(lambda)),
                  4.0 * force_noise);
}

} // namespace detail

/// Equilibrium at fixed load factor by a full Newton iteration.  Returns
/// nullopt on non-convergence, a singular tangent, or degenerating geometry.
/// A start that already satisfies the tolerance converges in zero iterations.
inline std::optional<PathPoint> try_newton_equilibrium(
    const TrussModel& model, const Eigen::VectorXd& a, const Eigen::VectorXd& x_start,
    double lambda, const NewtonSettings& ns = {},
    std::vector<Eigen::VectorXd>* iterate_log = nullptr) {
  const double tol = detail::newton_tolerance(model, a, lambda, ns.tol_rel);
  Eigen::VectorXd x = x_start;
  try {
    for (int it = 0; it <= ns.max_iterations; ++it) {
      if (iterate_log) iterate_log->push_back(x);
      const Eigen::VectorXd r = residual(model, x, lambda, a);
      if (r.norm() <= tol) {
        PathPoint p;
        p.x = x;
        p.lambda = lambda;
        p.newton_iterations = it;
        p.stiffness = factorize_symmetric(tangent_stiffness(model, x, a)).report();
        return p;
      }
      if (it == ns.max_iterations) break;
      const SymmetricFactor K(tangent_stiffness(model, x, a));
      if (K.singular()) return std::nullopt;
      x -= K.solve(r);
    }
  } catch (const SingularGeometryError&) {
    return std::nullopt; // a diverging iterate collapsed an element
  }
  return std::nullopt;
}

inline PathPoint newton_equilibrium(const TrussModel& model, const Eigen::VectorXd& a,
                                    const Eigen::VectorXd& x_start, double lambda,
                                    const NewtonSettings& ns = {}) {
  if (auto p = try_newton_equilibrium(model, a, x_start, lambda, ns)) return *p;
  throw SolveError("newton_equilibrium: no convergence at lambda = " + std::to_string(lambda));
}

/// Equilibrium at a fixed load factor, reached by incremental loading from
/// the reference state.  Plain Newton can diverge for shallow structures
/// even at loads well below the first instability; halving the load step
/// until every substep converges recovers those cases.
inline PathPoint equilibrium_at(const TrussModel& model, const Eigen::VectorXd& a, double lambda,
                                const NewtonSettings& ns = {}) {
  for (int steps = 1; steps <= 64; steps *= 2) {
    Eigen::VectorXd x = model.free_reference_positions();
    std::optional<PathPoint> p;
    for (int i = 1; i <= steps; ++i) {
      p = try_newton_equilibrium(model, a, x, lambda * i / steps, ns);
      if (!p) break;
      x = p->x;
    }
    if (p) return *p;
  }
  throw SolveError("equilibrium_at: no convergence at lambda = " + std::to_string(lambda));
}

/// Continuation state: last accepted point, the last increment (used as the
/// secant predictor direction) and the current arc-length step.
struct TraceState {
  PathPoint point;
  Eigen::VectorXd dir_x; // last increment, not normalized
  double dir_lambda = 0.0;
  double ds = 0.0;
  bool has_direction = false;
};

/// Start a trace at lambda = 0.  The reference state is an exact equilibrium
/// by construction (all elements at their reference lengths).
inline TraceState start_trace(const TrussModel& model, const Eigen::VectorXd& a,
                              const ContinuationSettings& cs = {}) {
  TraceState st;
  st.point.x = model.free_reference_positions();
  st.point.lambda = 0.0;
  st.point.step = 0;
  st.point.stiffness = factorize_symmetric(tangent_stiffness(model, st.point.x, a)).report();
  (void)cs;
  return st;
}

namespace detail {

/// Load increment for the first, load-controlled step: sized so that the
/// linearised displacement is a small fraction of the structure span.
inline double auto_initial_dlambda(const TrussModel& model, const Eigen::VectorXd& a,
                                   const Eigen::VectorXd& x0) {
  const SymmetricFactor K0(tangent_stiffness(model, x0, a));
  if (K0.singular() || K0.inertia().n_negative > 0)
    throw SolveError("continuation: structure is not stable at lambda = 0");
  const Eigen::VectorXd u_t = K0.solve(model.load_pattern());
  const double umax = u_t.cwiseAbs().maxCoeff();
  if (!(umax > 0.0)) throw SolveError("continuation: load produces no displacement");
  return 1e-3 * structure_span(model) / umax;
}

/// One spherical arc-length corrector run at fixed step length.  The root of
/// the quadratic constraint is chosen to maximise the cosine with the
/// previous increment, which prevents doubling back along the path.
inline std::optional<PathPoint> attempt_arc_step(const TrussModel& model,
                                                 const Eigen::VectorXd& a, const TraceState& st,
                                                 double ds, const ContinuationSettings& cs) {
  const Eigen::VectorXd& f = model.load_pattern();
  const Eigen::VectorXd& x_p = st.point.x;
  const double lambda_p = st.point.lambda;

  const double dir_norm = std::sqrt(st.dir_x.squaredNorm() + st.dir_lambda * st.dir_lambda);
  Eigen::VectorXd x = x_p + (ds / dir_norm) * st.dir_x;
  double lambda = lambda_p + (ds / dir_norm) * st.dir_lambda;

  try {
    for (int it = 0; it <= cs.newton.max_iterations; ++it) {
      const Eigen::VectorXd r = residual(model, x, lambda, a);
      if (r.norm() <= newton_tolerance(model, a, lambda, cs.newton.tol_rel)) {
        PathPoint p;
        p.x = x;
        p.lambda = lambda;
        p.newton_iterations = it;
        p.stiffness = factorize_symmetric(tangent_stiffness(model, x, a)).report();
        return p;
      }
      if (it == cs.newton.max_iterations) break;

      const SymmetricFactor K(tangent_stiffness(model, x, a));
      if (K.singular()) return std::nullopt;
      const Eigen::VectorXd dx_r = -K.solve(r);
      const Eigen::VectorXd dx_f = K.solve(f);

      const Eigen::VectorXd u1 = (x - x_p) + dx_r;
      const double dl = lambda - lambda_p;
      const double qa = dx_f.squaredNorm() + 1.0;
      const double qb = 2.0 * (u1.dot(dx_f) + dl);
      const double qc = u1.squaredNorm() + dl * dl - ds * ds;
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc < 0.0) return std::nullopt;
      const double sq = std::sqrt(disc);
      const double r1 = (-qb + sq) / (2.0 * qa);
      const double r2 = (-qb - sq) / (2.0 * qa);

      auto alignment = [&](double dlam) {
        return st.dir_x.dot(u1 + dlam * dx_f) + st.dir_lambda * (dl + dlam);
      };
      const double dlam = alignment(r1) >= alignment(r2) ? r1 : r2;

      x = x_p + u1 + dlam * dx_f;
      lambda = lambda_p + dl + dlam;
    }
  } catch (const SingularGeometryError&) {
    return std::nullopt;
  }
  return std::nullopt;
}

} // namespace detail

/// Advance a trace by one step.  The first step is load-controlled; later
/// steps use the spherical arc-length constraint
///   ||x - x_prev||^2 + (lambda - lambda_prev)^2 = ds^2
/// with a secant predictor.  On failure the step is halved (up to
/// max_halvings); after success it is rescaled by sqrt(target/actual)
/// iterations, clamped to [growth_min, growth_max].
inline std::optional<TraceState> try_arc_length_step(const TrussModel& model,
                                                     const Eigen::VectorXd& a, const TraceState& st,
                                                     const ContinuationSettings& cs = {}) {
  if (!st.has_direction) {
    double dl = cs.initial_dlambda > 0.0 ? cs.initial_dlambda
                                         : detail::auto_initial_dlambda(model, a, st.point.x);
    for (int half = 0; half <= cs.max_halvings; ++half, dl *= 0.5) {
      const double lambda1 = st.point.lambda + dl;
      auto p = try_newton_equilibrium(model, a, st.point.x, lambda1, cs.newton);
      if (!p) continue;
      TraceState next;
      next.point = *p;
      next.point.step = st.point.step + 1;
      next.dir_x = p->x - st.point.x;
      next.dir_lambda = dl;
      next.ds = std::min(std::sqrt(next.dir_x.squaredNorm() + dl * dl), cs.max_step);
      next.has_direction = true;
      return next;
    }
    return std::nullopt;
  }

  double ds = st.ds;
  for (int half = 0; half <= cs.max_halvings; ++half, ds *= 0.5) {
    auto p = detail::attempt_arc_step(model, a, st, ds, cs);
    if (!p) continue;
    TraceState next;
    next.point = *p;
    next.point.step = st.point.step + 1;
    next.dir_x = p->x - st.point.x;
    next.dir_lambda = p->lambda - st.point.lambda;
    const double growth = std::clamp(
        std::sqrt(static_cast<double>(cs.target_iterations) /
                  std::max(1, p->newton_iterations)),
        cs.growth_min, cs.growth_max);
    next.ds = std::min(ds * growth, cs.max_step);
    next.has_direction = true;
    return next;
  }
  return std::nullopt;
}

inline TraceState arc_length_step(const TrussModel& model, const Eigen::VectorXd& a,
                                  const TraceState& st, const ContinuationSettings& cs = {}) {
  if (auto next = try_arc_length_step(model, a, st, cs)) return *next;
  throw SolveError("arc_length_step: no convergence near lambda = " +
                   std::to_string(st.point.lambda));
}

struct NearCriticalPoint {
  PathPoint point;
  Eigen::VectorXd phi_hint; // unit eigenvector of the smallest |eigenvalue| of K
  double pivot_ratio = 0.0; // smallest pivot relative to the lambda = 0 baseline
};

namespace detail {

/// Unit eigenvector of the eigenvalue of smallest magnitude, with a
/// deterministic sign (largest-magnitude entry positive).
inline Eigen::VectorXd smallest_eigenvector(const Eigen::MatrixXd& K) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  Eigen::Index best = 0;
  es.eigenvalues().cwiseAbs().minCoeff(&best);
  Eigen::VectorXd phi = es.eigenvectors().col(best);
  Eigen::Index imax = 0;
  phi.cwiseAbs().maxCoeff(&imax);
  if (phi(imax) < 0.0) phi = -phi;
  return phi;
}

} // namespace detail

/// Trace from lambda = 0 until the factorisation signals the critical zone:
/// the smallest pivot drops below switch_ratio times its lambda = 0 value, or
/// a negative pivot appears.  Returns the flagged point together with the
/// near-null eigenvector of K as a mode predictor.
inline NearCriticalPoint trace_until_near_critical(const TrussModel& model,
                                                   const Eigen::VectorXd& a,
                                                   const ContinuationSettings& cs = {}) {
  TraceState st = start_trace(model, a, cs);
  const double pivot0 = st.point.stiffness.min_pivot;
  if (!(pivot0 > 0.0) || st.point.stiffness.inertia.n_negative > 0 ||
      st.point.stiffness.inertia.n_zero > 0)
    throw SolveError("trace_until_near_critical: structure is not stable at lambda = 0");

  // If even the first step overshoots the critical zone, retry it smaller so
  // the returned point sits close to the stability boundary, not far past it.
  int first_step_retries = 0;
  double prev_dx = 0.0;
  const double span = detail::structure_span(model);
  ContinuationSettings settings = cs;
  for (int step = 1; step <= settings.max_steps; ++step) {
    // A displacement increment far beyond the running step scale means the
    // corrector left the current branch across a fold and converged onto
    // another equilibrium inside its arc sphere (for stiff structures the
    // sphere is load-dominated and reaches far in x).  Reject such steps and
    // shrink: the far branch sits at a fixed distance, so halving ds takes it
    // out of reach while genuine progress stays available.
    std::optional<TraceState> next;
    for (int rejections = 0;; ++rejections) {
      next = try_arc_length_step(model, a, st, settings);
      if (!next)
        throw SolveError("trace_until_near_critical: step failed at lambda = " +
                         std::to_string(st.point.lambda));
      const double dx = (next->point.x - st.point.x).norm();
      if (!(st.has_direction && prev_dx > 0.0 && dx > 3.0 * prev_dx + 0.01 * span)) break;
      if (rejections == settings.max_halvings)
        throw SolveError("trace_until_near_critical: cannot step past lambda = " +
                         std::to_string(st.point.lambda) + " without leaving the branch");
      log_debug("trace: rejected branch jump at lambda = %.6g (|dx| %.3g after %.3g)",
                st.point.lambda, dx, prev_dx);
      st.ds *= 0.5;
    }
    const FactorizationReport& rep = next->point.stiffness;
    const double ratio = rep.min_pivot / pivot0;
    if (ratio < settings.switch_ratio || rep.inertia.n_negative > 0) {
      if (!st.has_direction && first_step_retries < 4) {
        ++first_step_retries;
        settings.initial_dlambda =
            (settings.initial_dlambda > 0.0
                 ? settings.initial_dlambda
                 : detail::auto_initial_dlambda(model, a, st.point.x)) /
            8.0;
        --step;
        continue;
      }
      NearCriticalPoint out;
      out.point = next->point;
      out.phi_hint = detail::smallest_eigenvector(tangent_stiffness(model, next->point.x, a));
      out.pivot_ratio = ratio;
      log_debug("trace: critical zone at lambda = %.6g (pivot ratio %.3g, %d neg)",
                out.point.lambda, ratio, rep.inertia.n_negative);
      return out;
    }
    // Inside the decay zone approach the fold at constant step; growing the
    // arc length here is what makes the corrector jump branches.
    if (ratio < 0.7 && st.ds > 0.0) next->ds = std::min(next->ds, st.ds);
    log_debug("trace: step %d lambda %.6g ratio %.3g |dx| %.3g ds %.3g", next->point.step,
              next->point.lambda, ratio, (next->point.x - st.point.x).norm(), next->ds);
    prev_dx = (next->point.x - st.point.x).norm();
    st = *next;
  }
  throw SolveError("trace_until_near_critical: no critical zone within max_steps");
}

} // namespace buckopt
