#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "buckopt/continuation.hpp"
#include "buckopt/errors.hpp"
#include "buckopt/linalg.hpp"
#include "buckopt/log.hpp"
#include "buckopt/model.hpp"

namespace buckopt {

/// Rough load level at which the structure first goes unstable, found by
/// doubling the load until equilibrium is lost and then bisecting.  Intended
/// for scaling decisions (reference loads, trace budgets), not as a critical
/// load: the answer is only bisection-accurate and the scan can misclassify
/// points in pathological snap-back cases.
inline double first_unstable_estimate(const TrussModel& model, const Eigen::VectorXd& a,
                                      const NewtonSettings& ns = {}) {
  const Eigen::VectorXd x0 = model.free_reference_positions();
  const double span = detail::structure_span(model);

  Eigen::VectorXd x_warm = x0;
  // A converged state counts as stable only if it kept positive pivots and
  // did not jump far from the previous one (a snap to another branch).
  auto stable_at = [&](double lambda) {
    const auto p = try_newton_equilibrium(model, a, x_warm, lambda, ns);
    if (!p || p->stiffness.inertia.n_negative > 0 || p->stiffness.inertia.n_zero > 0)
      return false;
    const double moved = (p->x - x0).norm();
    const double warm_dist = (x_warm - x0).norm();
    if (moved > 3.0 * warm_dist + 0.01 * span) return false;
    x_warm = p->x;
    return true;
  };

  double lo = 0.0;
  double hi = detail::auto_initial_dlambda(model, a, x0);
  int doublings = 0;
  while (stable_at(hi)) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 60)
      throw SolveError("first_unstable_estimate: no instability up to lambda = " +
                       std::to_string(lo));
  }
  for (int i = 0; i < 10; ++i) {
    const double mid = 0.5 * (lo + hi);
    (stable_at(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Imperfection basis: buckling mode shapes as full-length nodal vectors
/// (zero at supported dofs, unit Euclidean norm) with their load estimates.
struct ModeBasis {
  Eigen::MatrixXd Phi;     // 3 n_nodes x n_modes
  Eigen::VectorXd lambdas; // ascending linearised buckling loads
  double lambda_ref = 0.0; // load level used for the geometric stiffness
};

namespace detail {

inline Eigen::VectorXd scatter_free(const TrussModel& model, const Eigen::VectorXd& v_free) {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(3 * model.n_nodes());
  const std::vector<int>& map = model.free_dofs();
  for (int i = 0; i < model.n_free_dofs(); ++i) full(map[i]) = v_free(i);
  return full;
}

inline void fix_mode_sign(Eigen::VectorXd& phi) {
  Eigen::Index imax = 0;
  phi.cwiseAbs().maxCoeff(&imax);
  if (phi(imax) < 0.0) phi = -phi;
}

} // namespace detail

/// Buckling loads and mode shapes from the linearised problem
///   (K_E + lambda K_G) phi = 0,
/// with the geometric stiffness K_G extracted by a finite load step:
/// equilibrium at lambda_ref gives K_G = (K(x_ref) - K_E) / lambda_ref.
/// Negative generalized eigenvalues nu of K_G phi = nu K_E phi map to
/// buckling estimates lambda = -1/nu, returned ascending.
inline ModeBasis linear_buckling_modes(const TrussModel& model, const Eigen::VectorXd& a,
                                       int n_modes,
                                       std::optional<double> lambda_ref_opt = std::nullopt) {
  if (n_modes < 1) throw InputError("linear_buckling_modes: need n_modes >= 1");
  if (n_modes > model.n_free_dofs())
    throw InputError("linear_buckling_modes: more modes requested than free dofs");

  const double lambda_ref =
      lambda_ref_opt ? *lambda_ref_opt : 0.1 * first_unstable_estimate(model, a);
  if (!(lambda_ref > 0.0)) throw InputError("linear_buckling_modes: lambda_ref must be positive");

  const Eigen::VectorXd x0 = model.free_reference_positions();
  const Eigen::MatrixXd K_E = tangent_stiffness(model, x0, a);
  {
    const SymmetricFactor f0(K_E);
    if (f0.singular() || f0.inertia().n_negative > 0)
      throw SolveError("linear_buckling_modes: structure is not stable at lambda = 0");
  }
  const PathPoint ref = equilibrium_at(model, a, lambda_ref);
  const Eigen::MatrixXd K_G = (tangent_stiffness(model, ref.x, a) - K_E) / lambda_ref;

  const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(K_G, K_E);
  if (ges.info() != Eigen::Success)
    throw SolveError("linear_buckling_modes: generalized eigensolver failed");

  int n_negative = 0;
  while (n_negative < ges.eigenvalues().size() && ges.eigenvalues()(n_negative) < 0.0)
    ++n_negative;
  if (n_negative < n_modes)
    throw SolveError("linear_buckling_modes: only " + std::to_string(n_negative) +
                     " destabilising modes available, " + std::to_string(n_modes) + " requested");

  ModeBasis basis;
  basis.lambda_ref = lambda_ref;
  basis.Phi.resize(3 * model.n_nodes(), n_modes);
  basis.lambdas.resize(n_modes);
  const double ke_norm = K_E.norm();
  for (int k = 0; k < n_modes; ++k) {
    const double nu = ges.eigenvalues()(k); // most negative first: smallest load
    basis.lambdas(k) = -1.0 / nu;
    Eigen::VectorXd phi = ges.eigenvectors().col(k);
    phi /= phi.norm();
    const double res = (K_E * phi + basis.lambdas(k) * (K_G * phi)).norm();
    if (res > 1e-8 * ke_norm)
      throw SolveError("linear_buckling_modes: mode " + std::to_string(k) +
                       " residual too large");
    Eigen::VectorXd full = detail::scatter_free(model, phi);
    detail::fix_mode_sign(full);
    basis.Phi.col(k) = full;
  }
  return basis;
}

/// Directional derivative of the tangent stiffness applied to a fixed vector:
///   g = (d/ds) [K(x + s du) phi] at s = 0.
/// Per element, with psi = phi_b - phi_a and delta = du_b - du_a, the end
/// force (K phi)_b = c1 (n . psi) n + c2 psi differentiates through l, n, c1
/// and c2; node a receives the negative.  Symmetric in phi and du (third
/// derivative of the strain energy).
inline Eigen::VectorXd directional_derivative_Kphi(const TrussModel& model,
                                                   const Eigen::VectorXd& x_free,
                                                   const Eigen::VectorXd& a,
                                                   const Eigen::VectorXd& phi,
                                                   const Eigen::VectorXd& du) {
  detail::check_state(model, x_free);
  detail::check_design(model, a);
  if (phi.size() != model.n_free_dofs() || du.size() != model.n_free_dofs())
    throw InputError("directional_derivative_Kphi: free-dof vector size mismatch");

  auto gather3 = [&](const Eigen::VectorXd& v, int node) {
    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (int d = 0; d < 3; ++d) {
      const int idx = model.free_index(node, d);
      if (idx >= 0) out(d) = v(idx);
    }
    return out;
  };

  Eigen::VectorXd g = Eigen::VectorXd::Zero(model.n_free_dofs());
  for (int e = 0; e < model.n_elements(); ++e) {
    const ElementState st = element_kinematics(model, x_free, e, a);
    const ElementDef& el = model.elements()[e];
    const Eigen::Vector3d psi = gather3(phi, el.node_b) - gather3(phi, el.node_a);
    const Eigen::Vector3d delta = gather3(du, el.node_b) - gather3(du, el.node_a);

    const double EV = model.youngs_modulus() * st.volume;
    const double l = st.l;
    const double c1 = EV / (l * l) - 2.0 * st.axial_force / l;
    const double c2 = st.axial_force / l;
    const double n_psi = st.n.dot(psi);
    const double n_delta = st.n.dot(delta);

    const double dc1 = -(4.0 / l) * (EV / (l * l) - st.axial_force / l) * n_delta;
    const double dc2 = (c1 / l) * n_delta;
    const Eigen::Vector3d g_b = dc1 * n_psi * st.n +
                                c1 * ((psi.dot(delta) - n_psi * n_delta) / l) * st.n +
                                c1 * n_psi / l * (delta - n_delta * st.n) + dc2 * psi;

    for (int d = 0; d < 3; ++d) {
      const int ib = model.free_index(el.node_b, d);
      if (ib >= 0) g(ib) += g_b(d);
      const int ia = model.free_index(el.node_a, d);
      if (ia >= 0) g(ia) -= g_b(d);
    }
  }
  return g;
}

/// A converged critical point of the equilibrium path.
struct StabilityPoint {
  Eigen::VectorXd x;   // free positions at the critical state
  double lambda = 0.0; // critical load factor
  Eigen::VectorXd phi; // unit null vector of the tangent stiffness
  enum class Kind { limit, bifurcation } kind = Kind::limit;
  int iterations = 0;
};

struct ExtendedSolveSettings {
  double tol = 1e-9;
  int max_iterations = 30;
};

/// Newton iteration on the extended system
///   t(x) - lambda f = 0,  K(x) phi = 0,  ||phi|| - 1 = 0,
/// solved with a single factorisation of K per iteration via block
/// elimination.  Each convergence test is relative to its own scale; the
/// state is accepted before the first correction if it already passes.
inline StabilityPoint extended_system_solve(const TrussModel& model, const Eigen::VectorXd& a,
                                            const Eigen::VectorXd& x_start,
                                            const Eigen::VectorXd& phi_start,
                                            double lambda_start,
                                            const ExtendedSolveSettings& es = {}) {
  const Eigen::VectorXd& f = model.load_pattern();
  const double f_norm = f.norm();
  if (phi_start.size() != model.n_free_dofs())
    throw InputError("extended_system_solve: phi size mismatch");
  if (!(phi_start.norm() > 0.0))
    throw InputError("extended_system_solve: zero mode predictor");

  Eigen::VectorXd x = x_start;
  Eigen::VectorXd phi = phi_start / phi_start.norm();
  double lambda = lambda_start;
  bool lambda_perturbed = false;

  // Scale for the mode equation.  K itself degenerates at the solution (for
  // small systems its norm collapses entirely), so the reference stiffness
  // provides the load-independent magnitude to measure K phi against.
  const double k_scale =
      tangent_stiffness(model, model.free_reference_positions(), a).norm();

  for (int it = 0; it <= es.max_iterations; ++it) {
    const Eigen::MatrixXd K = tangent_stiffness(model, x, a);
    const Eigen::VectorXd r1 = internal_force(model, x, a) - lambda * f;
    Eigen::VectorXd r2 = K * phi;
    double r3 = phi.norm() - 1.0;

    const bool r1_ok = r1.norm() <= es.tol * f_norm * std::max(1.0, std::abs(lambda));
    bool mode_ok = r2.norm() <= es.tol * k_scale * phi.norm() && std::abs(r3) <= es.tol;
    // Once (x, lambda) sit on a fold, K is singular to machine precision and
    // the partitioned solves only amplify rounding noise into phi.  The mode
    // is then read off a symmetric eigensolve instead; it must pass the same
    // ||K phi|| test to be accepted.
    if (r1_ok && !mode_ok) {
      const Eigen::VectorXd v = detail::smallest_eigenvector(K);
      if ((K * v).norm() <= es.tol * k_scale) {
        phi = v;
        r2 = K * phi;
        r3 = 0.0;
        mode_ok = true;
      }
    }
    const bool done = r1_ok && mode_ok;
    if (done) {
      StabilityPoint out;
      out.x = x;
      out.phi = phi / phi.norm();
      if (out.phi.dot(phi_start) < 0.0) out.phi = -out.phi;
      out.lambda = lambda;
      out.iterations = it;
      out.kind = std::abs(out.phi.dot(f)) > 1e-6 * f_norm ? StabilityPoint::Kind::limit
                                                          : StabilityPoint::Kind::bifurcation;
      log_debug("extended solve: lambda = %.9g in %d iterations (%s)", lambda, it,
                out.kind == StabilityPoint::Kind::limit ? "limit" : "bifurcation");
      return out;
    }
    if (it == es.max_iterations) break;

    // Iterates approach a state where K is singular by construction, and the
    // block elimination relies on the near-null amplification cancelling in
    // the Newton update, so tiny pivots must pass.  Refuse only an exact zero
    // pivot; for that case nudge lambda and shift the factorisation, once.
    SymmetricFactor F(K, 0.0);
    if (F.singular()) {
      if (lambda_perturbed)
        throw SolveError("extended_system_solve: singular stiffness at lambda = " +
                         std::to_string(lambda));
      lambda_perturbed = true;
      lambda += 1e-8 * std::max(1.0, std::abs(lambda));
      Eigen::MatrixXd Kj = K;
      Kj.diagonal().array() += 1e-12 * K.cwiseAbs().maxCoeff();
      F = SymmetricFactor(Kj, 0.0);
      if (F.singular())
        throw SolveError("extended_system_solve: singular stiffness at lambda = " +
                         std::to_string(lambda));
    }

    const Eigen::VectorXd u_f = F.solve(f);
    const Eigen::VectorXd u_r = F.solve(r1);
    const Eigen::VectorXd h_f = directional_derivative_Kphi(model, x, a, phi, u_f);
    const Eigen::VectorXd h_r = directional_derivative_Kphi(model, x, a, phi, u_r);
    const Eigen::VectorXd dphi1 = -F.solve(h_f);
    const Eigen::VectorXd dphi2 = -F.solve(r2 - h_r);

    const Eigen::VectorXd grad_s = phi / phi.norm();
    const double denom = grad_s.dot(dphi1);
    if (denom == 0.0)
      throw SolveError("extended_system_solve: degenerate normalisation update");
    const double dlambda = -(grad_s.dot(dphi2) + r3) / denom;

    x += dlambda * u_f - u_r;
    phi += dphi2 + dlambda * dphi1;
    lambda += dlambda;
    if (!(phi.norm() > 0.0))
      throw SolveError("extended_system_solve: mode vector collapsed");
  }
  throw SolveError("extended_system_solve: no convergence in " +
                   std::to_string(es.max_iterations) + " iterations");
}

/// First critical point on the path from lambda = 0: trace until the
/// factorisation flags the critical zone, then polish with the extended
/// system using the near-null eigenvector as the mode predictor.
inline StabilityPoint critical_load(const TrussModel& model, const Eigen::VectorXd& a,
                                    const ContinuationSettings& cs = {},
                                    const ExtendedSolveSettings& es = {}) {
  const NearCriticalPoint nc = trace_until_near_critical(model, a, cs);
  return extended_system_solve(model, a, nc.point.x, nc.phi_hint, nc.point.lambda, es);
}

} // namespace buckopt
