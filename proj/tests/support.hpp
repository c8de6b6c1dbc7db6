#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "buckopt/model.hpp"

namespace testsupport {

/// Central-difference gradient of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian of a vector function.
inline Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double h) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

/// Bar from the origin along x with unit reference length, node 1 free in all
/// three directions.  E = 1, single group with a_init = 1.
inline buckopt::TrussModel unit_bar(double a_init = 1.0) {
  Eigen::VectorXd X(6);
  X << 0, 0, 0, 1, 0, 0;
  return buckopt::TrussModel(
      X, {{0, 1, 0}},
      {{0, 0}, {0, 1}, {0, 2}},
      {{1, 0, 1.0}},
      1.0, std::nullopt,
      {{a_init, 0.5 * a_init, 2.0 * a_init}});
}

/// Shallow two-bar arch: nodes (-w,0,0) and (w,0,0) pinned, apex (0,0,h)
/// restrained laterally, loaded downward.  One free dof.
inline buckopt::TrussModel two_bar_arch(double w, double h, double E, double area) {
  Eigen::VectorXd X(9);
  X << -w, 0, 0, w, 0, 0, 0, 0, h;
  return buckopt::TrussModel(
      X, {{0, 2, 0}, {1, 2, 0}},
      {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}, {2, 0}, {2, 1}},
      {{2, 2, -1.0}},
      E, std::nullopt,
      {{area, 0.5 * area, 1.5 * area}});
}

/// Bar along x loaded axially in tension, node 1 free only in x.
inline buckopt::TrussModel axial_bar(double E = 100.0, double area = 1.0) {
  Eigen::VectorXd X(6);
  X << 0, 0, 0, 1, 0, 0;
  return buckopt::TrussModel(
      X, {{0, 1, 0}},
      {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}},
      {{1, 0, 1.0}},
      E, std::nullopt,
      {{area, 0.5 * area, 2.0 * area}});
}

/// Load factor of the two-bar arch as a function of downward apex deflection,
/// from one-dof statics: lambda = -2 T(l) (h - u) / l.
inline double arch_lambda_of_deflection(double w, double h, double E, double area, double u) {
  const double L = std::hypot(w, h);
  const double z = h - u;
  const double l = std::hypot(w, z);
  const double T = (area * L * E / l) * std::log(l / L);
  return -2.0 * T * z / l;
}

/// Maximum of a unimodal function on [lo, hi] by golden-section search.
inline double golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                 double tol = 1e-12) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c), fd = f(d);
  while (hi - lo > tol * (std::abs(lo) + std::abs(hi) + 1.0)) {
    if (fc > fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  return 0.5 * (lo + hi);
}

/// Same arch with the apex free in x and z (the out-of-plane direction is
/// supported, otherwise the coplanar bars leave it a mechanism).  Two groups.
inline buckopt::TrussModel two_bar_arch_free_apex(double w, double h, double E, double area) {
  Eigen::VectorXd X(9);
  X << -w, 0, 0, w, 0, 0, 0, 0, h;
  return buckopt::TrussModel(
      X, {{0, 2, 0}, {1, 2, 1}},
      {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}, {2, 1}},
      {{2, 2, -1.0}},
      E, std::nullopt,
      {{area, 0.5 * area, 1.5 * area}, {area, 0.5 * area, 1.5 * area}});
}

/// Random admissible state near the reference: positions perturbed by a
/// fraction of the structure size, areas uniform within group bounds.
struct RandomState {
  Eigen::VectorXd x;
  Eigen::VectorXd a;
};

inline RandomState random_state(const buckopt::TrussModel& model, std::mt19937& rng,
                                double relative_amplitude = 0.01) {
  const Eigen::VectorXd X0 = model.reference_coords();
  Eigen::Map<const Eigen::MatrixXd> nodes(X0.data(), 3, model.n_nodes());
  const double span = (nodes.rowwise().maxCoeff() - nodes.rowwise().minCoeff()).norm();
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  RandomState s;
  s.x = model.free_reference_positions();
  for (Eigen::Index i = 0; i < s.x.size(); ++i)
    s.x(i) += relative_amplitude * span * u(rng);
  s.a.resize(model.n_groups());
  for (int g = 0; g < model.n_groups(); ++g) {
    const buckopt::GroupDef& gd = model.groups()[g];
    s.a(g) = gd.a_min + (gd.a_max - gd.a_min) * 0.5 * (u(rng) + 1.0);
  }
  return s;
}

} // namespace testsupport
