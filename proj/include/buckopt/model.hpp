#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "buckopt/errors.hpp"

namespace buckopt {

struct ElementDef {
  int node_a = 0;
  int node_b = 0;
  int group = 0;
};

struct GroupDef {
  double a_init = 0.0;
  double a_min = 0.0;
  double a_max = 0.0;
};

struct Support {
  int node = 0;
  int dof = 0; // 0,1,2 -> x,y,z
};

struct PointLoad {
  int node = 0;
  int dof = 0;
  double value = 0.0;
};

/// Pin-jointed truss in 3D.  Nodes carry three translational dofs; supports
/// eliminate dofs from the system (hard elimination, no penalty terms).
/// Element reference lengths derive from the stored reference coordinates,
/// which already include any geometric imperfection.
class TrussModel {
public:
  TrussModel(Eigen::VectorXd node_coords, std::vector<ElementDef> elements,
             std::vector<Support> supports, std::vector<PointLoad> loads,
             double youngs_modulus, std::optional<double> poisson_ratio,
             std::vector<GroupDef> groups)
      : X0_(std::move(node_coords)),
        elements_(std::move(elements)),
        supports_(std::move(supports)),
        loads_(std::move(loads)),
        E_(youngs_modulus),
        nu_(poisson_ratio),
        groups_(std::move(groups)) {
    validate_and_build();
  }

  int n_nodes() const { return static_cast<int>(X0_.size() / 3); }
  int n_elements() const { return static_cast<int>(elements_.size()); }
  int n_groups() const { return static_cast<int>(groups_.size()); }
  int n_free_dofs() const { return static_cast<int>(free_dofs_.size()); }

  double youngs_modulus() const { return E_; }
  std::optional<double> poisson_ratio() const { return nu_; }

  const Eigen::VectorXd& reference_coords() const { return X0_; }
  const std::vector<ElementDef>& elements() const { return elements_; }
  const std::vector<Support>& supports() const { return supports_; }
  const std::vector<PointLoad>& loads() const { return loads_; }
  const std::vector<GroupDef>& groups() const { return groups_; }

  double reference_length(int e) const { return L0_(e); }
  /// Total reference length of all members in a group.
  double group_length(int g) const { return group_len_(g); }

  /// Load pattern on the free dofs; scaled by the load factor lambda.
  const Eigen::VectorXd& load_pattern() const { return f_; }

  Eigen::VectorXd design_areas() const {
    Eigen::VectorXd a(n_groups());
    for (int g = 0; g < n_groups(); ++g) a(g) = groups_[g].a_init;
    return a;
  }

  /// Free index of (node, dof), or -1 when the dof is supported.
  int free_index(int node, int dof) const { return dof_map_[3 * node + dof]; }
  const std::vector<int>& free_dofs() const { return free_dofs_; }

  /// Reference positions gathered on the free dofs (the lambda = 0 state).
  Eigen::VectorXd free_reference_positions() const { return gather_free(X0_); }

  Eigen::VectorXd gather_free(const Eigen::VectorXd& v_full) const {
    if (v_full.size() != X0_.size())
      throw InputError("gather_free: expected a full-length nodal vector");
    Eigen::VectorXd v(n_free_dofs());
    for (int i = 0; i < n_free_dofs(); ++i) v(i) = v_full(free_dofs_[i]);
    return v;
  }

  /// Scatter free positions into a full coordinate vector; supported dofs
  /// keep their reference values.
  Eigen::VectorXd full_positions(const Eigen::VectorXd& x_free) const {
    if (x_free.size() != n_free_dofs())
      throw InputError("full_positions: expected a free-dof vector");
    Eigen::VectorXd x = X0_;
    for (int i = 0; i < n_free_dofs(); ++i) x(free_dofs_[i]) = x_free(i);
    return x;
  }

  /// Copy of the model with new reference coordinates (imperfect geometry).
  /// Connectivity, supports, loads and groups are unchanged; reference
  /// lengths are recomputed.  Group lengths change with the geometry, which
  /// only matters for mechanics; volume budgets refer to the as-designed
  /// model the copy was made from.
  TrussModel with_reference_geometry(const Eigen::VectorXd& X_full) const {
    if (X_full.size() != X0_.size())
      throw InputError("with_reference_geometry: coordinate size mismatch");
    TrussModel copy = *this;
    copy.X0_ = X_full;
    copy.rebuild_lengths(/*from_imperfection=*/true);
    return copy;
  }

private:
  void validate_and_build() {
    if (X0_.size() == 0 || X0_.size() % 3 != 0)
      throw InputError("model: node coordinates must come in xyz triples");
    const int np = n_nodes();
    if (np < 2) throw InputError("model: need at least two nodes");
    if (!X0_.allFinite()) throw InputError("model: non-finite node coordinate");
    if (!(E_ > 0.0) || !std::isfinite(E_)) throw InputError("model: E must be positive");
    if (nu_ && !std::isfinite(*nu_)) throw InputError("model: nu must be finite");

    if (groups_.empty()) throw InputError("model: at least one group required");
    for (size_t g = 0; g < groups_.size(); ++g) {
      const GroupDef& gd = groups_[g];
      if (!(gd.a_min > 0.0) || !(gd.a_min <= gd.a_init) || !(gd.a_init <= gd.a_max))
        throw InputError("model: group " + std::to_string(g) +
                         " must satisfy 0 < a_min <= a_init <= a_max");
    }

    if (elements_.empty()) throw InputError("model: at least one element required");
    std::vector<bool> group_used(groups_.size(), false);
    for (size_t e = 0; e < elements_.size(); ++e) {
      const ElementDef& el = elements_[e];
      if (el.node_a < 0 || el.node_a >= np || el.node_b < 0 || el.node_b >= np)
        throw InputError("model: element " + std::to_string(e) + " references a missing node");
      if (el.node_a == el.node_b)
        throw InputError("model: element " + std::to_string(e) + " connects a node to itself");
      if (el.group < 0 || el.group >= n_groups())
        throw InputError("model: element " + std::to_string(e) + " references a missing group");
      group_used[el.group] = true;
    }
    for (size_t g = 0; g < groups_.size(); ++g)
      if (!group_used[g])
        throw InputError("model: group " + std::to_string(g) + " has no elements");

    std::set<std::pair<int, int>> seen_support;
    for (const Support& s : supports_) {
      if (s.node < 0 || s.node >= np)
        throw InputError("model: support references a missing node");
      if (s.dof < 0 || s.dof > 2) throw InputError("model: support dof must be 0, 1 or 2");
      if (!seen_support.insert({s.node, s.dof}).second)
        throw InputError("model: duplicate support on node " + std::to_string(s.node));
    }

    dof_map_.assign(3 * np, -1);
    std::vector<bool> fixed(3 * np, false);
    for (const Support& s : supports_) fixed[3 * s.node + s.dof] = true;
    free_dofs_.clear();
    for (int i = 0; i < 3 * np; ++i) {
      if (!fixed[i]) {
        dof_map_[i] = static_cast<int>(free_dofs_.size());
        free_dofs_.push_back(i);
      }
    }
    if (free_dofs_.empty()) throw InputError("model: all dofs are supported");
    if (free_dofs_.size() == static_cast<size_t>(3 * np))
      throw InputError("model: at least one support required");

    std::set<std::pair<int, int>> seen_load;
    f_ = Eigen::VectorXd::Zero(n_free_dofs());
    for (const PointLoad& p : loads_) {
      if (p.node < 0 || p.node >= np)
        throw InputError("model: load references a missing node");
      if (p.dof < 0 || p.dof > 2) throw InputError("model: load dof must be 0, 1 or 2");
      if (!std::isfinite(p.value)) throw InputError("model: load value must be finite");
      if (!seen_load.insert({p.node, p.dof}).second)
        throw InputError("model: duplicate load entry on node " + std::to_string(p.node));
      const int idx = dof_map_[3 * p.node + p.dof];
      if (idx < 0)
        throw InputError("model: load on supported dof of node " + std::to_string(p.node));
      f_(idx) = p.value;
    }
    if (f_.norm() == 0.0) throw InputError("model: load pattern must be nonzero");

    rebuild_lengths(/*from_imperfection=*/false);
  }

  void rebuild_lengths(bool from_imperfection) {
    L0_.resize(n_elements());
    group_len_ = Eigen::VectorXd::Zero(n_groups());
    for (int e = 0; e < n_elements(); ++e) {
      const ElementDef& el = elements_[e];
      const double L =
          (X0_.segment<3>(3 * el.node_b) - X0_.segment<3>(3 * el.node_a)).norm();
      if (!(L > 0.0)) {
        const std::string msg = "element " + std::to_string(e) + " has zero reference length";
        if (from_imperfection) throw SingularGeometryError("imperfection: " + msg);
        throw InputError("model: " + msg);
      }
      L0_(e) = L;
      group_len_(el.group) += L;
    }
  }

  Eigen::VectorXd X0_;
  std::vector<ElementDef> elements_;
  std::vector<Support> supports_;
  std::vector<PointLoad> loads_;
  double E_ = 0.0;
  std::optional<double> nu_; // accepted for completeness; 1D members never use it
  std::vector<GroupDef> groups_;

  std::vector<int> dof_map_;
  std::vector<int> free_dofs_;
  Eigen::VectorXd f_;
  Eigen::VectorXd L0_;
  Eigen::VectorXd group_len_;
};

/// Deformed state of one element at current positions x.
struct ElementState {
  int element = 0;
  double L = 0.0;         // reference length
  double l = 0.0;         // current length
  Eigen::Vector3d n;      // unit direction node_a -> node_b
  double strain = 0.0;    // log strain ln(l/L)
  double axial_force = 0.0;
  double volume = 0.0;    // a * L, preserved under deformation
};

namespace detail {

inline Eigen::Vector3d node_position(const TrussModel& model, const Eigen::VectorXd& x_free,
                                     int node) {
  Eigen::Vector3d p;
  for (int k = 0; k < 3; ++k) {
    const int idx = model.free_index(node, k);
    p(k) = idx >= 0 ? x_free(idx) : model.reference_coords()(3 * node + k);
  }
  return p;
}

inline void check_design(const TrussModel& model, const Eigen::VectorXd& a) {
  if (a.size() != model.n_groups())
    throw InputError("design vector length must equal the number of groups");
  for (int g = 0; g < a.size(); ++g)
    if (!(a(g) > 0.0) || !std::isfinite(a(g)))
      throw InputError("design areas must be positive");
}

inline void check_state(const TrussModel& model, const Eigen::VectorXd& x_free) {
  if (x_free.size() != model.n_free_dofs())
    throw InputError("state vector length must equal the number of free dofs");
}

} // namespace detail

/// Kinematics and axial force of one element.  The axial force follows from
/// the logarithmic strain with volume preservation: T = (V E / l) ln(l / L),
/// positive in tension.
inline ElementState element_kinematics(const TrussModel& model, const Eigen::VectorXd& x_free,
                                       int element, const Eigen::VectorXd& a) {
  detail::check_state(model, x_free);
  detail::check_design(model, a);
  if (element < 0 || element >= model.n_elements())
    throw InputError("element index out of range");

  const ElementDef& el = model.elements()[element];
  const Eigen::Vector3d pa = detail::node_position(model, x_free, el.node_a);
  const Eigen::Vector3d pb = detail::node_position(model, x_free, el.node_b);

  ElementState st;
  st.element = element;
  st.L = model.reference_length(element);
  const Eigen::Vector3d d = pb - pa;
  st.l = d.norm();
  if (!(st.l > 1e-12 * st.L))
    throw SingularGeometryError("element " + std::to_string(element) +
                                " is degenerate at the evaluated state");
  st.n = d / st.l;
  st.strain = std::log(st.l / st.L);
  st.volume = a(el.group) * st.L;
  st.axial_force = st.volume * model.youngs_modulus() / st.l * st.strain;
  return st;
}

/// Internal nodal forces on the free dofs; the gradient of the strain energy
/// sum_e E V_e strain_e^2 / 2 with respect to the free positions.
inline Eigen::VectorXd internal_force(const TrussModel& model, const Eigen::VectorXd& x_free,
                                      const Eigen::VectorXd& a) {
  detail::check_state(model, x_free);
  detail::check_design(model, a);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(model.n_free_dofs());
  for (int e = 0; e < model.n_elements(); ++e) {
    const ElementState st = element_kinematics(model, x_free, e, a);
    const Eigen::Vector3d tb = st.axial_force * st.n;
    const ElementDef& el = model.elements()[e];
    for (int k = 0; k < 3; ++k) {
      const int ia = model.free_index(el.node_a, k);
      const int ib = model.free_index(el.node_b, k);
      if (ia >= 0) t(ia) -= tb(k);
      if (ib >= 0) t(ib) += tb(k);
    }
  }
  return t;
}

/// Internal forces over all dofs at full coordinates x_full, including the
/// entries balanced by support reactions.
inline Eigen::VectorXd internal_force_full(const TrussModel& model,
                                           const Eigen::VectorXd& x_full,
                                           const Eigen::VectorXd& a) {
  if (x_full.size() != model.reference_coords().size())
    throw InputError("internal_force_full: expected a full-length coordinate vector");
  detail::check_design(model, a);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(x_full.size());
  for (int e = 0; e < model.n_elements(); ++e) {
    const ElementDef& el = model.elements()[e];
    const Eigen::Vector3d d =
        x_full.segment<3>(3 * el.node_b) - x_full.segment<3>(3 * el.node_a);
    const double L = model.reference_length(e);
    const double l = d.norm();
    if (!(l > 1e-12 * L))
      throw SingularGeometryError("element " + std::to_string(e) +
                                  " is degenerate at the evaluated state");
    const double V = a(el.group) * L;
    const double T = V * model.youngs_modulus() / l * std::log(l / L);
    const Eigen::Vector3d tb = T / l * d;
    t.segment<3>(3 * el.node_b) += tb;
    t.segment<3>(3 * el.node_a) -= tb;
  }
  return t;
}

/// Tangent stiffness on the free dofs.  Per element
///   k = (V E / l^2 - 2 T / l) n n^T + (T / l) I,
/// assembled in the usual [[k, -k], [-k, k]] block pattern.  Symmetric.
inline Eigen::MatrixXd tangent_stiffness(const TrussModel& model, const Eigen::VectorXd& x_free,
                                         const Eigen::VectorXd& a) {
  detail::check_state(model, x_free);
  detail::check_design(model, a);
  const int nd = model.n_free_dofs();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nd, nd);
  for (int e = 0; e < model.n_elements(); ++e) {
    const ElementState st = element_kinematics(model, x_free, e, a);
    const double c1 =
        st.volume * model.youngs_modulus() / (st.l * st.l) - 2.0 * st.axial_force / st.l;
    const double c2 = st.axial_force / st.l;
    // Evaluate the outer product before scaling so k stays bitwise symmetric.
    const Eigen::Matrix3d nn = st.n * st.n.transpose();
    Eigen::Matrix3d k = c1 * nn;
    k.diagonal().array() += c2;

    const ElementDef& el = model.elements()[e];
    const int idx[2] = {el.node_a, el.node_b};
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        const double sign = r == c ? 1.0 : -1.0;
        for (int i = 0; i < 3; ++i) {
          const int gi = model.free_index(idx[r], i);
          if (gi < 0) continue;
          for (int j = 0; j < 3; ++j) {
            const int gj = model.free_index(idx[c], j);
            if (gj >= 0) K(gi, gj) += sign * k(i, j);
          }
        }
      }
    }
  }
  return K;
}

/// Out-of-balance force r = t(x) - lambda f.
inline Eigen::VectorXd residual(const TrussModel& model, const Eigen::VectorXd& x_free,
                                double lambda, const Eigen::VectorXd& a) {
  return internal_force(model, x_free, a) - lambda * model.load_pattern();
}

/// Total strain energy sum_e E V_e strain_e^2 / 2.
inline double strain_energy(const TrussModel& model, const Eigen::VectorXd& x_free,
                            const Eigen::VectorXd& a) {
  double w = 0.0;
  for (int e = 0; e < model.n_elements(); ++e) {
    const ElementState st = element_kinematics(model, x_free, e, a);
    w += 0.5 * model.youngs_modulus() * st.volume * st.strain * st.strain;
  }
  return w;
}

/// Material volume sum_g a_g * group_length_g of the as-designed model.
inline double volume(const TrussModel& model, const Eigen::VectorXd& a) {
  detail::check_design(model, a);
  double v = 0.0;
  for (int g = 0; g < model.n_groups(); ++g) v += a(g) * model.group_length(g);
  return v;
}

/// Imperfect reference coordinates X0 + Phi beta.  Phi holds one full-length
/// mode per column, zero at supported dofs, so supports never move.
inline Eigen::VectorXd apply_imperfection(const Eigen::VectorXd& X0, const Eigen::MatrixXd& Phi,
                                          const Eigen::VectorXd& beta) {
  if (Phi.rows() != X0.size())
    throw InputError("apply_imperfection: mode length must match the coordinate vector");
  if (Phi.cols() != beta.size())
    throw InputError("apply_imperfection: one amplitude per mode required");
  return X0 + Phi * beta;
}

} // namespace buckopt
