#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "buckopt/errors.hpp"
#include "buckopt/model.hpp"

namespace buckopt {

/// Recommended imperfection scales (standard deviation of the mode
/// amplitudes beta) for the built-in examples.  They are not part of the
/// model file; callers pass them to the sampling routines.
inline constexpr double kVonMisesSigmaBeta = 0.02;
inline constexpr double kTwoRingDomeSigmaBeta = 0.1;
inline constexpr double kFiveRingDomeSigmaBeta = 0.03;
inline constexpr double kColumnSigmaBeta = 0.006;

/// Shallow two-bar arch loaded at the apex, which can only move vertically.
/// One free dof, one design group, snap-through response.
inline TrussModel make_von_mises_truss(double half_span = 1.0, double rise = 0.2) {
  if (!(half_span > 0.0) || !(rise > 0.0))
    throw InputError("von_mises: half_span and rise must be positive");
  Eigen::VectorXd X(9);
  X << -half_span, 0, 0, half_span, 0, 0, 0, 0, rise;
  const double a = 0.5;
  return TrussModel(X, {{0, 2, 0}, {1, 2, 0}},
                    {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}, {2, 0}, {2, 1}},
                    {{2, 2, -1.0}}, 1e8, std::nullopt, {{a, 0.5 * a, 1.5 * a}});
}

/// Star dome with an apex node and `rings` concentric polygonal rings.
/// Ring k (1-based, innermost first) has radius R k / rings; adjacent
/// rings are rotated against each other by half a sector so the diagonals
/// form the star pattern.  The apex connects to ring 1, every ring except
/// the outermost carries its polygon edges, and every node connects to the
/// two straddling nodes of the next ring out.  The outermost ring is
/// pinned, the apex is loaded downward.
///
/// rings = 2: hexagonal rings, 13 nodes, 24 elements, heights (2, 0) and
/// apex 3.  rings = 5: 12-sided rings, 61 nodes, 156 elements, parabolic
/// cap z(r) = H (1 - (r/R)^2) with H = 6.
///
/// Groups follow the ring symmetry: one for the apex spokes, one per ring
/// of edges, one per layer of diagonals (3 groups for rings = 2, 9 for
/// rings = 5).  Pass outer_radius/apex_height <= 0 or an empty height list
/// to take the per-size defaults.
inline TrussModel make_star_dome(int rings = 2, double outer_radius = 0.0,
                                 double apex_height = 0.0,
                                 std::vector<double> ring_heights = {}) {
  if (rings != 2 && rings != 5) throw InputError("star_dome: rings must be 2 or 5");
  const int n_side = rings == 2 ? 6 : 12;
  if (outer_radius <= 0.0) outer_radius = rings == 2 ? 10.0 : 25.0;
  if (apex_height <= 0.0) apex_height = rings == 2 ? 3.0 : 6.0;
  if (ring_heights.empty()) {
    if (rings == 2) {
      ring_heights = {2.0, 0.0};
    } else {
      for (int k = 1; k <= rings; ++k) {
        const double r = outer_radius * k / rings;
        ring_heights.push_back(apex_height * (1.0 - (r / outer_radius) * (r / outer_radius)));
      }
    }
  }
  if (static_cast<int>(ring_heights.size()) != rings)
    throw InputError("star_dome: need one height per ring");

  const int n_nodes = 1 + rings * n_side;
  Eigen::VectorXd X(3 * n_nodes);
  X.segment<3>(0) << 0.0, 0.0, apex_height;
  const double sector = 2.0 * std::numbers::pi / n_side;
  // Odd rings are rotated by half a sector; node_id(k, i) is ring k's
  // i-th node, counterclockwise.
  const auto offset = [&](int k) { return k % 2 == 1 ? 0.5 : 0.0; };
  const auto node_id = [&](int k, int i) {
    return 1 + (k - 1) * n_side + ((i % n_side) + n_side) % n_side;
  };
  for (int k = 1; k <= rings; ++k) {
    const double r = outer_radius * k / rings;
    for (int i = 0; i < n_side; ++i) {
      const double theta = (i + offset(k)) * sector;
      X.segment<3>(3 * node_id(k, i)) << r * std::cos(theta), r * std::sin(theta),
          ring_heights[static_cast<std::size_t>(k - 1)];
    }
  }

  std::vector<ElementDef> elements;
  for (int i = 0; i < n_side; ++i) elements.push_back({0, node_id(1, i), 0});
  for (int k = 1; k < rings; ++k)
    for (int i = 0; i < n_side; ++i) elements.push_back({node_id(k, i), node_id(k, i + 1), k});
  for (int k = 1; k < rings; ++k) {
    const int group = rings - 1 + k;
    // The half-sector twist puts node i of ring k between nodes (j0, j0+1)
    // of ring k+1.
    const int j0 = offset(k) > offset(k + 1) ? 0 : -1;
    for (int i = 0; i < n_side; ++i) {
      elements.push_back({node_id(k, i), node_id(k + 1, i + j0), group});
      elements.push_back({node_id(k, i), node_id(k + 1, i + j0 + 1), group});
    }
  }

  std::vector<Support> supports;
  for (int i = 0; i < n_side; ++i)
    for (int dof = 0; dof < 3; ++dof) supports.push_back({node_id(rings, i), dof});

  const int n_groups = 2 * rings - 1;
  const double a = 0.5;
  std::vector<GroupDef> groups(n_groups, {a, 0.5 * a, 1.5 * a});
  return TrussModel(std::move(X), std::move(elements), std::move(supports), {{0, 2, -1.0}}, 1e8,
                    0.35, std::move(groups));
}

/// Stacked triangular-prism column: `blocks` storeys of three vertical
/// struts, two crossing braces per face and a horizontal triangle on top,
/// capped by a pyramid to a single loaded node.  The base corners are
/// pinned, the top node can only move vertically.  One design group per
/// block; the cap belongs to the top block's group.
inline TrussModel make_truss_column(int blocks = 10, double base_edge = 1.0,
                                    double block_height = 1.0) {
  if (blocks < 1) throw InputError("truss_column: need at least one block");
  if (!(base_edge > 0.0) || !(block_height > 0.0))
    throw InputError("truss_column: base_edge and block_height must be positive");
  const int n_nodes = 3 * (blocks + 1) + 1;
  const int apex = 3 * (blocks + 1);
  // Equilateral cross-section with one corner on +y, written without trig
  // so the coordinates carry no rounding noise at the axis-aligned angles.
  const double r = base_edge / std::sqrt(3.0);
  const double vx[3] = {0.0, -0.5 * base_edge, 0.5 * base_edge};
  const double vy[3] = {r, -0.5 * r, -0.5 * r};
  Eigen::VectorXd X(3 * n_nodes);
  for (int level = 0; level <= blocks; ++level)
    for (int j = 0; j < 3; ++j)
      X.segment<3>(3 * (3 * level + j)) << vx[j], vy[j], level * block_height;
  X.segment<3>(3 * apex) << 0.0, 0.0, (blocks + 1) * block_height;

  const auto node_id = [](int level, int j) { return 3 * level + j % 3; };
  std::vector<ElementDef> elements;
  for (int b = 0; b < blocks; ++b)
    for (int j = 0; j < 3; ++j) {
      elements.push_back({node_id(b, j), node_id(b + 1, j), b});
      elements.push_back({node_id(b, j), node_id(b + 1, j + 1), b});
      elements.push_back({node_id(b, j + 1), node_id(b + 1, j), b});
      elements.push_back({node_id(b + 1, j), node_id(b + 1, j + 1), b});
    }
  for (int j = 0; j < 3; ++j) elements.push_back({node_id(blocks, j), apex, blocks - 1});

  std::vector<Support> supports;
  for (int j = 0; j < 3; ++j)
    for (int dof = 0; dof < 3; ++dof) supports.push_back({j, dof});
  supports.push_back({apex, 0});
  supports.push_back({apex, 1});

  const double a = 0.1;
  std::vector<GroupDef> groups(blocks, {a, 0.5 * a, 1.5 * a});
  return TrussModel(std::move(X), std::move(elements), std::move(supports), {{apex, 2, -1.0}},
                    1e4, std::nullopt, std::move(groups));
}

} // namespace buckopt
