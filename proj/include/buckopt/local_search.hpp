#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <utility>

#include "buckopt/errors.hpp"

namespace buckopt {

struct CompassSettings {
  double initial_step = 0.25; // fraction of the box edge per coordinate
  double min_step = 1e-3;     // fraction of the box edge; stop below this
  int max_evaluations = 100;
};

/// Bounded compass (coordinate pattern) search maximising fn over the box
/// [lo, hi].  Probes +/- step along each coordinate, moves to the best
/// improving neighbour, halves the step when no neighbour improves.  Fully
/// deterministic: ties resolve to the lowest coordinate, probe order is
/// fixed.  Degenerate coordinates (lo == hi) are pinned.
template <typename F>
std::pair<Eigen::VectorXd, double> compass_maximize(F&& fn, Eigen::VectorXd x,
                                                    const Eigen::VectorXd& lo,
                                                    const Eigen::VectorXd& hi,
                                                    const CompassSettings& cs = {}) {
  const Eigen::Index d = x.size();
  if (lo.size() != d || hi.size() != d)
    throw InputError("compass_maximize: bound sizes do not match the start point");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(lo(i) <= hi(i))) throw InputError("compass_maximize: empty box");
    x(i) = std::clamp(x(i), lo(i), hi(i));
  }

  const Eigen::VectorXd edge = hi - lo;
  double best = fn(x);
  int evals = 1;
  double step = cs.initial_step;
  while (step >= cs.min_step && evals < cs.max_evaluations) {
    bool moved = false;
    for (Eigen::Index i = 0; i < d && evals < cs.max_evaluations; ++i) {
      if (edge(i) == 0.0) continue;
      for (double sign : {1.0, -1.0}) {
        const double xi = std::clamp(x(i) + sign * step * edge(i), lo(i), hi(i));
        if (xi == x(i)) continue;
        const double saved = x(i);
        x(i) = xi;
        const double v = fn(x);
        ++evals;
        if (v > best) {
          best = v;
          moved = true;
          break; // keep the improved coordinate, move on
        }
        x(i) = saved;
        if (evals >= cs.max_evaluations) break;
      }
    }
    if (!moved) step *= 0.5;
  }
  return {x, best};
}

} // namespace buckopt
