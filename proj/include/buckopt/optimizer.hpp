#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "buckopt/errors.hpp"
#include "buckopt/gaussian.hpp"
#include "buckopt/gp.hpp"
#include "buckopt/local_search.hpp"
#include "buckopt/log.hpp"
#include "buckopt/model.hpp"
#include "buckopt/sampling.hpp"
#include "buckopt/sobol.hpp"
#include "buckopt/stability.hpp"

namespace buckopt {

/// Penalty objective value for designs whose eliminated area leaves its
/// bounds or whose statistics run fails.  Normalised objectives live in
/// [-1, 1], so -10 sits strictly below anything attainable.
inline constexpr double kInfeasibleObjective = -10.0;

/// Design-space optimisation problem: maximise a weighted combination of the
/// mean buckling load and (negated) its spread under the fixed imperfection
/// distribution.  The mode basis is computed once from the as-designed areas
/// and held fixed: refitting modes per candidate would redefine the random
/// imperfections mid-run and make the objective discontinuous.
struct RobustProblem {
  TrussModel model;
  ModeBasis basis;
  Eigen::VectorXd sigma_beta;    // per-mode imperfection std
  int m = 64;                    // statistics use 2m samples
  std::uint64_t sample_skip = 0; // Sobol offset of the shared sample set
  SamplingSettings sampling;

  double alpha = 0.5;
  double mean_norm = 1.0; // attainable-maximum mean, for scale-free weighting
  double std_norm = 1.0;  // attainable-maximum std

  double V0 = 0.0;    // material budget, volume(a_init)
  int elim_group = 0; // area recovered from the volume constraint
  Eigen::VectorXd lo, hi; // bounds of the remaining (reduced) areas
};

inline RobustProblem make_robust_problem(TrussModel model, int n_modes,
                                         const Eigen::VectorXd& sigma_beta, int m,
                                         double alpha) {
  if (model.n_groups() < 2)
    throw InputError("make_robust_problem: need at least two area groups; with one group the "
                     "volume constraint fixes the design");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw InputError("make_robust_problem: alpha must lie in [0, 1]");
  if (sigma_beta.size() != n_modes)
    throw InputError("make_robust_problem: sigma_beta size must match the mode count");
  const Eigen::VectorXd a_init = model.design_areas();
  ModeBasis basis = linear_buckling_modes(model, a_init, n_modes);
  const double V0 = volume(model, a_init);
  const int d = model.n_groups() - 1;
  Eigen::VectorXd lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    lo(i) = model.groups()[i].a_min;
    hi(i) = model.groups()[i].a_max;
  }
  return RobustProblem{.model = std::move(model),
                       .basis = std::move(basis),
                       .sigma_beta = sigma_beta,
                       .m = m,
                       .sample_skip = 0,
                       .sampling = {},
                       .alpha = alpha,
                       .mean_norm = 1.0,
                       .std_norm = 1.0,
                       .V0 = V0,
                       .elim_group = d,
                       .lo = std::move(lo),
                       .hi = std::move(hi)};
}

/// Expands reduced areas to the full design by recovering the eliminated
/// group's area from the volume budget.  Empty result: the recovered area
/// leaves its bounds (beyond rounding slack) and the design is infeasible.
inline std::optional<Eigen::VectorXd> eliminate_volume_constraint(
    const Eigen::VectorXd& a_reduced, const RobustProblem& p) {
  const int ng = p.model.n_groups();
  if (a_reduced.size() != ng - 1)
    throw InputError("eliminate_volume_constraint: reduced design has wrong size");
  Eigen::VectorXd a_full(ng);
  double remaining = p.V0;
  int r = 0;
  for (int g = 0; g < ng; ++g) {
    if (g == p.elim_group) continue;
    a_full(g) = a_reduced(r++);
    remaining -= a_full(g) * p.model.group_length(g);
  }
  const double a_elim = remaining / p.model.group_length(p.elim_group);
  const GroupDef& gd = p.model.groups()[p.elim_group];
  const double slack = 1e-12 * std::max(1.0, std::abs(gd.a_max));
  if (a_elim < gd.a_min - slack || a_elim > gd.a_max + slack) return std::nullopt;
  a_full(p.elim_group) = std::clamp(a_elim, gd.a_min, gd.a_max);
  return a_full;
}

/// One objective evaluation.  a_full is empty and g is the penalty when the
/// volume expansion is infeasible; failed marks a statistics run that threw.
struct EvalRecord {
  Eigen::VectorXd a_reduced;
  Eigen::VectorXd a_full;
  double g = kInfeasibleObjective;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std_dev = std::numeric_limits<double>::quiet_NaN();
  bool feasible = false;
  bool failed = false;
};

namespace detail {

inline EvalRecord evaluate_design_moments(const Eigen::VectorXd& a_reduced,
                                          const RobustProblem& p) {
  EvalRecord rec;
  rec.a_reduced = a_reduced;
  const std::optional<Eigen::VectorXd> a_full = eliminate_volume_constraint(a_reduced, p);
  if (!a_full) return rec;
  rec.a_full = *a_full;
  rec.feasible = true;
  try {
    const BucklingStatistics st = buckling_statistics(p.model, rec.a_full, p.basis,
                                                      p.sigma_beta, p.m, p.sample_skip,
                                                      p.sampling);
    rec.mean = st.mean;
    rec.std_dev = st.std_dev;
  } catch (const SolveError& err) {
    log_warn("design evaluation failed: %s", err.what());
    rec.failed = true;
  }
  return rec;
}

} // namespace detail

/// Weighted robust objective g = alpha mean/mean* - (1 - alpha) std/std*.
/// The extreme weights drop the other term exactly, so an alpha = 1 run
/// never touches std_norm (and vice versa).
inline EvalRecord robust_objective(const Eigen::VectorXd& a_reduced, const RobustProblem& p) {
  EvalRecord rec = detail::evaluate_design_moments(a_reduced, p);
  if (!rec.feasible || rec.failed) return rec;
  if (p.alpha == 1.0)
    rec.g = rec.mean / p.mean_norm;
  else if (p.alpha == 0.0)
    rec.g = -rec.std_dev / p.std_norm;
  else
    rec.g = p.alpha * rec.mean / p.mean_norm - (1.0 - p.alpha) * rec.std_dev / p.std_norm;
  return rec;
}

/// Expected improvement over g_best with exploration margin xi, evaluated
/// from the posterior at a.  Degenerate sigma = 0 reduces to max(delta, 0).
inline double expected_improvement(const GpModel& gp, const Eigen::VectorXd& a, double g_best,
                                   double xi = 0.01) {
  double mu = 0.0, var = 0.0;
  gp_predict_one(gp, a, mu, var);
  const double sigma = std::sqrt(std::max(var, 0.0));
  const double delta = mu - g_best - xi;
  if (sigma <= 0.0) return std::max(delta, 0.0);
  const double z = delta / sigma;
  return std::max(delta * normal_cdf(z) + sigma * normal_pdf(z), 0.0);
}

namespace detail {

/// Global box search used for acquisition surfaces: 1024 Sobol candidates,
/// each polished by a short compass run.  Fully deterministic (fixed
/// candidate stream, deterministic refinement).
template <typename F>
std::pair<Eigen::VectorXd, double> acquisition_search(F&& fn, const Eigen::VectorXd& lo,
                                                      const Eigen::VectorXd& hi) {
  CompassSettings cs;
  cs.initial_step = 0.125;
  cs.min_step = 1e-3;
  cs.max_evaluations = 64;

  SobolStream candidates(static_cast<int>(lo.size()), 1);
  Eigen::VectorXd best_x;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1024; ++i) {
    const Eigen::VectorXd u = lo + candidates.next().cwiseProduct(hi - lo).eval();
    const auto [x, v] = compass_maximize(fn, u, lo, hi, cs);
    if (v > best_v) {
      best_v = v;
      best_x = x;
    }
  }
  return {best_x, best_v};
}

} // namespace detail

inline Eigen::VectorXd maximize_acquisition(const GpModel& gp, const Eigen::VectorXd& lo,
                                            const Eigen::VectorXd& hi, double g_best,
                                            double xi = 0.01, double* ei_out = nullptr) {
  const int d = gp.dim();
  if (lo.size() != d || hi.size() != d)
    throw InputError("maximize_acquisition: bounds do not match the model dimension");
  const auto [x, v] = detail::acquisition_search(
      [&](const Eigen::VectorXd& u) { return expected_improvement(gp, u, g_best, xi); }, lo,
      hi);
  if (ei_out) *ei_out = v;
  return x;
}

/// Search window in coordinates normalised to the full bounds box, plus the
/// non-improvement streak that drives the zoom rule.
struct DomainWindow {
  Eigen::VectorXd lo, hi;
  int stall_rounds = 0;
};

struct OptimizationHistory {
  std::vector<EvalRecord> evals;
  int incumbent = -1; // index of the best g; ties keep the earliest
  std::vector<Eigen::VectorXd> window_lo, window_hi; // trajectory after each reduction

  int n_evaluations() const { return static_cast<int>(evals.size()); }
  const EvalRecord& best() const {
    if (incumbent < 0) throw SolveError("OptimizationHistory: no evaluations");
    return evals[static_cast<std::size_t>(incumbent)];
  }
};

/// Sequential domain reduction: re-centre each variable's window on the
/// incumbent, contract by 0.9 when the last two steps oscillate in sign,
/// pan without shrinking when they are monotone, and zoom by 0.7 after
/// every 5 consecutive non-improving evaluations.  Windows are clipped to
/// [0, 1]; once a window hits the 0.05 floor that variable is left alone.
/// Points are taken in coordinates normalised to the full bounds box.
inline void domain_reduction_update(const OptimizationHistory& hist,
                                    const Eigen::VectorXd& full_lo,
                                    const Eigen::VectorXd& full_hi, DomainWindow& w) {
  const int n = hist.n_evaluations();
  if (n < 2) throw InputError("domain_reduction_update: need at least two evaluations");
  const Eigen::Index d = w.lo.size();
  constexpr double kMinWindow = 0.05;

  const auto unit = [&](const Eigen::VectorXd& a) {
    Eigen::VectorXd u(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double edge = full_hi(i) - full_lo(i);
      u(i) = edge > 0.0 ? (a(i) - full_lo(i)) / edge : 0.5;
    }
    return u;
  };
  const Eigen::VectorXd center = unit(hist.best().a_reduced);

  const bool improved = hist.incumbent == n - 1;
  w.stall_rounds = improved ? 0 : w.stall_rounds + 1;
  const double zoom = (!improved && w.stall_rounds % 5 == 0) ? 0.7 : 1.0;

  Eigen::VectorXd d1 = Eigen::VectorXd::Zero(d), d2 = Eigen::VectorXd::Zero(d);
  if (n >= 3) {
    const Eigen::VectorXd pk = unit(hist.evals[n - 1].a_reduced);
    const Eigen::VectorXd pk1 = unit(hist.evals[n - 2].a_reduced);
    const Eigen::VectorXd pk2 = unit(hist.evals[n - 3].a_reduced);
    d1 = pk - pk1;
    d2 = pk1 - pk2;
  }

  for (Eigen::Index i = 0; i < d; ++i) {
    const double width_now = w.hi(i) - w.lo(i);
    if (width_now <= kMinWindow) continue; // floor reached, variable frozen
    const double contract = d1(i) * d2(i) < 0.0 ? 0.9 : 1.0;
    double width = std::max(width_now * contract * zoom, kMinWindow);
    double lo = center(i) - 0.5 * width;
    double hi = center(i) + 0.5 * width;
    if (lo < 0.0) {
      hi = std::min(hi - lo, 1.0);
      lo = 0.0;
    } else if (hi > 1.0) {
      lo = std::max(lo - (hi - 1.0), 0.0);
      hi = 1.0;
    }
    w.lo(i) = lo;
    w.hi(i) = hi;
  }
}

struct BoSettings {
  int budget = 100;
  int n_init = 0; // 0 selects the default 5 d capped at 20
  std::uint64_t seed = 0;
  double xi = 0.01;
  double ei_stop = 1e-10; // acquisition ceiling below which the loop ends
};

/// Bayesian maximisation of an arbitrary boxed objective.  The objective
/// returns a full EvalRecord so problem-specific payloads (moments, expanded
/// designs) ride along in the history.  Deterministic for a fixed seed: the
/// initial design is a seeded Sobol block and everything downstream is
/// seedless.  a_start, when given, is evaluated first so baseline dominance
/// holds by construction.
template <typename F>
OptimizationHistory bayes_optimize_core(F&& objective, const Eigen::VectorXd& lo,
                                        const Eigen::VectorXd& hi,
                                        const std::optional<Eigen::VectorXd>& a_start,
                                        const BoSettings& bs) {
  const int d = static_cast<int>(lo.size());
  if (d < 1 || hi.size() != d) throw InputError("bayes_optimize: invalid bounds");
  for (int i = 0; i < d; ++i)
    if (!(lo(i) <= hi(i))) throw InputError("bayes_optimize: empty bounds box");
  int n_init = bs.n_init > 0 ? bs.n_init : std::max(2, std::min(5 * d, 20));
  if (n_init < 2) throw InputError("bayes_optimize: need n_init >= 2");
  if (bs.budget < n_init) throw InputError("bayes_optimize: budget below the initial design");

  OptimizationHistory hist;
  const auto evaluate = [&](const Eigen::VectorXd& a) {
    EvalRecord rec = objective(a);
    rec.a_reduced = a;
    hist.evals.push_back(std::move(rec));
    const int k = hist.n_evaluations() - 1;
    if (hist.incumbent < 0 || hist.evals[k].g > hist.best().g) hist.incumbent = k;
    log_debug("bo: eval %d g %.8g incumbent %d", k, hist.evals[k].g, hist.incumbent);
  };

  SobolStream init_points(d, 1 + bs.seed);
  if (a_start) {
    Eigen::VectorXd a0 = *a_start;
    for (int i = 0; i < d; ++i) a0(i) = std::clamp(a0(i), lo(i), hi(i));
    evaluate(a0);
  }
  while (hist.n_evaluations() < n_init)
    evaluate(lo + init_points.next().cwiseProduct(hi - lo).eval());

  DomainWindow window{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d), 0};
  hist.window_lo.push_back(window.lo);
  hist.window_hi.push_back(window.hi);

  while (hist.n_evaluations() < bs.budget) {
    // Current raw search box from the normalised window.
    Eigen::VectorXd blo(d), bhi(d);
    for (int i = 0; i < d; ++i) {
      blo(i) = lo(i) + window.lo(i) * (hi(i) - lo(i));
      bhi(i) = lo(i) + window.hi(i) * (hi(i) - lo(i));
    }
    // All data, scaled to the current box; points that predate a reduction
    // land outside [0, 1], which the kernel handles (it only sees
    // distances).
    const int n = hist.n_evaluations();
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < d; ++i) {
        const double edge = bhi(i) - blo(i);
        X(k, i) = edge > 0.0 ? (hist.evals[k].a_reduced(i) - blo(i)) / edge : 0.5;
      }
      y(k) = hist.evals[k].g;
    }
    const GpModel gp = gp_fit(X, y);
    double ei = 0.0;
    Eigen::VectorXd u_next = maximize_acquisition(
        gp, Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d), hist.best().g, bs.xi, &ei);
    if (ei <= bs.ei_stop) {
      // A confident surrogate flattens the expected improvement to zero
      // (the margin xi hides sub-xi gains), but its mean still localises
      // the optimum.  Exploit the mean; stop once even that predicts
      // nothing above the incumbent.
      const auto [u_mean, mu] = detail::acquisition_search(
          [&](const Eigen::VectorXd& u) {
            double m = 0.0, var = 0.0;
            gp_predict_one(gp, u, m, var);
            return m;
          },
          Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d));
      const double g_best = hist.best().g;
      if (mu <= g_best + 1e-12 * std::max(1.0, std::abs(g_best))) {
        log_debug("bo: acquisition exhausted (ei %.3g, mean gain %.3g) after %d evaluations",
                  ei, mu - g_best, n);
        break;
      }
      u_next = u_mean;
    }
    evaluate(blo + u_next.cwiseProduct(bhi - blo).eval());
    domain_reduction_update(hist, lo, hi, window);
    hist.window_lo.push_back(window.lo);
    hist.window_hi.push_back(window.hi);
  }

  if (!hist.best().feasible)
    throw InputError("bayes_optimize: every evaluated design was infeasible; the volume "
                     "budget does not fit the bounds");
  if (hist.best().failed)
    throw SolveError("bayes_optimize: every feasible evaluation failed");
  return hist;
}

/// Robust-design optimisation: the as-designed areas are evaluated first,
/// then bayes_optimize_core drives robust_objective.
inline OptimizationHistory bayes_optimize(const RobustProblem& p, const BoSettings& bs) {
  const int d = p.model.n_groups() - 1;
  Eigen::VectorXd a0(d);
  for (int i = 0; i < d; ++i) a0(i) = p.model.groups()[i].a_init;
  return bayes_optimize_core([&](const Eigen::VectorXd& a) { return robust_objective(a, p); },
                             p.lo, p.hi, a0, bs);
}

struct Normalizers {
  double mean_norm = 1.0;
  double std_norm = 1.0;
};

/// Best attainable mean and best attainable std over the design space, each
/// found by its own optimisation run on the raw (un-normalised) moment.
/// Their values make the weighted objective scale-free.
inline Normalizers compute_normalizers(const RobustProblem& problem_template,
                                       const BoSettings& bs) {
  RobustProblem p = problem_template;
  p.mean_norm = p.std_norm = 1.0;
  const int d = p.model.n_groups() - 1;
  Eigen::VectorXd a0(d);
  for (int i = 0; i < d; ++i) a0(i) = p.model.groups()[i].a_init;

  const auto run = [&](auto&& raw_value) {
    return bayes_optimize_core(
        [&](const Eigen::VectorXd& a) {
          EvalRecord rec = detail::evaluate_design_moments(a, p);
          if (rec.feasible && !rec.failed) rec.g = raw_value(rec);
          return rec;
        },
        p.lo, p.hi, a0, bs);
  };

  Normalizers out;
  out.mean_norm = run([](const EvalRecord& r) { return r.mean; }).best().g;
  out.std_norm = run([](const EvalRecord& r) { return r.std_dev; }).best().g;
  if (!(out.mean_norm > 0.0) || !(out.std_norm > 0.0))
    throw SolveError("compute_normalizers: non-positive normaliser");
  return out;
}

struct ParetoRow {
  double alpha = 0.0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std_dev = std::numeric_limits<double>::quiet_NaN();
  double g = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd a_opt;
  bool ok = false;
  std::string error;
};

/// One optimisation per weight, all from the same seed; failures are
/// reported in their row and the sweep continues.  Runs fan out across
/// n_workers threads (each run only reads the shared problem).
inline std::vector<ParetoRow> pareto_sweep(const RobustProblem& problem_template,
                                           std::vector<double> alphas, const BoSettings& bs,
                                           int n_workers = 1) {
  std::sort(alphas.begin(), alphas.end());
  std::vector<ParetoRow> rows(alphas.size());
  std::atomic<std::size_t> cursor{0};
  const auto worker = [&] {
    for (std::size_t k = cursor.fetch_add(1); k < alphas.size(); k = cursor.fetch_add(1)) {
      ParetoRow& row = rows[k];
      row.alpha = alphas[k];
      try {
        RobustProblem p = problem_template;
        p.alpha = alphas[k];
        const OptimizationHistory hist = bayes_optimize(p, bs);
        const EvalRecord& best = hist.best();
        row.mean = best.mean;
        row.std_dev = best.std_dev;
        row.g = best.g;
        row.a_opt = best.a_full;
        row.ok = true;
      } catch (const std::exception& err) {
        row.error = err.what();
        log_warn("pareto: alpha %.3g failed: %s", alphas[k], err.what());
      }
    }
  };
  if (n_workers <= 1 || alphas.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int n = std::min<int>(n_workers, static_cast<int>(alphas.size()));
    pool.reserve(n);
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return rows;
}

} // namespace buckopt
