// Command line front end: generate example models, trace equilibrium paths,
// locate buckling loads, sample imperfection statistics and run the robust
// sizing optimisation.  Exit codes: 0 success, 1 solver failure, 2 bad input.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "buckopt/continuation.hpp"
#include "buckopt/errors.hpp"
#include "buckopt/generators.hpp"
#include "buckopt/io.hpp"
#include "buckopt/log.hpp"
#include "buckopt/optimizer.hpp"
#include "buckopt/sampling.hpp"
#include "buckopt/stability.hpp"

using namespace buckopt;

namespace {

/// Where a model comes from: a file or one of the built-in generators.
struct ModelSource {
  std::string path;
  std::string kind;
  double half_span = 1.0;
  double rise = 0.2;
  int rings = 2;
  double radius = 0.0;      // 0 = per-size default
  double apex_height = 0.0; // 0 = per-size default
  std::vector<double> ring_heights;
  int blocks = 10;
  double base_edge = 1.0;
  double block_height = 1.0;
};

TrussModel resolve_model(const ModelSource& src) {
  if (!src.path.empty()) return load_model(src.path);
  if (src.kind == "von_mises") return make_von_mises_truss(src.half_span, src.rise);
  if (src.kind == "star_dome")
    return make_star_dome(src.rings, src.radius, src.apex_height, src.ring_heights);
  if (src.kind == "truss_column")
    return make_truss_column(src.blocks, src.base_edge, src.block_height);
  throw InputError("unknown generator kind \"" + src.kind +
                   "\" (expected von_mises, star_dome or truss_column)");
}

/// Recommended imperfection scale for generated models; files carry none.
std::optional<double> kind_default_sigma(const ModelSource& src) {
  if (src.kind == "von_mises") return kVonMisesSigmaBeta;
  if (src.kind == "star_dome")
    return src.rings == 2 ? kTwoRingDomeSigmaBeta : kFiveRingDomeSigmaBeta;
  if (src.kind == "truss_column") return kColumnSigmaBeta;
  return std::nullopt;
}

void add_generator_options(CLI::App* cmd, ModelSource& src) {
  cmd->add_option("--half-span", src.half_span, "von_mises: half span of the arch");
  cmd->add_option("--rise", src.rise, "von_mises: apex rise");
  cmd->add_option("--rings", src.rings, "star_dome: number of rings (2 or 5)");
  cmd->add_option("--radius", src.radius, "star_dome: outer ring radius (0 = default)");
  cmd->add_option("--apex-height", src.apex_height, "star_dome: apex height (0 = default)");
  cmd->add_option("--ring-heights", src.ring_heights,
                  "star_dome: ring heights innermost first (default per size)")
      ->delimiter(',');
  cmd->add_option("--blocks", src.blocks, "truss_column: number of stacked blocks");
  cmd->add_option("--base-edge", src.base_edge, "truss_column: cross-section edge length");
  cmd->add_option("--block-height", src.block_height, "truss_column: height of one block");
}

/// Adds -m/--kind to an analysis subcommand; exactly one must be given.
void add_model_source(CLI::App* cmd, ModelSource& src) {
  auto* path = cmd->add_option("-m,--model", src.path, "model JSON file");
  auto* kind =
      cmd->add_option("--kind", src.kind, "built-in generator instead of a model file");
  path->excludes(kind);
  kind->excludes(path);
  add_generator_options(cmd, src);
}

void require_model_source(const ModelSource& src, const char* cmd) {
  if (src.path.empty() && src.kind.empty())
    throw InputError(std::string(cmd) + ": give a model with -m or --kind");
}

double resolve_sigma(const std::optional<double>& flag, const ModelSource& src,
                     const char* cmd) {
  if (flag) {
    if (!(*flag >= 0.0)) throw InputError(std::string(cmd) + ": --sigma-beta must be >= 0");
    return *flag;
  }
  if (const auto s = kind_default_sigma(src)) return *s;
  throw InputError(std::string(cmd) + ": --sigma-beta is required with a model file");
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::fputs(content.c_str(), stdout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write output file: " + path);
  out << content;
}

std::string json_vector(const Eigen::VectorXd& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_json_number(v(i));
  }
  return s + "]";
}

int checked_m(int samples, const char* cmd) {
  if (samples < 2 || samples % 2 != 0)
    throw InputError(std::string(cmd) + ": --samples must be an even count >= 2");
  return samples / 2;
}

/// Default evaluation budget grows with the number of free design groups.
int default_budget(int d) { return d <= 2 ? 100 : (d <= 8 ? 200 : 300); }

// ---------------------------------------------------------------------------
// subcommand bodies

int run_generate(const ModelSource& src, const std::string& out_path) {
  write_output(out_path, serialize_model(resolve_model(src)));
  return 0;
}

int run_analyze(const ModelSource& src, int max_steps, const std::string& dump_path) {
  require_model_source(src, "analyze");
  const TrussModel model = resolve_model(src);
  const Eigen::VectorXd a = model.design_areas();
  const Eigen::VectorXd x0 = model.free_reference_positions();

  // Displacement reported at the first loaded dof, the natural abscissa for
  // load-deflection plots.
  int load_free_index = -1;
  if (!model.loads().empty()) {
    const int full = 3 * model.loads()[0].node + model.loads()[0].dof;
    const auto& free = model.free_dofs();
    for (std::size_t i = 0; i < free.size(); ++i)
      if (free[i] == full) load_free_index = static_cast<int>(i);
  }

  std::ostringstream csv;
  csv << "step,lambda,newton_iterations,u_norm,u_load\n";
  const auto emit = [&](const PathPoint& p) {
    const double u_load = load_free_index >= 0 ? p.x(load_free_index) - x0(load_free_index) : 0.0;
    csv << p.step << "," << format_csv_number(p.lambda) << "," << p.newton_iterations << ","
        << format_csv_number((p.x - x0).norm()) << "," << format_csv_number(u_load) << "\n";
  };

  TraceState st = start_trace(model, a);
  emit(st.point);
  for (int step = 1; step <= max_steps; ++step) {
    const auto next = try_arc_length_step(model, a, st);
    if (!next) {
      log_warn("analyze: trace stopped early at step %d, lambda = %g", step, st.point.lambda);
      break;
    }
    st = *next;
    st.point.step = step;
    emit(st.point);
  }
  write_output(dump_path, csv.str());
  return 0;
}

int run_buckle(const ModelSource& src) {
  require_model_source(src, "buckle");
  const TrussModel model = resolve_model(src);
  const StabilityPoint sp = critical_load(model, model.design_areas());
  std::ostringstream out;
  out << "{\n  \"lambda_c\": " << format_json_number(sp.lambda) << ",\n  \"kind\": \""
      << (sp.kind == StabilityPoint::Kind::limit ? "limit" : "bifurcation")
      << "\",\n  \"iterations\": " << sp.iterations << ",\n  \"x\": " << json_vector(sp.x)
      << ",\n  \"phi\": " << json_vector(sp.phi) << "\n}\n";
  std::fputs(out.str().c_str(), stdout);
  return 0;
}

int run_stats(const ModelSource& src, const std::optional<double>& sigma_flag, int n_modes,
              int samples, std::uint64_t seed, const std::string& dump_samples) {
  require_model_source(src, "stats");
  const TrussModel model = resolve_model(src);
  const double sigma = resolve_sigma(sigma_flag, src, "stats");
  const int m = checked_m(samples, "stats");
  const Eigen::VectorXd a = model.design_areas();
  const ModeBasis basis = linear_buckling_modes(model, a, n_modes);
  // Seeds select disjoint slices of the Sobol stream.
  const std::uint64_t skip = seed * static_cast<std::uint64_t>(2 * m);
  const BucklingStatistics stats = buckling_statistics(model, a, basis, sigma, m, skip);

  std::ostringstream out;
  out << "{\n  \"lambda_c0\": " << format_json_number(stats.lambda_c0)
      << ",\n  \"mean\": " << format_json_number(stats.mean)
      << ",\n  \"std\": " << format_json_number(stats.std_dev)
      << ",\n  \"n_samples\": " << stats.samples.size() << ",\n  \"flagged\": " << stats.n_flagged
      << "\n}\n";
  std::fputs(out.str().c_str(), stdout);

  if (!dump_samples.empty()) {
    std::ostringstream csv;
    for (int j = 0; j < n_modes; ++j) csv << "beta_" << j << ",";
    csv << "lambda_c\n";
    for (const auto& s : stats.samples) {
      for (int j = 0; j < n_modes; ++j) csv << format_csv_number(s.beta(j)) << ",";
      csv << format_csv_number(s.lambda_c) << "\n";
    }
    write_output(dump_samples, csv.str());
  }
  return 0;
}

std::string history_csv(const OptimizationHistory& hist) {
  std::ostringstream csv;
  const int ng = hist.evals.empty() ? 0 : static_cast<int>(hist.evals[0].a_full.size());
  csv << "evaluation,";
  for (int g = 0; g < ng; ++g) csv << "a_" << g << ",";
  csv << "g,mean,std,feasible,failed\n";
  for (std::size_t i = 0; i < hist.evals.size(); ++i) {
    const EvalRecord& e = hist.evals[i];
    csv << i << ",";
    for (int g = 0; g < ng; ++g)
      csv << (e.feasible ? format_csv_number(e.a_full(g)) : std::string("nan")) << ",";
    csv << format_csv_number(e.g) << "," << format_csv_number(e.mean) << ","
        << format_csv_number(e.std_dev) << "," << (e.feasible ? 1 : 0) << ","
        << (e.failed ? 1 : 0) << "\n";
  }
  return csv.str();
}

RobustProblem build_problem(const ModelSource& src, const std::optional<double>& sigma_flag,
                            int n_modes, int samples, double alpha, const char* cmd) {
  TrussModel model = resolve_model(src);
  const double sigma = resolve_sigma(sigma_flag, src, cmd);
  const int m = checked_m(samples, cmd);
  const Eigen::VectorXd sig = Eigen::VectorXd::Constant(n_modes, sigma);
  return make_robust_problem(std::move(model), n_modes, sig, m, alpha);
}

int run_optimize(const ModelSource& src, const std::optional<double>& sigma_flag, int n_modes,
                 int samples, double alpha, int budget, std::uint64_t seed,
                 const std::string& history_path) {
  require_model_source(src, "optimize");
  RobustProblem problem = build_problem(src, sigma_flag, n_modes, samples, alpha, "optimize");

  BoSettings bs;
  bs.budget = budget > 0 ? budget : default_budget(static_cast<int>(problem.lo.size()));
  bs.seed = seed;

  // The weighted objective mixes quantities of different scale, so for a
  // genuine trade-off each term is normalised by its attainable maximum.
  if (alpha > 0.0 && alpha < 1.0) {
    const Normalizers norms = compute_normalizers(problem, bs);
    problem.mean_norm = norms.mean_norm;
    problem.std_norm = norms.std_norm;
  }

  const OptimizationHistory hist = bayes_optimize(problem, bs);
  const EvalRecord& best = hist.best();

  if (!history_path.empty()) write_output(history_path, history_csv(hist));

  std::ostringstream out;
  out << "{\n  \"alpha\": " << format_json_number(alpha)
      << ",\n  \"a_opt\": " << json_vector(best.a_full)
      << ",\n  \"mean\": " << format_json_number(best.mean)
      << ",\n  \"std\": " << format_json_number(best.std_dev)
      << ",\n  \"g\": " << format_json_number(best.g)
      << ",\n  \"evaluations\": " << hist.n_evaluations() << ",\n  \"history_csv_path\": "
      << (history_path.empty() ? std::string("null") : "\"" + history_path + "\"") << "\n}\n";
  std::fputs(out.str().c_str(), stdout);
  return 0;
}

int run_pareto(const ModelSource& src, const std::optional<double>& sigma_flag, int n_modes,
               int samples, std::vector<double> alphas, int budget, std::uint64_t seed,
               int workers, const std::string& out_path) {
  require_model_source(src, "pareto");
  if (alphas.empty()) throw InputError("pareto: --alphas must name at least one weight");
  for (double alpha : alphas)
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw InputError("pareto: weights must lie in [0, 1]");
  if (workers < 1) throw InputError("pareto: --workers must be >= 1");

  RobustProblem problem = build_problem(src, sigma_flag, n_modes, samples, alphas.front(),
                                        "pareto");
  BoSettings bs;
  bs.budget = budget > 0 ? budget : default_budget(static_cast<int>(problem.lo.size()));
  bs.seed = seed;

  const Normalizers norms = compute_normalizers(problem, bs);
  problem.mean_norm = norms.mean_norm;
  problem.std_norm = norms.std_norm;

  const std::vector<ParetoRow> rows = pareto_sweep(problem, std::move(alphas), bs, workers);

  std::ostringstream csv;
  const int ng = problem.model.n_groups();
  csv << "alpha,mean,std";
  for (int g = 0; g < ng; ++g) csv << ",a_" << g;
  csv << "\n";
  for (const ParetoRow& row : rows) {
    if (!row.ok) log_warn("pareto: alpha = %g failed: %s", row.alpha, row.error.c_str());
    csv << format_csv_number(row.alpha) << "," << format_csv_number(row.mean) << ","
        << format_csv_number(row.std_dev);
    for (int g = 0; g < ng; ++g)
      csv << "," << (row.ok ? format_csv_number(row.a_opt(g)) : std::string("nan"));
    csv << "\n";
  }
  write_output(out_path, csv.str());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Buckling loads of geometrically nonlinear trusses under random imperfections"};
  app.require_subcommand(1);

  ModelSource src;
  std::string out_path;
  std::string dump_path;
  std::string dump_samples;
  std::string history_path;
  std::optional<double> sigma_beta;
  int n_modes = 1;
  int samples = 128;
  int max_steps = 200;
  double alpha = 0.5;
  int budget = 0;
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};

  auto* generate = app.add_subcommand("generate", "write a built-in example model");
  generate->add_option("--kind", src.kind, "von_mises, star_dome or truss_column")->required();
  add_generator_options(generate, src);
  generate->add_option("-o,--output", out_path, "output file (default stdout)");

  auto* analyze = app.add_subcommand("analyze", "trace the equilibrium path as CSV");
  add_model_source(analyze, src);
  analyze->add_option("--steps", max_steps, "maximum arc-length steps")
      ->check(CLI::PositiveNumber);
  analyze->add_option("--dump-path", dump_path, "CSV file (default stdout)");

  auto* buckle = app.add_subcommand("buckle", "first critical point as JSON");
  add_model_source(buckle, src);

  auto* stats = app.add_subcommand("stats", "buckling load statistics under imperfections");
  add_model_source(stats, src);
  stats->add_option("--sigma-beta", sigma_beta, "imperfection std (default per --kind)");
  stats->add_option("--modes", n_modes, "imperfection modes")->check(CLI::PositiveNumber);
  stats->add_option("--samples", samples, "total sample count 2m");
  stats->add_option("--seed", seed, "selects a disjoint sample set");
  stats->add_option("--dump-samples", dump_samples, "CSV of (beta..., lambda_c) rows");

  auto* optimize = app.add_subcommand("optimize", "robust sizing optimisation");
  add_model_source(optimize, src);
  optimize->add_option("--alpha", alpha, "weight: 1 = mean only, 0 = std only")
      ->check(CLI::Range(0.0, 1.0));
  optimize->add_option("--budget", budget, "evaluation budget (default by problem size)");
  optimize->add_option("--seed", seed, "rng seed")->required();
  optimize->add_option("--sigma-beta", sigma_beta, "imperfection std (default per --kind)");
  optimize->add_option("--modes", n_modes, "imperfection modes")->check(CLI::PositiveNumber);
  optimize->add_option("--samples", samples, "total sample count 2m");
  optimize->add_option("--history", history_path, "write the evaluation history CSV here");

  auto* pareto = app.add_subcommand("pareto", "sweep the mean/std trade-off");
  add_model_source(pareto, src);
  pareto->add_option("--alphas", alphas, "comma-separated weights")->delimiter(',');
  pareto->add_option("--budget", budget, "evaluation budget (default by problem size)");
  pareto->add_option("--seed", seed, "rng seed")->required();
  pareto->add_option("--sigma-beta", sigma_beta, "imperfection std (default per --kind)");
  pareto->add_option("--modes", n_modes, "imperfection modes")->check(CLI::PositiveNumber);
  pareto->add_option("--samples", samples, "total sample count 2m");
  pareto->add_option("--workers", workers, "parallel optimisations");
  pareto->add_option("-o,--output", out_path, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return run_generate(src, out_path);
    if (analyze->parsed()) return run_analyze(src, max_steps, dump_path);
    if (buckle->parsed()) return run_buckle(src);
    if (stats->parsed())
      return run_stats(src, sigma_beta, n_modes, samples, seed, dump_samples);
    if (optimize->parsed())
      return run_optimize(src, sigma_beta, n_modes, samples, alpha, budget, seed, history_path);
    if (pareto->parsed())
      return run_pareto(src, sigma_beta, n_modes, samples, alphas, budget, seed, workers,
                        out_path);
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const SolveError& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return 1;
  }
  return 0;
}
