#ifndef PROXAL_EVALUATION_HPP
#define PROXAL_EVALUATION_HPP

#include <chrono>
#include <iostream>
#include <map>
#include <string>

#include "proxal/doubly_robust.hpp"
#include "proxal/synthetic.hpp"
#include "proxal/toy_world.hpp"

namespace proxal {

namespace detail {

inline double percentile(std::vector<double> sorted_values, double q) {
  const double pos = q * (static_cast<double>(sorted_values.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

}  // namespace detail

// Equally spaced grid between the empirical 10th and 90th percentiles of the
// observed (scalar) treatment.
inline Vector default_dose_grid(const ProxyDataset& ds,
                                Eigen::Index n_points) {
  if (ds.a.cols() != 1)
    throw MultiDimTreatmentNeedsExplicitGrid(
        "default_dose_grid: scalar treatments only; pass an explicit grid");
  if (n_points < 1) throw InvalidConfig("default_dose_grid: n_points >= 1");
  std::vector<double> a(ds.a.data(), ds.a.data() + ds.a.rows());
  std::sort(a.begin(), a.end());
  const double lo = detail::percentile(a, 0.10);
  const double hi = detail::percentile(a, 0.90);
  if (lo == hi)
    std::cerr << "warning: treatment has no spread; dose grid is degenerate\n";
  if (n_points == 1) return Vector::Constant(1, 0.5 * (lo + hi));
  Vector grid(n_points);
  for (Eigen::Index i = 0; i < n_points; ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) /
                       static_cast<double>(n_points - 1);
  return grid;
}

// The vector a consumer of the curve should score: the combined estimate for
// doubly robust methods, the single fitted component otherwise.
inline const Vector& curve_estimate(const DoseResponseCurve& curve) {
  switch (curve.method) {
    case Method::Kpv:
    case Method::Pmmr:
      return curve.theta1;
    case Method::Kap:
      return curve.theta2;
    case Method::DrKpv:
    case Method::DrPmmr:
      return curve.theta_dr;
  }
  return curve.theta_dr;
}

inline double mse(const Vector& estimate, const Vector& truth) {
  if (estimate.size() != truth.size() || estimate.size() == 0)
    throw GridMismatch("mse: estimate/truth grids differ");
  return (estimate - truth).squaredNorm() / static_cast<double>(truth.size());
}

inline double mse(const DoseResponseCurve& curve, const SyntheticTruth& truth) {
  if (curve.a_grid.size() != truth.dose_grid.size() ||
      (curve.a_grid - truth.dose_grid).cwiseAbs().maxCoeff() != 0.0)
    throw GridMismatch("mse: curve grid does not match truth grid");
  return mse(curve_estimate(curve), truth.theta_true);
}

// How each regularizer is resolved: a fixed value, or tuned by the
// closed-form LOOCV / validation procedure appropriate to its stage.
struct LambdaSpec {
  bool tuned = true;
  double value = 0.0;

  static LambdaSpec fixed(double v) { return LambdaSpec{false, v}; }
  static LambdaSpec tune() { return LambdaSpec{true, 0.0}; }
};

struct PipelineConfig {
  Method method = Method::DrKpv;
  double quantile = 0.5;          // median-heuristic quantile
  bool columnwise_w = true;       // columnwise Gaussian on W (treatment side)
  LambdaSpec h1, h2, phi1, phi2, phi3, mmr, dr;
  double sigma_phi = 1.0;
  std::vector<double> lambda_grid = log_lambda_grid();
  std::vector<double> mmr_grid = log_lambda_grid(5e-5, 1e-3, 25);
  double mmr_holdout = 0.10;
  std::optional<NystromConfig> nystrom;
  std::uint64_t split_seed = 1;
};

struct FitResult {
  DoseResponseCurve curve;
  std::map<std::string, double> resolved_lambdas;
  double wall_seconds = 0.0;
};

namespace detail {

inline VariableKernels heuristic_kernels(const ProxyDataset& ds,
                                         double quantile, bool columnwise_w) {
  VariableKernels k;
  k.a = KernelSpec::gaussian(median_heuristic(ds.a, quantile));
  k.z = KernelSpec::gaussian(median_heuristic(ds.z, quantile));
  k.w = columnwise_w
            ? KernelSpec::columnwise_gaussian(
                  columnwise_median_heuristic(ds.w, quantile))
            : KernelSpec::gaussian(median_heuristic(ds.w, quantile));
  return k;
}

}  // namespace detail

// End-to-end fit: median-heuristic kernels, stage split, per-stage lambda
// resolution, and the dose-response curve for the requested method.
inline FitResult fit_pipeline(const ProxyDataset& ds, const Vector& a_grid,
                              const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  ds.validate();
  FitResult result;
  const StageSplit split = split_stages(ds.rows(), cfg.split_seed);
  const VariableKernels outcome_kernels =
      detail::heuristic_kernels(ds, cfg.quantile, false);
  const VariableKernels treatment_kernels =
      detail::heuristic_kernels(ds, cfg.quantile, cfg.columnwise_w);
  auto& lam = result.resolved_lambdas;

  const bool wants_outcome = cfg.method != Method::Kap;
  const bool wants_treatment =
      cfg.method == Method::Kap || cfg.method == Method::DrKpv ||
      cfg.method == Method::DrPmmr;
  const bool wants_dr =
      cfg.method == Method::DrKpv || cfg.method == Method::DrPmmr;
  const bool uses_kpv =
      cfg.method == Method::Kpv || cfg.method == Method::DrKpv;

  std::optional<OutcomeModel> outcome;
  if (wants_outcome && uses_kpv) {
    const double l1 =
        cfg.h1.tuned
            ? tune_lambda_h1(ds, split, outcome_kernels, cfg.lambda_grid)
                  .selected_lambda()
            : cfg.h1.value;
    const double l2 =
        cfg.h2.tuned ? tune_lambda_h2(ds, split, outcome_kernels, l1,
                                      cfg.lambda_grid, cfg.nystrom)
                     : cfg.h2.value;
    lam["lambda_h1"] = l1;
    lam["lambda_h2"] = l2;
    outcome = kpv_fit(ds, split, outcome_kernels, l1, l2, cfg.nystrom);
  } else if (wants_outcome) {
    const double lm =
        cfg.mmr.tuned
            ? tune_lambda_mmr(ds, outcome_kernels, cfg.mmr_holdout,
                              cfg.split_seed + 1, cfg.mmr_grid)
            : cfg.mmr.value;
    lam["lambda_mmr"] = lm;
    outcome = pmmr_fit(ds, outcome_kernels, lm);
  }

  std::optional<KapModel> treatment;
  double phi3 = 0.0;
  if (wants_treatment) {
    const double p1 =
        cfg.phi1.tuned
            ? tune_lambda_phi1(ds, split, treatment_kernels, cfg.lambda_grid)
                  .selected_lambda()
            : cfg.phi1.value;
    const double p2 =
        cfg.phi2.tuned
            ? tune_lambda_phi2(ds, split, treatment_kernels, p1, cfg.sigma_phi,
                               cfg.lambda_grid, cfg.nystrom)
            : cfg.phi2.value;
    phi3 = cfg.phi3.tuned
               ? tune_lambda_phi3(ds, treatment_kernels, cfg.lambda_grid)
                     .selected_lambda()
               : cfg.phi3.value;
    lam["lambda_phi1"] = p1;
    lam["lambda_phi2"] = p2;
    lam["lambda_phi3"] = phi3;
    treatment = kap_fit(ds, split, treatment_kernels, p1, p2, cfg.nystrom);
  }

  if (wants_dr) {
    const double ldr =
        cfg.dr.tuned
            ? tune_lambda_dr(ds, outcome_kernels, cfg.lambda_grid)
                  .selected_lambda()
            : cfg.dr.value;
    lam["lambda_dr"] = ldr;
    DrEstimator est(ds, std::move(*outcome), std::move(*treatment), ldr, phi3,
                    cfg.nystrom);
    result.curve = est.dose_response(a_grid);
  } else if (cfg.method == Method::Kap) {
    result.curve.a_grid = a_grid;
    result.curve.method = Method::Kap;
    result.curve.theta2 =
        kap_dose_response(*treatment, Matrix(a_grid), phi3, cfg.nystrom);
  } else {
    result.curve.a_grid = a_grid;
    result.curve.method = cfg.method;
    if (const auto* kpv = std::get_if<KpvModel>(&*outcome))
      result.curve.theta1 = kpv_dose_response(*kpv, ds.w, Matrix(a_grid));
    else
      result.curve.theta1 = pmmr_dose_response(std::get<PmmrModel>(*outcome),
                                               ds.w, Matrix(a_grid));
  }

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

struct BenchmarkConfig {
  std::vector<Method> methods{Method::DrKpv};
  std::vector<Eigen::Index> sample_sizes{2000};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  Eigen::Index grid_points = 10;
  Vector explicit_grid;  // overrides the default grid when nonempty
  Eigen::Index truth_mc_samples = 1000000;
  std::uint64_t truth_seed = 9001;
  PipelineConfig pipeline;  // method field overridden per cell
};

struct BenchmarkReport {
  Method method = Method::DrKpv;
  Eigen::Index t = 0;
  std::uint64_t seed = 0;
  Vector a_grid;
  Vector estimate;
  Vector truth;
  double mse = 0.0;
  double wall_seconds = 0.0;
  std::map<std::string, double> resolved_lambdas;
  double quantile = 0.5;
  Eigen::Index truth_mc_samples = 0;
  std::uint64_t truth_seed = 0;
};

// One report per (method, t, seed), all scored on one shared grid against a
// single Monte Carlo truth so MSE differences reflect the estimators only.
inline std::vector<BenchmarkReport> run_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.methods.empty() || cfg.sample_sizes.empty() || cfg.seeds.empty())
    throw InvalidConfig("run_benchmark: methods/sample_sizes/seeds all "
                        "required nonempty");
  Vector grid = cfg.explicit_grid;
  if (grid.size() == 0) {
    const auto t_ref =
        *std::max_element(cfg.sample_sizes.begin(), cfg.sample_sizes.end());
    const ProxyDataset ref = gen_synthetic_lowdim(t_ref, cfg.seeds.front());
    grid = default_dose_grid(ref, cfg.grid_points);
  }
  const SyntheticTruth truth =
      true_dose_response(grid, cfg.truth_mc_samples, cfg.truth_seed);

  std::vector<BenchmarkReport> reports;
  for (const Method method : cfg.methods) {
    for (const Eigen::Index t : cfg.sample_sizes) {
      for (const std::uint64_t seed : cfg.seeds) {
        const ProxyDataset ds = gen_synthetic_lowdim(t, seed);
        PipelineConfig pcfg = cfg.pipeline;
        pcfg.method = method;
        pcfg.split_seed = seed + 1;
        const FitResult fit = fit_pipeline(ds, grid, pcfg);

        BenchmarkReport report;
        report.method = method;
        report.t = t;
        report.seed = seed;
        report.a_grid = grid;
        report.estimate = curve_estimate(fit.curve);
        report.truth = truth.theta_true;
        report.mse = mse(report.estimate, report.truth);
        report.wall_seconds = fit.wall_seconds;
        report.resolved_lambdas = fit.resolved_lambdas;
        report.quantile = pcfg.quantile;
        report.truth_mc_samples = cfg.truth_mc_samples;
        report.truth_seed = cfg.truth_seed;
        reports.push_back(std::move(report));
      }
    }
  }
  return reports;
}

struct OracleWorldResult {
  std::uint64_t seed = 0;
  double max_identification_deviation = 0.0;
  double max_outcome_robust_deviation = 0.0;
  double max_treatment_robust_deviation = 0.0;
  bool passed = false;
};

struct OracleSuiteReport {
  std::vector<OracleWorldResult> worlds;
  bool all_passed = false;
};

// Exhaustive identification checks on seeded discrete worlds: the combined
// estimator with exact bridges reproduces the true effect, and stays exact
// when either single bridge is replaced by an arbitrary perturbation.
inline OracleSuiteReport oracle_suite(int n_worlds, std::uint64_t seed,
                                      double tolerance = 1e-10) {
  if (n_worlds < 1) throw InvalidConfig("oracle_suite: n_worlds >= 1");
  OracleSuiteReport report;
  report.all_passed = true;
  for (int i = 0; i < n_worlds; ++i) {
    const std::uint64_t world_seed = seed + static_cast<std::uint64_t>(i);
    const DiscreteToyWorld world = DiscreteToyWorld::random(world_seed);
    Rng rng = make_rng(world_seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> perturb(-1.0, 1.0);
    DiscreteToyWorld::Table2 h_bad = world.exact_h();
    DiscreteToyWorld::Table2 phi_bad = world.exact_phi();
    for (int v = 0; v < 2; ++v)
      for (int a = 0; a < 2; ++a) {
        h_bad[v][a] += perturb(rng);
        phi_bad[v][a] += perturb(rng);
      }

    OracleWorldResult r;
    r.seed = world_seed;
    for (int a = 0; a < 2; ++a) {
      const double target = world.theta_ate(a);
      r.max_identification_deviation = std::max(
          r.max_identification_deviation,
          std::abs(world.dr_estimate(world.exact_h(), world.exact_phi(), a) -
                   target));
      // Outcome bridge broken, treatment bridge exact.
      r.max_outcome_robust_deviation = std::max(
          r.max_outcome_robust_deviation,
          std::abs(world.dr_estimate(h_bad, world.exact_phi(), a) - target));
      // Treatment bridge broken, outcome bridge exact.
      r.max_treatment_robust_deviation = std::max(
          r.max_treatment_robust_deviation,
          std::abs(world.dr_estimate(world.exact_h(), phi_bad, a) - target));
    }
    r.passed = r.max_identification_deviation <= tolerance &&
               r.max_outcome_robust_deviation <= tolerance &&
               r.max_treatment_robust_deviation <= tolerance;
    report.all_passed = report.all_passed && r.passed;
    report.worlds.push_back(r);
  }
  return report;
}

}  // namespace proxal

#endif  // PROXAL_EVALUATION_HPP
