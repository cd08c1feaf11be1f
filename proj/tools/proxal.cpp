// proxal: density-ratio-free doubly robust proxy causal learning CLI.
//
// Commands: generate, fit, benchmark, misspecify, tune, oracle-check.
// Exit codes: 0 success, 2 configuration error, 3 numeric failure.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "proxal/proxal.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace proxal;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct CliOverrides {
  std::string config_path;
  std::string out_dir;
  std::string method;
  std::int64_t seed = -1;
  std::int64_t t = -1;
  std::int64_t nystrom_p = -1;
  double jitter_sigma = -1.0;
  std::int64_t runs = -1;
};

json load_config(const CliOverrides& cli) {
  json cfg = json::object();
  if (!cli.config_path.empty()) {
    std::ifstream in(cli.config_path);
    if (!in) throw IoError("cannot read config: " + cli.config_path);
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      throw InvalidConfig(std::string("config parse error: ") + e.what());
    }
  }
  // Flags override file values.
  if (!cli.out_dir.empty()) cfg["output"]["dir"] = cli.out_dir;
  if (!cli.method.empty()) cfg["method"] = cli.method;
  if (cli.seed >= 0) cfg["data"]["synthetic"]["seed"] = cli.seed;
  if (cli.t >= 0) cfg["data"]["synthetic"]["t"] = cli.t;
  if (cli.nystrom_p >= 0) cfg["nystrom"]["p"] = cli.nystrom_p;
  if (cli.jitter_sigma >= 0.0) cfg["jitter"]["sigma"] = cli.jitter_sigma;
  if (cli.runs >= 0) cfg["benchmark"]["runs"] = cli.runs;
  return cfg;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidConfig("config field '" + key + "': " + e.what());
  }
}

Method parse_method(const std::string& name) {
  std::string s;
  for (char c : name) s.push_back(static_cast<char>(std::tolower(c)));
  if (s == "kpv") return Method::Kpv;
  if (s == "pmmr") return Method::Pmmr;
  if (s == "kap") return Method::Kap;
  if (s == "drkpv") return Method::DrKpv;
  if (s == "drpmmr") return Method::DrPmmr;
  throw InvalidConfig("method: expected one of kpv|pmmr|kap|drkpv|drpmmr, "
                      "got '" + name + "'");
}

LambdaSpec parse_lambda(const json& lambdas, const std::string& key) {
  if (!lambdas.is_object() || !lambdas.contains(key)) return LambdaSpec::tune();
  const json& v = lambdas.at(key);
  if (v.is_number()) {
    const double x = v.get<double>();
    if (!(x > 0.0))
      throw InvalidConfig("lambdas." + key + ": must be positive");
    return LambdaSpec::fixed(x);
  }
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "loocv" || s == "validation") return LambdaSpec::tune();
    throw InvalidConfig("lambdas." + key +
                        ": expected a number, \"loocv\", or \"validation\"");
  }
  throw InvalidConfig("lambdas." + key + ": unsupported value type");
}

std::optional<NystromConfig> parse_nystrom(const json& cfg) {
  if (!cfg.contains("nystrom") || cfg.at("nystrom").is_null()) return {};
  const json& n = cfg.at("nystrom");
  NystromConfig out;
  out.landmark_count = get_or<Eigen::Index>(n, "p", 0);
  out.seed = get_or<std::uint64_t>(n, "seed", 17);
  if (out.landmark_count < 1)
    throw InvalidConfig("nystrom.p: must be a positive landmark count");
  return out;
}

PipelineConfig parse_pipeline(const json& cfg) {
  PipelineConfig p;
  p.method = parse_method(get_or<std::string>(cfg, "method", "drkpv"));
  const json kernels = cfg.contains("kernels") ? cfg.at("kernels") : json::object();
  p.quantile = get_or<double>(kernels, "quantile", 0.5);
  if (!(p.quantile > 0.0 && p.quantile < 1.0))
    throw InvalidConfig("kernels.quantile: must lie in (0, 1)");
  p.columnwise_w = get_or<bool>(kernels, "columnwise_w", true);
  const json lambdas = cfg.contains("lambdas") ? cfg.at("lambdas") : json::object();
  p.h1 = parse_lambda(lambdas, "h1");
  p.h2 = parse_lambda(lambdas, "h2");
  p.phi1 = parse_lambda(lambdas, "phi1");
  p.phi2 = parse_lambda(lambdas, "phi2");
  p.phi3 = parse_lambda(lambdas, "phi3");
  p.mmr = parse_lambda(lambdas, "mmr");
  p.dr = parse_lambda(lambdas, "dr");
  p.sigma_phi = get_or<double>(lambdas, "sigma_phi", 1.0);
  p.nystrom = parse_nystrom(cfg);
  p.split_seed = get_or<std::uint64_t>(cfg, "split_seed", 1);
  return p;
}

ProxyDataset load_dataset(const json& cfg) {
  const json data = cfg.contains("data") ? cfg.at("data") : json::object();
  if (data.contains("csv")) {
    const json& c = data.at("csv");
    const auto path = get_or<std::string>(c, "path", "");
    if (path.empty()) throw InvalidConfig("data.csv.path: required");
    const auto schema = default_schema(get_or<Eigen::Index>(c, "d_a", 1),
                                       get_or<Eigen::Index>(c, "d_z", 2),
                                       get_or<Eigen::Index>(c, "d_w", 2));
    return load_csv(path, schema);
  }
  const json syn = data.contains("synthetic") ? data.at("synthetic") : json::object();
  const auto t = get_or<Eigen::Index>(syn, "t", 2000);
  const auto seed = get_or<std::uint64_t>(syn, "seed", 1);
  return gen_synthetic_lowdim(t, seed);
}

Vector resolve_grid(const json& cfg, const ProxyDataset& ds) {
  const json grid = cfg.contains("grid") ? cfg.at("grid") : json::object();
  if (grid.contains("values")) {
    const auto vals = grid.at("values").get<std::vector<double>>();
    if (vals.empty()) throw InvalidConfig("grid.values: nonempty required");
    return Eigen::Map<const Vector>(vals.data(),
                                    static_cast<Eigen::Index>(vals.size()));
  }
  return default_dose_grid(ds, get_or<Eigen::Index>(grid, "n_points", 10));
}

fs::path out_dir(const json& cfg) {
  const json output = cfg.contains("output") ? cfg.at("output") : json::object();
  return fs::path(get_or<std::string>(output, "dir", "out"));
}

std::string curve_csv(const DoseResponseCurve& curve) {
  const auto cell = [](const Vector& v, Eigen::Index i) {
    return v.size() > i ? fmt17(v[i]) : std::string();
  };
  std::ostringstream os;
  os << "a,theta1,theta2,theta3,theta_dr\n";
  for (Eigen::Index i = 0; i < curve.a_grid.size(); ++i)
    os << fmt17(curve.a_grid[i]) << ',' << cell(curve.theta1, i) << ','
       << cell(curve.theta2, i) << ',' << cell(curve.theta3, i) << ','
       << cell(curve.theta_dr, i) << '\n';
  return os.str();
}

json lambdas_json(const std::map<std::string, double>& lam) {
  json out = json::object();
  for (const auto& [k, v] : lam) out[k] = v;
  return out;
}

int cmd_generate(const json& cfg) {
  const ProxyDataset ds = load_dataset(cfg);
  const fs::path dir = out_dir(cfg);
  fs::create_directories(dir);
  {
    // save_csv writes in place; route through a temp file for atomicity.
    const fs::path tmp = dir / "dataset.csv.tmp";
    save_csv(tmp.string(), ds);
    fs::rename(tmp, dir / "dataset.csv");
  }
  const Vector grid = resolve_grid(cfg, ds);
  const json truth_cfg = cfg.contains("truth") ? cfg.at("truth") : json::object();
  const SyntheticTruth truth = true_dose_response(
      grid, get_or<Eigen::Index>(truth_cfg, "mc_samples", 1000000),
      get_or<std::uint64_t>(truth_cfg, "seed", 9001));
  std::ostringstream os;
  os << "a,theta_true,standard_error\n";
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    os << fmt17(grid[i]) << ',' << fmt17(truth.theta_true[i]) << ','
       << fmt17(truth.standard_error[i]) << '\n';
  atomic_write(dir / "truth.csv", os.str());
  std::cout << "wrote " << (dir / "dataset.csv").string() << " ("
            << ds.rows() << " rows) and " << (dir / "truth.csv").string()
            << "\n";
  return 0;
}

int cmd_fit(const json& cfg) {
  const ProxyDataset ds = load_dataset(cfg);
  const Vector grid = resolve_grid(cfg, ds);
  const PipelineConfig pcfg = parse_pipeline(cfg);
  const FitResult fit = fit_pipeline(ds, grid, pcfg);
  const fs::path dir = out_dir(cfg);
  atomic_write(dir / "curve.csv", curve_csv(fit.curve));
  json report;
  report["method"] = method_name(fit.curve.method);
  report["t"] = ds.rows();
  report["lambdas"] = lambdas_json(fit.resolved_lambdas);
  report["wall_seconds"] = fit.wall_seconds;
  atomic_write(dir / "report.json", report.dump(2) + "\n");
  std::cout << "wrote " << (dir / "curve.csv").string() << " and "
            << (dir / "report.json").string() << "\n";
  return 0;
}

int cmd_benchmark(const json& cfg) {
  const json b = cfg.contains("benchmark") ? cfg.at("benchmark") : json::object();
  BenchmarkConfig bcfg;
  bcfg.pipeline = parse_pipeline(cfg);
  if (b.contains("methods")) {
    bcfg.methods.clear();
    for (const auto& m : b.at("methods"))
      bcfg.methods.push_back(parse_method(m.get<std::string>()));
  } else if (cfg.contains("method")) {
    bcfg.methods = {parse_method(cfg.at("method").get<std::string>())};
  }
  if (b.contains("ts"))
    bcfg.sample_sizes = b.at("ts").get<std::vector<Eigen::Index>>();
  if (cfg.contains("data") && cfg.at("data").contains("synthetic") &&
      cfg.at("data").at("synthetic").contains("t"))
    bcfg.sample_sizes = {
        cfg.at("data").at("synthetic").at("t").get<Eigen::Index>()};
  const auto runs = get_or<int>(b, "runs", 10);
  if (runs < 1) throw InvalidConfig("benchmark.runs: must be >= 1");
  const auto seed0 = get_or<std::uint64_t>(b, "seed0", 1);
  bcfg.seeds.clear();
  for (int i = 0; i < runs; ++i) bcfg.seeds.push_back(seed0 + i);
  bcfg.grid_points = get_or<Eigen::Index>(b, "grid_points", 10);
  bcfg.truth_mc_samples = get_or<Eigen::Index>(b, "truth_mc_samples", 1000000);
  bcfg.truth_seed = get_or<std::uint64_t>(b, "truth_seed", 9001);

  const auto reports = run_benchmark(bcfg);
  const fs::path dir = out_dir(cfg);
  std::ostringstream os;
  os << "method,t,seed,mse,wall_seconds\n";
  for (const auto& r : reports) {
    os << method_name(r.method) << ',' << r.t << ',' << r.seed << ','
       << fmt17(r.mse) << ',' << fmt17(r.wall_seconds) << '\n';
    json cell;
    cell["method"] = method_name(r.method);
    cell["t"] = r.t;
    cell["seed"] = r.seed;
    cell["mse"] = r.mse;
    cell["wall_seconds"] = r.wall_seconds;
    cell["lambdas"] = lambdas_json(r.resolved_lambdas);
    cell["quantile"] = r.quantile;
    cell["truth_mc_samples"] = r.truth_mc_samples;
    cell["truth_seed"] = r.truth_seed;
    cell["a_grid"] = std::vector<double>(r.a_grid.data(),
                                         r.a_grid.data() + r.a_grid.size());
    cell["estimate"] = std::vector<double>(
        r.estimate.data(), r.estimate.data() + r.estimate.size());
    cell["truth"] = std::vector<double>(r.truth.data(),
                                        r.truth.data() + r.truth.size());
    std::ostringstream name;
    name << "cell_" << method_name(r.method) << "_t" << r.t << "_s" << r.seed
         << ".json";
    atomic_write(dir / name.str(), cell.dump(2) + "\n");
  }
  atomic_write(dir / "summary.csv", os.str());
  std::cout << "wrote " << reports.size() << " cells to " << dir.string()
            << "\n";
  return 0;
}

int cmd_misspecify(const json& cfg) {
  const ProxyDataset ds = load_dataset(cfg);
  const Vector grid = resolve_grid(cfg, ds);
  PipelineConfig pcfg = parse_pipeline(cfg);
  if (pcfg.method != Method::DrKpv && pcfg.method != Method::DrPmmr)
    throw InvalidConfig("misspecify: method must be drkpv or drpmmr");
  const json jit = cfg.contains("jitter") ? cfg.at("jitter") : json::object();
  const auto target = get_or<std::string>(jit, "target", "outcome");
  if (target != "outcome" && target != "treatment")
    throw InvalidConfig("jitter.target: expected outcome or treatment");
  const double sigma = get_or<double>(jit, "sigma", 0.2);
  if (sigma < 0.0) throw InvalidConfig("jitter.sigma: must be >= 0");
  const auto jitter_seed = get_or<std::uint64_t>(jit, "seed", 101);
  const int runs = get_or<int>(jit, "runs", 5);
  if (runs < 1) throw InvalidConfig("jitter.runs: must be >= 1");
  const json truth_cfg = cfg.contains("truth") ? cfg.at("truth") : json::object();
  const SyntheticTruth truth = true_dose_response(
      grid, get_or<Eigen::Index>(truth_cfg, "mc_samples", 1000000),
      get_or<std::uint64_t>(truth_cfg, "seed", 9001));

  // One clean fit, then paired jittered re-evaluations sharing the fit.
  const FitResult clean = fit_pipeline(ds, grid, pcfg);
  const auto& lam = clean.resolved_lambdas;
  const StageSplit split = split_stages(ds.rows(), pcfg.split_seed);
  const VariableKernels ok = detail::heuristic_kernels(ds, pcfg.quantile, false);
  const VariableKernels tk =
      detail::heuristic_kernels(ds, pcfg.quantile, pcfg.columnwise_w);
  OutcomeModel outcome =
      pcfg.method == Method::DrKpv
          ? OutcomeModel(kpv_fit(ds, split, ok, lam.at("lambda_h1"),
                                 lam.at("lambda_h2"), pcfg.nystrom))
          : OutcomeModel(pmmr_fit(ds, ok, lam.at("lambda_mmr")));
  KapModel treatment = kap_fit(ds, split, tk, lam.at("lambda_phi1"),
                               lam.at("lambda_phi2"), pcfg.nystrom);
  const double phi3 = lam.at("lambda_phi3");
  const double ldr = lam.at("lambda_dr");

  const auto n = grid.size();
  Vector dr_sum = Vector::Zero(n), dr_sq = Vector::Zero(n);
  Vector bridge_sum = Vector::Zero(n), bridge_sq = Vector::Zero(n);
  Vector slack_sum = Vector::Zero(n);
  for (int r = 0; r < runs; ++r) {
    const std::uint64_t seed = jitter_seed + static_cast<std::uint64_t>(r);
    OutcomeModel jit_outcome = outcome;
    KapModel jit_treatment = treatment;
    if (target == "outcome") {
      if (auto* kpv = std::get_if<KpvModel>(&jit_outcome))
        *kpv = jitter_bridge(*kpv, sigma, seed);
      else
        std::get<PmmrModel>(jit_outcome) =
            jitter_bridge(std::get<PmmrModel>(jit_outcome), sigma, seed);
    } else {
      jit_treatment = jitter_bridge(jit_treatment, sigma, seed);
    }
    DrEstimator est(ds, jit_outcome, jit_treatment, ldr, phi3, pcfg.nystrom);
    const DoseResponseCurve curve = est.dose_response(grid);
    dr_sum += curve.theta_dr;
    dr_sq += curve.theta_dr.cwiseProduct(curve.theta_dr);
    const Vector& bridge_only =
        target == "outcome" ? curve.theta1 : curve.theta2;
    bridge_sum += bridge_only;
    bridge_sq += bridge_only.cwiseProduct(bridge_only);
    slack_sum += curve.theta3;
  }
  const double rn = runs;
  const auto std_of = [rn](const Vector& sum, const Vector& sq) {
    return (sq / rn - (sum / rn).cwiseProduct(sum / rn))
        .cwiseMax(0.0)
        .cwiseSqrt();
  };
  const Vector dr_mean = dr_sum / rn, dr_std = std_of(dr_sum, dr_sq);
  const Vector bridge_mean = bridge_sum / rn,
               bridge_std = std_of(bridge_sum, bridge_sq);

  std::ostringstream os;
  os << "a,truth,dr_clean,dr_jittered,bridge_only_jittered,slack_jittered,"
        "dr_jittered_std,bridge_only_jittered_std\n";
  for (Eigen::Index i = 0; i < n; ++i)
    os << fmt17(grid[i]) << ',' << fmt17(truth.theta_true[i]) << ','
       << fmt17(clean.curve.theta_dr[i]) << ',' << fmt17(dr_mean[i]) << ','
       << fmt17(bridge_mean[i]) << ',' << fmt17(slack_sum[i] / rn) << ','
       << fmt17(dr_std[i]) << ',' << fmt17(bridge_std[i]) << '\n';
  const fs::path dir = out_dir(cfg);
  atomic_write(dir / "misspecify.csv", os.str());
  std::cout << "wrote " << (dir / "misspecify.csv").string() << "\n";
  return 0;
}

int cmd_tune(const json& cfg) {
  const ProxyDataset ds = load_dataset(cfg);
  PipelineConfig pcfg = parse_pipeline(cfg);
  // Force every lambda through its tuner and report the selections.
  pcfg.h1 = pcfg.h2 = pcfg.phi1 = pcfg.phi2 = pcfg.phi3 = pcfg.mmr = pcfg.dr =
      LambdaSpec::tune();
  const Vector grid = resolve_grid(cfg, ds);
  const FitResult fit = fit_pipeline(ds, grid, pcfg);
  json report;
  report["method"] = method_name(pcfg.method);
  report["lambdas"] = lambdas_json(fit.resolved_lambdas);
  const fs::path dir = out_dir(cfg);
  atomic_write(dir / "tune.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_oracle_check(const json& cfg) {
  const json o = cfg.contains("oracle") ? cfg.at("oracle") : json::object();
  const int worlds = get_or<int>(o, "worlds", 20);
  const auto seed = get_or<std::uint64_t>(o, "seed", 42);
  const OracleSuiteReport report = oracle_suite(worlds, seed);
  for (const auto& w : report.worlds)
    std::cout << "world seed=" << w.seed
              << " identification=" << fmt17(w.max_identification_deviation)
              << " outcome-robust=" << fmt17(w.max_outcome_robust_deviation)
              << " treatment-robust=" << fmt17(w.max_treatment_robust_deviation)
              << (w.passed ? " PASS" : " FAIL") << "\n";
  std::cout << (report.all_passed ? "all worlds passed"
                                  : "oracle check FAILED")
            << "\n";
  return report.all_passed ? 0 : kExitNumeric;
}

void apply_thread_cap() {
  if (const char* env = std::getenv("PROXAL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();
  CLI::App app{"Doubly robust proxy causal learning toolkit"};
  app.require_subcommand(1);

  CliOverrides cli;
  app.add_option("--config", cli.config_path, "JSON run configuration file");
  app.add_option("--out", cli.out_dir, "Output directory");
  app.add_option("--seed", cli.seed, "Data seed override");
  app.add_option("--method", cli.method,
                 "Estimator: kpv|pmmr|kap|drkpv|drpmmr");
  app.add_option("--t", cli.t, "Synthetic sample size override");
  app.add_option("--nystrom", cli.nystrom_p, "Nystrom landmark count");
  app.add_option("--jitter-sigma", cli.jitter_sigma,
                 "Bridge coefficient jitter std deviation");
  app.add_option("--runs", cli.runs, "Benchmark run count");

  auto* generate = app.add_subcommand("generate", "Write synthetic data+truth");
  auto* fit = app.add_subcommand("fit", "Fit one estimator, write the curve");
  auto* benchmark = app.add_subcommand("benchmark", "Seeded benchmark sweep");
  auto* misspecify =
      app.add_subcommand("misspecify", "Bridge-jitter robustness experiment");
  auto* tune = app.add_subcommand("tune", "Report tuned regularizers");
  auto* oracle =
      app.add_subcommand("oracle-check", "Discrete identification oracle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const json cfg = load_config(cli);
    if (generate->parsed()) return cmd_generate(cfg);
    if (fit->parsed()) return cmd_fit(cfg);
    if (benchmark->parsed()) return cmd_benchmark(cfg);
    if (misspecify->parsed()) return cmd_misspecify(cfg);
    if (tune->parsed()) return cmd_tune(cfg);
    if (oracle->parsed()) return cmd_oracle_check(cfg);
    return kExitConfig;
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingColumn& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NonNumericCell& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EmptyFile& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TooFewSamples& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}
