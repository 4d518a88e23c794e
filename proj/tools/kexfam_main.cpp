// Command-line front end: dataset generation, fitting, evaluation,
// hyperparameter tuning, benchmark sweeps and HMC acceptance experiments.
//
// Exit codes: 0 success, 1 runtime failure (numerical/resource/evaluation or
// I/O), 2 usage error (bad flags, malformed inputs).  Failures print a
// machine-readable {"error": {"type", "message"}} document on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "kexfam/bench.hpp"
#include "kexfam/dataset.hpp"
#include "kexfam/errors.hpp"
#include "kexfam/fit.hpp"
#include "kexfam/hmc.hpp"
#include "kexfam/model.hpp"
#include "kexfam/objective.hpp"
#include "kexfam/rng.hpp"
#include "kexfam/version.hpp"

namespace {

using ojson = nlohmann::ordered_json;
using kexfam::Mat;
using kexfam::Vec;

// --- small I/O helpers -----------------------------------------------------

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kexfam::input_error("cannot open file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof())
    throw std::runtime_error("failed while reading '" + path + "'");
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

ojson parse_json(const std::string& text, const std::string& what) {
  try {
    return ojson::parse(text);
  } catch (const std::exception& e) {
    throw kexfam::input_error(what + ": invalid JSON: " + e.what());
  }
}

void print_json(const ojson& doc) { std::cout << doc.dump(2) << "\n"; }

// table.csv -> table.manifest.json (append when there is no .csv suffix).
std::string manifest_echo_path(const std::string& csv_path) {
  const std::string suffix = ".csv";
  if (csv_path.size() >= suffix.size() &&
      csv_path.compare(csv_path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return csv_path.substr(0, csv_path.size() - suffix.size()) + ".manifest.json";
  return csv_path + ".manifest.json";
}

// model.json -> model.grid.csv (append when there is no .json suffix).
std::string default_grid_path(const std::string& model_path) {
  const std::string suffix = ".json";
  if (model_path.size() >= suffix.size() &&
      model_path.compare(model_path.size() - suffix.size(), suffix.size(), suffix) ==
          0)
    return model_path.substr(0, model_path.size() - suffix.size()) + ".grid.csv";
  return model_path + ".grid.csv";
}

// --- dataset adapters --------------------------------------------------------

kexfam::TrueScoreFn analytic_score(const kexfam::Dataset& data) {
  if (!kexfam::has_true_score(data)) return nullptr;
  kexfam::Dataset meta = data;
  meta.points = Mat();  // the dispatchers only need the generator tag + params
  return [meta](const Vec& x) { return kexfam::dataset_true_score(meta, x); };
}

kexfam::LogDensityFn analytic_logp(const kexfam::Dataset& data) {
  kexfam::Dataset meta = data;
  meta.points = Mat();
  return [meta](const Vec& x) { return kexfam::dataset_log_density(meta, x); };
}

// --- estimator plumbing shared by fit/tune ----------------------------------

struct EstimatorOpts {
  std::string estimator;  // full | nystrom | nystrom_d | lite
  std::string basis_mode = "all_components";
  Eigen::Index m = 0;
  double p = 0.5;
  Eigen::Index ell = 0;
  Eigen::Index count = 0;
  std::string reg = "rkhs_norm";
  double jitter = 0.0;
  bool jitter_set = false;
  bool augment = false;
  bool force = false;
  Eigen::Index full_size_cap = 10000;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

struct TuneOpts {
  bool enabled = false;
  std::string criterion = "j_hat";
  std::vector<double> sigma_grid;
  std::vector<double> lambda_grid;
};

void add_estimator_flags(CLI::App* cmd, EstimatorOpts& opts) {
  cmd->add_option("--estimator", opts.estimator,
                  "Estimator: full, nystrom (subsampled basis points), nystrom_d "
                  "(subsampled derivative components over all points), lite "
                  "(plain kernel functions)")
      ->required()
      ->check(CLI::IsMember({"full", "nystrom", "nystrom_d", "lite"}));
  cmd->add_option("--basis", opts.basis_mode,
                  "Basis selection for nystrom: all_components, bernoulli, per_point")
      ->check(CLI::IsMember({"all_components", "bernoulli", "per_point"}));
  cmd->add_option("--m", opts.m,
                  "Basis points for nystrom/lite (clamped to the training size)");
  cmd->add_option("--p", opts.p, "Keep probability for --basis bernoulli");
  cmd->add_option("--ell", opts.ell, "Components per point for --basis per_point");
  cmd->add_option("--count", opts.count,
                  "Derivative components drawn by nystrom_d (clamped to n*d)");
  cmd->add_option("--reg", opts.reg, "Lite regularizer")
      ->check(CLI::IsMember({"rkhs_norm", "rkhs_plus_l2"}));
  cmd->add_option("--jitter", opts.jitter,
                  "Ridge added before inversion (nystrom/lite; defaults 1e-5/0)");
  cmd->add_flag("--augment", opts.augment,
                "Append second-derivative basis functions (nystrom family)");
  cmd->add_flag("--force", opts.force, "Allow full systems beyond --full-size-cap");
  cmd->add_option("--full-size-cap", opts.full_size_cap,
                  "Refuse full fits with n*d above this size unless --force");
  cmd->add_option("--seed", opts.seed,
                  "Seed for basis subsampling (required unless --estimator full)");
}

void validate_estimator_flags(const CLI::App* cmd, EstimatorOpts& opts) {
  opts.jitter_set = cmd->count("--jitter") > 0;
  opts.seed_set = cmd->count("--seed") > 0;
  const std::string& est = opts.estimator;
  auto reject = [&](const char* flag, const char* allowed) {
    if (cmd->count(flag) > 0)
      throw kexfam::input_error(std::string(flag) + " applies only to " + allowed +
                                ", not to estimator '" + est + "'");
  };
  if (est == "full") {
    reject("--m", "nystrom/lite");
    reject("--basis", "nystrom");
    reject("--p", "nystrom with --basis bernoulli");
    reject("--ell", "nystrom with --basis per_point");
    reject("--count", "nystrom_d");
    reject("--reg", "lite");
    reject("--jitter", "nystrom/nystrom_d/lite");
    reject("--augment", "nystrom/nystrom_d");
    reject("--seed", "estimators with basis subsampling");
    return;
  }
  if (!opts.seed_set)
    throw kexfam::input_error("--seed is required for estimator '" + est +
                              "' (basis subsampling must be reproducible)");
  if (est == "nystrom") {
    reject("--count", "nystrom_d");
    reject("--reg", "lite");
    if (opts.m < 1) throw kexfam::input_error("--m (>= 1) is required for nystrom");
    if (opts.basis_mode == "bernoulli" && cmd->count("--p") == 0)
      throw kexfam::input_error("--p is required for --basis bernoulli");
    if (opts.basis_mode == "per_point" && cmd->count("--ell") == 0)
      throw kexfam::input_error("--ell is required for --basis per_point");
    if (opts.basis_mode != "bernoulli") reject("--p", "--basis bernoulli");
    if (opts.basis_mode != "per_point") reject("--ell", "--basis per_point");
  } else if (est == "nystrom_d") {
    reject("--m", "nystrom/lite");
    reject("--basis", "nystrom");
    reject("--p", "nystrom with --basis bernoulli");
    reject("--ell", "nystrom with --basis per_point");
    reject("--reg", "lite");
    if (opts.count < 1)
      throw kexfam::input_error("--count (>= 1) is required for nystrom_d");
  } else {  // lite
    reject("--basis", "nystrom");
    reject("--p", "nystrom with --basis bernoulli");
    reject("--ell", "nystrom with --basis per_point");
    reject("--count", "nystrom_d");
    reject("--augment", "nystrom/nystrom_d");
    if (opts.m < 1) throw kexfam::input_error("--m (>= 1) is required for lite");
  }
}

using FitFn = std::function<kexfam::FitResult(const Mat&, const kexfam::KernelConfig&,
                                              double)>;

FitFn make_fit_fn(const EstimatorOpts& opts) {
  kexfam::FitOptions fo;
  if (opts.jitter_set) fo.jitter = opts.jitter;
  fo.force = opts.force;
  fo.full_size_cap = opts.full_size_cap;
  fo.augmented = opts.augment;

  if (opts.estimator == "full") {
    return [fo](const Mat& X, const kexfam::KernelConfig& k, double lambda) {
      return kexfam::fit_full(X, k, lambda, nullptr, fo);
    };
  }
  if (opts.estimator == "lite") {
    const kexfam::LiteReg reg = kexfam::lite_reg_from_string(opts.reg);
    return [fo, reg, opts](const Mat& X, const kexfam::KernelConfig& k,
                           double lambda) {
      const Eigen::Index m = std::min<Eigen::Index>(opts.m, X.rows());
      const Mat Y = kexfam::make_basis_all(X, m, opts.seed).points;
      return kexfam::fit_lite(X, Y, k, lambda, reg, nullptr, fo);
    };
  }
  if (opts.estimator == "nystrom_d") {
    return [fo, opts](const Mat& X, const kexfam::KernelConfig& k, double lambda) {
      const Eigen::Index count =
          std::min<Eigen::Index>(opts.count, X.rows() * X.cols());
      const kexfam::BasisSpec basis = kexfam::make_basis_global(X, count, opts.seed);
      return kexfam::fit_nystrom(X, basis, k, lambda, nullptr, fo);
    };
  }
  return [fo, opts](const Mat& X, const kexfam::KernelConfig& k, double lambda) {
    const Eigen::Index m = std::min<Eigen::Index>(opts.m, X.rows());
    kexfam::BasisSpec basis;
    if (opts.basis_mode == "bernoulli")
      basis = kexfam::make_basis_bernoulli(X, m, opts.p, opts.seed);
    else if (opts.basis_mode == "per_point")
      basis = kexfam::make_basis_per_point(X, m, opts.ell, opts.seed);
    else
      basis = kexfam::make_basis_all(X, m, opts.seed);
    return kexfam::fit_nystrom(X, basis, k, lambda, nullptr, fo);
  };
}

kexfam::GridSearchResult run_grid_search(const kexfam::Dataset& data,
                                         const FitFn& fit_fn, const TuneOpts& tune) {
  kexfam::GridSearchConfig gs;
  gs.sigma_grid = tune.sigma_grid;
  gs.lambda_grid = tune.lambda_grid;
  gs.criterion = kexfam::tune_criterion_from_string(tune.criterion);
  if (gs.criterion == kexfam::TuneCriterion::fisher) {
    gs.true_score = analytic_score(data);
    if (!gs.true_score)
      throw kexfam::input_error(
          "--criterion fisher needs a dataset whose sidecar records a generator "
          "with an analytic score (ring, grid or gaussian)");
  }
  const kexfam::Fitter fitter = [&fit_fn](const Mat& X_train,
                                          const kexfam::KernelConfig& k,
                                          double lambda) {
    return fit_fn(X_train, k, lambda).model;
  };
  return kexfam::grid_search(fitter, data.points, gs);
}

// --- generate ----------------------------------------------------------------

struct GenerateOpts {
  std::string kind;
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  std::uint64_t seed = 0;
  std::string output;
  std::vector<double> radii{1.0, 3.0, 5.0};
  double radial_std = 0.1;
  double noise_std = 0.1;
  std::vector<double> weights;
  double side = 4.0;
  double component_std = 1.0;
  double gauss_std = 1.0;
  std::vector<double> mean;
};

void run_generate(const GenerateOpts& opts) {
  kexfam::Dataset data;
  if (opts.kind == "ring") {
    kexfam::RingParams params;
    params.radii = opts.radii;
    params.radial_std = opts.radial_std;
    params.noise_std = opts.noise_std;
    params.weights = opts.weights;
    data = kexfam::sample_ring(opts.n, opts.d, params, opts.seed);
  } else if (opts.kind == "grid") {
    kexfam::GridParams params;
    params.side = opts.side;
    params.component_std = opts.component_std;
    params.weights = opts.weights;
    data = kexfam::sample_grid(opts.n, opts.d, params, opts.seed);
  } else {
    kexfam::GaussianParams params;
    params.std = opts.gauss_std;
    if (!opts.mean.empty())
      params.mean = Eigen::Map<const Vec>(opts.mean.data(),
                                          static_cast<Eigen::Index>(opts.mean.size()));
    data = kexfam::sample_gaussian(opts.n, opts.d, params, opts.seed);
  }
  kexfam::write_dataset(data, opts.output);

  ojson out;
  out["command"] = "generate";
  out["kind"] = opts.kind;
  out["n"] = data.n();
  out["d"] = data.d();
  out["seed"] = opts.seed;
  out["csv"] = opts.output;
  out["sidecar"] = kexfam::sidecar_path_for(opts.output);
  print_json(out);
}

// --- fit ----------------------------------------------------------------------

struct FitCmdOpts {
  std::string data_path;
  double sigma = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  std::string output;
  std::string report_path;
  std::string grid_path;
  EstimatorOpts est;
  TuneOpts tune;
};

void run_fit(const FitCmdOpts& opts) {
  const bool fixed = !std::isnan(opts.sigma) || !std::isnan(opts.lambda);
  if (opts.tune.enabled && fixed)
    throw kexfam::input_error("fit: choose either --sigma/--lambda or --tune");
  if (!opts.tune.enabled && (std::isnan(opts.sigma) || std::isnan(opts.lambda)))
    throw kexfam::input_error("fit: provide both --sigma and --lambda, or --tune");

  const kexfam::Dataset data = kexfam::load_dataset(opts.data_path);
  const FitFn fit_fn = make_fit_fn(opts.est);

  double sigma = opts.sigma;
  double lambda = opts.lambda;
  double best_value = std::numeric_limits<double>::quiet_NaN();
  std::string grid_csv_path;
  if (opts.tune.enabled) {
    const kexfam::GridSearchResult grid = run_grid_search(data, fit_fn, opts.tune);
    sigma = grid.best_sigma;
    lambda = grid.best_lambda;
    best_value = grid.best_value;
    grid_csv_path =
        opts.grid_path.empty() ? default_grid_path(opts.output) : opts.grid_path;
    write_text_file(grid_csv_path, kexfam::grid_table_csv(grid));
  }

  const kexfam::FitResult result =
      fit_fn(data.points, kexfam::KernelConfig(sigma), lambda);
  kexfam::save_model(result.model, opts.output);

  ojson out;
  out["command"] = "fit";
  out["estimator"] = opts.est.estimator;
  out["data"] = opts.data_path;
  out["n"] = data.n();
  out["d"] = data.d();
  out["sigma"] = sigma;
  out["lambda"] = lambda;
  out["tuned"] = opts.tune.enabled;
  if (opts.tune.enabled) {
    out["best_value"] = best_value;
    out["grid_csv"] = grid_csv_path;
  }
  out["system_size"] = result.report.system_size;
  out["effective_rank"] = result.report.effective_rank;
  out["residual_norm"] = result.report.residual_norm;
  out["jitter_used"] = result.report.jitter_used;
  out["model"] = opts.output;

  if (!opts.report_path.empty()) {
    ojson report = out;  // everything above plus version, seed and timings
    report["version"] = kexfam::kVersion;
    if (opts.est.seed_set) report["seed"] = opts.est.seed;
    report["assembly_seconds"] = result.report.assembly_seconds;
    report["solve_seconds"] = result.report.solve_seconds;
    write_text_file(opts.report_path, report.dump(2) + "\n");
  }
  print_json(out);
}

// --- eval ----------------------------------------------------------------------

struct EvalOpts {
  std::string model_path;
  std::string data_path;
  bool require_fisher = false;
};

void run_eval(const EvalOpts& opts) {
  const kexfam::ScoreModel model = kexfam::load_model(opts.model_path);
  const kexfam::Dataset data = kexfam::load_dataset(opts.data_path);
  if (model.dim() != data.d())
    throw kexfam::input_error("eval: model dimension " + std::to_string(model.dim()) +
                              " does not match data dimension " +
                              std::to_string(data.d()));

  const kexfam::TrueScoreFn truth = analytic_score(data);
  if (opts.require_fisher && !truth)
    throw kexfam::input_error(
        "eval: --fisher needs a dataset whose sidecar records a generator with an "
        "analytic score; '" + opts.data_path + "' has none");

  ojson out;
  out["command"] = "eval";
  out["model"] = opts.model_path;
  out["data"] = opts.data_path;
  out["n_test"] = data.n();
  if (truth) out["fisher"] = kexfam::fisher_divergence(model, data.points, truth);
  out["j_hat"] = kexfam::j_hat(model, data.points);
  out["conventions"] = ojson{{"half_factor", true}};
  print_json(out);
}

// --- tune ----------------------------------------------------------------------

struct TuneCmdOpts {
  std::string data_path;
  std::string output;
  EstimatorOpts est;
  TuneOpts tune;
};

void run_tune(const TuneCmdOpts& opts) {
  const kexfam::Dataset data = kexfam::load_dataset(opts.data_path);
  const FitFn fit_fn = make_fit_fn(opts.est);
  const kexfam::GridSearchResult grid = run_grid_search(data, fit_fn, opts.tune);

  Eigen::Index failed = 0;
  for (const auto& cell : grid.table)
    if (cell.status != "ok") ++failed;

  if (!opts.output.empty())
    write_text_file(opts.output, kexfam::grid_table_csv(grid));

  ojson out;
  out["command"] = "tune";
  out["estimator"] = opts.est.estimator;
  out["data"] = opts.data_path;
  out["criterion"] = opts.tune.criterion;
  out["best_sigma"] = grid.best_sigma;
  out["best_lambda"] = grid.best_lambda;
  out["best_value"] = grid.best_value;
  out["cells"] = grid.table.size();
  out["failed_cells"] = failed;
  if (!opts.output.empty()) out["grid_csv"] = opts.output;
  print_json(out);
}

// --- bench ----------------------------------------------------------------------

kexfam::RingParams ring_params_from_json(const ojson& j) {
  kexfam::RingParams p;
  p.radii = j.value("radii", p.radii);
  p.radial_std = j.value("radial_std", p.radial_std);
  p.noise_std = j.value("noise_std", p.noise_std);
  p.weights = j.value("weights", p.weights);
  return p;
}

kexfam::GridParams grid_params_from_json(const ojson& j) {
  kexfam::GridParams p;
  p.side = j.value("side", p.side);
  p.component_std = j.value("component_std", p.component_std);
  p.weights = j.value("weights", p.weights);
  return p;
}

void check_known_keys(const ojson& j, const std::vector<std::string>& allowed,
                      const std::string& what) {
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw kexfam::input_error(what + ": unknown key '" + item.key() + "'");
  }
}

ojson ring_params_to_json(const kexfam::RingParams& p) {
  return ojson{{"radii", p.radii},
               {"radial_std", p.radial_std},
               {"noise_std", p.noise_std},
               {"weights", p.weights}};
}

ojson grid_params_to_json(const kexfam::GridParams& p) {
  return ojson{{"side", p.side},
               {"component_std", p.component_std},
               {"weights", p.weights}};
}

struct BenchOpts {
  std::string manifest_path;
  std::string output;
};

void run_bench(const BenchOpts& opts) {
  const ojson manifest =
      parse_json(read_text_file(opts.manifest_path), "bench manifest");
  check_known_keys(manifest,
                   {"mode", "dataset", "dims", "n_train", "n_val", "n_test",
                    "estimators", "m_values", "trials", "seed", "criterion",
                    "sigma_grid", "lambda_grid", "full_size_cap", "force",
                    "nystrom_jitter", "lite_reg", "ring", "grid"},
                   "bench manifest");
  if (!manifest.contains("seed"))
    throw kexfam::input_error("bench manifest: explicit 'seed' is required");

  const std::string mode = manifest.value("mode", std::string("sweep"));
  if (mode != "sweep" && mode != "compare")
    throw kexfam::input_error("bench manifest: mode must be 'sweep' or 'compare'");

  kexfam::SweepConfig cfg;
  cfg.dataset = manifest.value("dataset", cfg.dataset);
  cfg.dims = manifest.value("dims", cfg.dims);
  cfg.n_train = manifest.value("n_train", cfg.n_train);
  cfg.n_val = manifest.value("n_val", cfg.n_val);
  cfg.n_test = manifest.value("n_test", cfg.n_test);
  cfg.estimators = manifest.value("estimators", cfg.estimators);
  cfg.m_values = manifest.value("m_values", cfg.m_values);
  cfg.trials = manifest.value("trials", cfg.trials);
  cfg.seed = manifest.at("seed").get<std::uint64_t>();
  cfg.criterion = kexfam::tune_criterion_from_string(
      manifest.value("criterion", to_string(cfg.criterion)));
  cfg.sigma_grid = manifest.value("sigma_grid", cfg.sigma_grid);
  cfg.lambda_grid = manifest.value("lambda_grid", cfg.lambda_grid);
  cfg.full_size_cap = manifest.value("full_size_cap", cfg.full_size_cap);
  cfg.force = manifest.value("force", cfg.force);
  cfg.nystrom_jitter = manifest.value("nystrom_jitter", cfg.nystrom_jitter);
  cfg.lite_reg =
      kexfam::lite_reg_from_string(manifest.value("lite_reg", to_string(cfg.lite_reg)));
  if (manifest.contains("ring")) cfg.ring = ring_params_from_json(manifest.at("ring"));
  if (manifest.contains("grid")) cfg.grid = grid_params_from_json(manifest.at("grid"));

  std::string csv;
  std::size_t rows = 0;
  std::size_t failed = 0;
  if (mode == "sweep") {
    const auto table = kexfam::convergence_sweep(cfg);
    csv = kexfam::sweep_csv(table);
    rows = table.size();
    for (const auto& row : table)
      if (row.status != "ok") ++failed;
  } else {
    const auto table = kexfam::subsampling_compare(cfg);
    csv = kexfam::compare_csv(table);
    rows = table.size();
    for (const auto& row : table)
      if (row.status != "ok") ++failed;
  }
  write_text_file(opts.output, csv);

  ojson echo;
  echo["command"] = "bench";
  echo["mode"] = mode;
  echo["version"] = kexfam::kVersion;
  echo["seed"] = cfg.seed;
  echo["output"] = opts.output;
  echo["rows"] = rows;
  echo["failed_rows"] = failed;
  ojson config;
  config["dataset"] = cfg.dataset;
  config["dims"] = cfg.dims;
  config["n_train"] = cfg.n_train;
  config["n_val"] = cfg.n_val;
  config["n_test"] = cfg.n_test;
  config["estimators"] = cfg.estimators;
  config["m_values"] = cfg.m_values;
  config["trials"] = cfg.trials;
  config["criterion"] = to_string(cfg.criterion);
  config["sigma_grid"] = cfg.sigma_grid;
  config["lambda_grid"] = cfg.lambda_grid;
  config["full_size_cap"] = cfg.full_size_cap;
  config["force"] = cfg.force;
  config["nystrom_jitter"] = cfg.nystrom_jitter;
  config["lite_reg"] = to_string(cfg.lite_reg);
  config["ring"] = ring_params_to_json(cfg.ring);
  config["grid"] = grid_params_to_json(cfg.grid);
  echo["config"] = config;
  write_text_file(manifest_echo_path(opts.output), echo.dump(2) + "\n");
  print_json(echo);

  if (rows > 0 && failed == rows)
    throw kexfam::numerical_error("bench: all " + std::to_string(rows) +
                                  " rows failed; see " + opts.output);
}

// --- hmc ----------------------------------------------------------------------

struct HmcOpts {
  std::string manifest_path;
  std::string output;
};

void run_hmc(const HmcOpts& opts) {
  const ojson manifest = parse_json(read_text_file(opts.manifest_path), "hmc manifest");
  check_known_keys(manifest,
                   {"seed", "target", "fields", "num_steps", "step_size",
                    "repetitions", "n_starts", "starts_csv"},
                   "hmc manifest");
  if (!manifest.contains("seed"))
    throw kexfam::input_error("hmc manifest: explicit 'seed' is required");
  if (!manifest.contains("target"))
    throw kexfam::input_error("hmc manifest: 'target' is required");
  if (!manifest.contains("fields") || !manifest.at("fields").is_array() ||
      manifest.at("fields").empty())
    throw kexfam::input_error("hmc manifest: non-empty 'fields' array is required");

  const std::uint64_t seed = manifest.at("seed").get<std::uint64_t>();

  // Target: a prototype dataset fixes the generator tag and parameters
  // (including grid vertices, drawn once from the seed).
  const ojson& tj = manifest.at("target");
  check_known_keys(tj,
                   {"kind", "d", "std", "mean", "radii", "radial_std", "noise_std",
                    "weights", "side", "component_std"},
                   "hmc manifest target");
  const std::string kind = tj.value("kind", std::string());
  const Eigen::Index d = tj.value("d", Eigen::Index(0));
  if (d < 1) throw kexfam::input_error("hmc manifest target: 'd' (>= 1) is required");
  kexfam::Dataset proto;
  const std::uint64_t target_seed = kexfam::mix_seed(seed, 1);
  if (kind == "gaussian") {
    kexfam::GaussianParams params;
    params.std = tj.value("std", params.std);
    if (tj.contains("mean")) {
      const auto mean = tj.at("mean").get<std::vector<double>>();
      params.mean = Eigen::Map<const Vec>(mean.data(),
                                          static_cast<Eigen::Index>(mean.size()));
    }
    proto = kexfam::sample_gaussian(1, d, params, target_seed);
  } else if (kind == "ring") {
    proto = kexfam::sample_ring(1, d, ring_params_from_json(tj), target_seed);
  } else if (kind == "grid") {
    proto = kexfam::sample_grid(1, d, grid_params_from_json(tj), target_seed);
  } else {
    throw kexfam::input_error(
        "hmc manifest target: kind must be gaussian, ring or grid");
  }
  const kexfam::TrueScoreFn target_score = analytic_score(proto);
  const kexfam::LogDensityFn target_logp = analytic_logp(proto);

  // Start points: sampled from the target, or loaded from a CSV.
  Mat starts;
  if (manifest.contains("starts_csv")) {
    if (manifest.contains("n_starts"))
      throw kexfam::input_error("hmc manifest: give 'n_starts' or 'starts_csv', not both");
    starts = kexfam::read_points_csv(manifest.at("starts_csv").get<std::string>());
    if (starts.cols() != d)
      throw kexfam::input_error("hmc manifest: starts_csv dimension " +
                                std::to_string(starts.cols()) +
                                " does not match target d " + std::to_string(d));
  } else {
    const Eigen::Index n_starts = manifest.value("n_starts", Eigen::Index(10));
    kexfam::Dataset draw;
    const std::uint64_t starts_seed = kexfam::mix_seed(seed, 2);
    if (kind == "gaussian")
      draw = kexfam::sample_gaussian(n_starts, d,
                                     std::get<kexfam::GaussianParams>(proto.params),
                                     starts_seed);
    else if (kind == "ring")
      draw = kexfam::sample_ring(n_starts, d,
                                 std::get<kexfam::RingParams>(proto.params),
                                 starts_seed);
    else
      draw = kexfam::sample_grid(n_starts, d,
                                 std::get<kexfam::GridParams>(proto.params),
                                 starts_seed);
    starts = draw.points;
  }

  // Score fields entering the comparison.
  std::vector<kexfam::ScoreField> fields;
  ojson fields_echo = ojson::array();
  for (const auto& fj : manifest.at("fields")) {
    check_known_keys(fj, {"id", "type", "path"}, "hmc manifest field");
    kexfam::ScoreField field;
    field.id = fj.value("id", std::string());
    const std::string type = fj.value("type", std::string());
    if (field.id.empty())
      throw kexfam::input_error("hmc manifest field: 'id' is required");
    ojson fe{{"id", field.id}, {"type", type}};
    if (type == "exact") {
      field.score = target_score;
    } else if (type == "zero") {
      field.score = [](const Vec& x) { return Vec(Vec::Zero(x.size())); };
    } else if (type == "model") {
      if (!fj.contains("path"))
        throw kexfam::input_error("hmc manifest field '" + field.id +
                                  "': 'path' is required for type model");
      const std::string path = fj.at("path").get<std::string>();
      const kexfam::ScoreModel model = kexfam::load_model(path);
      if (model.dim() != d)
        throw kexfam::input_error("hmc manifest field '" + field.id +
                                  "': model dimension " + std::to_string(model.dim()) +
                                  " does not match target d " + std::to_string(d));
      field.score = [model](const Vec& x) { return model.score(x); };
      fe["path"] = path;
    } else {
      throw kexfam::input_error("hmc manifest field '" + field.id +
                                "': type must be exact, zero or model");
    }
    fields.push_back(std::move(field));
    fields_echo.push_back(std::move(fe));
  }

  kexfam::HmcConfig cfg;
  cfg.num_steps = manifest.value("num_steps", cfg.num_steps);
  cfg.step_size = manifest.value("step_size", cfg.step_size);
  const Eigen::Index repetitions = manifest.value("repetitions", Eigen::Index(10));

  const auto table =
      kexfam::acceptance_experiment(fields, target_logp, starts, cfg, repetitions, seed);
  write_text_file(opts.output, kexfam::acceptance_table_csv(table));

  ojson echo;
  echo["command"] = "hmc";
  echo["version"] = kexfam::kVersion;
  echo["seed"] = seed;
  echo["output"] = opts.output;
  ojson config;
  config["target"] = ojson{{"kind", kind}, {"d", d}};
  if (kind == "gaussian") {
    const auto& gp = std::get<kexfam::GaussianParams>(proto.params);
    config["target"]["std"] = gp.std;
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    if (gp.mean.size() > 0)
      for (Eigen::Index i = 0; i < gp.mean.size(); ++i)
        mean[static_cast<std::size_t>(i)] = gp.mean(i);
    config["target"]["mean"] = mean;
  } else if (kind == "ring") {
    config["target"].update(ring_params_to_json(std::get<kexfam::RingParams>(proto.params)));
  } else {
    config["target"].update(grid_params_to_json(std::get<kexfam::GridParams>(proto.params)));
  }
  config["fields"] = fields_echo;
  config["num_steps"] = cfg.num_steps;
  config["step_size"] = cfg.step_size;
  config["repetitions"] = repetitions;
  config["n_starts"] = starts.rows();
  echo["config"] = config;
  ojson rows = ojson::array();
  for (const auto& row : table)
    rows.push_back(ojson{{"id", row.id},
                         {"mean_acceptance", row.mean_acceptance},
                         {"q05", row.q05},
                         {"q95", row.q95},
                         {"runs", row.runs},
                         {"truncated_runs", row.truncated_runs}});
  echo["rows"] = rows;
  write_text_file(manifest_echo_path(opts.output), echo.dump(2) + "\n");
  print_json(echo);
}

int error_exit(const char* type, const std::string& message, int code) {
  ojson err;
  err["error"] = ojson{{"type", type}, {"message", message}};
  std::cerr << err.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score matching in kernel exponential families"};
  app.set_version_flag("--version", std::string(kexfam::kVersion));
  app.require_subcommand(1);

  // generate
  GenerateOpts gen;
  auto* generate = app.add_subcommand(
      "generate", "Sample a synthetic dataset; writes a CSV plus a JSON sidecar "
                  "recording the generator, seed and parameters");
  generate->add_option("kind", gen.kind, "Generator: ring, grid or gaussian")
      ->required()
      ->check(CLI::IsMember({"ring", "grid", "gaussian"}));
  generate->add_option("--n", gen.n, "Number of points")->required();
  generate->add_option("--d", gen.d, "Dimension")->required();
  generate->add_option("--seed", gen.seed, "Sampling seed")->required();
  generate->add_option("-o,--output", gen.output, "Output CSV path")->required();
  generate->add_option("--radii", gen.radii, "Ring radii (comma separated)")
      ->delimiter(',');
  generate->add_option("--radial-std", gen.radial_std, "Ring radial noise std");
  generate->add_option("--noise-std", gen.noise_std,
                       "Ring std of coordinates beyond the first two");
  generate->add_option("--weights", gen.weights,
                       "Mixture weights (comma separated; default uniform)")
      ->delimiter(',');
  generate->add_option("--side", gen.side, "Grid hypercube side length");
  generate->add_option("--component-std", gen.component_std,
                       "Grid mixture component std");
  generate->add_option("--std", gen.gauss_std, "Gaussian std");
  generate->add_option("--mean", gen.mean, "Gaussian mean (comma separated)")
      ->delimiter(',');
  generate->callback([&gen]() { run_generate(gen); });

  // fit
  FitCmdOpts fit;
  auto* fit_cmd = app.add_subcommand(
      "fit", "Fit a score model on a dataset CSV and write it as JSON; with "
             "--tune, hyperparameters are selected by grid search on a "
             "train/validation split, then the model is refit on all rows");
  fit_cmd->add_option("--data", fit.data_path, "Training dataset CSV")->required();
  fit_cmd->add_option("--sigma", fit.sigma, "Kernel width (squared length scale)");
  fit_cmd->add_option("--lambda", fit.lambda, "Regularization strength");
  fit_cmd->add_flag("--tune", fit.tune.enabled,
                    "Select sigma/lambda by validation grid search");
  fit_cmd->add_option("--criterion", fit.tune.criterion,
                      "Tuning criterion: j_hat or fisher (fisher needs an "
                      "analytic-score sidecar)")
      ->check(CLI::IsMember({"j_hat", "fisher"}));
  fit_cmd->add_option("--sigma-grid", fit.tune.sigma_grid,
                      "Tuning grid for sigma (default: median heuristic times powers of 2)")
      ->delimiter(',');
  fit_cmd->add_option("--lambda-grid", fit.tune.lambda_grid,
                      "Tuning grid for lambda (default: 1e-6 to 1, log-spaced)")
      ->delimiter(',');
  fit_cmd->add_option("-o,--output", fit.output, "Output model JSON path")->required();
  fit_cmd->add_option("--report", fit.report_path,
                      "Also write a fit report JSON (includes timings)");
  fit_cmd->add_option("--grid-out", fit.grid_path,
                      "Grid-search CSV path (default: model path with .grid.csv)");
  add_estimator_flags(fit_cmd, fit.est);
  fit_cmd->callback([&fit, fit_cmd]() {
    validate_estimator_flags(fit_cmd, fit.est);
    run_fit(fit);
  });

  // eval
  EvalOpts eval;
  auto* eval_cmd = app.add_subcommand(
      "eval", "Evaluate a model on a dataset: prints the pointwise objective "
              "and, when the dataset records a generator with an analytic "
              "score, the Fisher divergence (with the 1/2 factor)");
  eval_cmd->add_option("--model", eval.model_path, "Model JSON path")->required();
  eval_cmd->add_option("--data", eval.data_path, "Evaluation dataset CSV")->required();
  eval_cmd->add_flag("--fisher", eval.require_fisher,
                     "Fail if the dataset has no analytic score to compare against");
  eval_cmd->callback([&eval]() { run_eval(eval); });

  // tune
  TuneCmdOpts tune;
  auto* tune_cmd = app.add_subcommand(
      "tune", "Grid-search sigma/lambda on a train/validation split and report "
              "the best cell without writing a model");
  tune_cmd->add_option("--data", tune.data_path, "Dataset CSV")->required();
  tune_cmd->add_option("--criterion", tune.tune.criterion,
                       "Tuning criterion: j_hat or fisher")
      ->check(CLI::IsMember({"j_hat", "fisher"}));
  tune_cmd->add_option("--sigma-grid", tune.tune.sigma_grid, "Sigma grid")
      ->delimiter(',');
  tune_cmd->add_option("--lambda-grid", tune.tune.lambda_grid, "Lambda grid")
      ->delimiter(',');
  tune_cmd->add_option("-o,--output", tune.output, "Grid table CSV path");
  add_estimator_flags(tune_cmd, tune.est);
  tune_cmd->callback([&tune, tune_cmd]() {
    tune.tune.enabled = true;
    validate_estimator_flags(tune_cmd, tune.est);
    run_tune(tune);
  });

  // bench
  BenchOpts bench;
  auto* bench_cmd = app.add_subcommand(
      "bench", "Run a benchmark manifest (JSON): accuracy/cost sweep or "
               "point-versus-component subsampling comparison; writes a CSV "
               "table plus a manifest echo with the library version");
  bench_cmd->add_option("--manifest", bench.manifest_path, "Manifest JSON path")
      ->required();
  bench_cmd->add_option("-o,--output", bench.output, "Output CSV path")->required();
  bench_cmd->callback([&bench]() { run_bench(bench); });

  // hmc
  HmcOpts hmc;
  auto* hmc_cmd = app.add_subcommand(
      "hmc", "Run a surrogate-score HMC acceptance experiment from a manifest "
             "(JSON); writes the acceptance table CSV plus a manifest echo");
  hmc_cmd->add_option("--manifest", hmc.manifest_path, "Manifest JSON path")
      ->required();
  hmc_cmd->add_option("-o,--output", hmc.output, "Output CSV path")->required();
  hmc_cmd->callback([&hmc]() { run_hmc(hmc); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return error_exit("usage", e.what(), 2);
  } catch (const kexfam::input_error& e) {
    return error_exit("input_error", e.what(), 2);
  } catch (const kexfam::numerical_error& e) {
    return error_exit("numerical_error", e.what(), 1);
  } catch (const kexfam::resource_error& e) {
    return error_exit("resource_error", e.what(), 1);
  } catch (const kexfam::evaluation_error& e) {
    return error_exit("evaluation_error", e.what(), 1);
  } catch (const std::exception& e) {
    return error_exit("runtime_error", e.what(), 1);
  }
  return 0;
}
