#include "kexfam/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kexfam/errors.hpp"
#include "kexfam/rng.hpp"
#include "kexfam/text.hpp"

namespace kexfam {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed roles for mix_seed(seed, dim, config tag, role).
enum SeedRole : std::uint64_t {
  kRoleTarget = 1,
  kRoleTuneTrain = 2,
  kRoleTuneVal = 3,
  kRoleTuneBasis = 4,
  kRoleTrialTrain = 5,
  kRoleTrialTest = 6,
  kRoleTrialBasis = 7,
};

struct Target {
  Dataset prototype;  // carries generator tag + params (incl. grid vertices)

  Dataset sample(Eigen::Index n, Eigen::Index d, std::uint64_t seed) const {
    if (prototype.generator == "ring")
      return sample_ring(n, d, std::get<RingParams>(prototype.params), seed);
    return sample_grid(n, d, std::get<GridParams>(prototype.params), seed);
  }
  TrueScoreFn score() const {
    const Dataset proto = prototype;
    return [proto](const Vec& x) { return dataset_true_score(proto, x); };
  }
};

Target make_target(const SweepConfig& config, Eigen::Index dim) {
  Target target;
  if (config.dataset == "ring") {
    target.prototype = sample_ring(1, dim, config.ring,
                                   mix_seed(config.seed, static_cast<std::uint64_t>(dim),
                                            0, kRoleTarget));
  } else if (config.dataset == "grid") {
    // Sampling once fixes the drawn vertices for every later sample.
    target.prototype = sample_grid(1, dim, config.grid,
                                   mix_seed(config.seed, static_cast<std::uint64_t>(dim),
                                            0, kRoleTarget));
  } else {
    throw input_error("bench: dataset must be 'ring' or 'grid', got '" +
                      config.dataset + "'");
  }
  return target;
}

struct EstimatorSetup {
  // Fits a model; also reports the solved system size and fit time.
  struct Outcome {
    ScoreModel model;
    Eigen::Index components = 0;
    double fit_seconds = 0.0;
  };
  std::function<Outcome(const Mat&, const KernelConfig&, double, std::uint64_t)> fit;
};

EstimatorSetup make_estimator(const std::string& name, Eigen::Index m,
                              const SweepConfig& config) {
  EstimatorSetup setup;
  FitOptions options;
  options.full_size_cap = config.full_size_cap;
  options.force = config.force;
  if (name == "full") {
    setup.fit = [options](const Mat& X, const KernelConfig& kernel, double lambda,
                          std::uint64_t) {
      auto result = fit_full(X, kernel, lambda, nullptr, options);
      return EstimatorSetup::Outcome{std::move(result.model),
                                     result.report.system_size,
                                     result.report.assembly_seconds +
                                         result.report.solve_seconds};
    };
  } else if (name == "nystrom" || name == "nystrom_d") {
    const bool global = name == "nystrom_d";
    FitOptions nys = options;
    nys.jitter = config.nystrom_jitter;
    setup.fit = [m, global, nys](const Mat& X, const KernelConfig& kernel,
                                 double lambda, std::uint64_t basis_seed) {
      const Eigen::Index points = std::min<Eigen::Index>(m, X.rows());
      const BasisSpec basis =
          global ? make_basis_global(X, points * X.cols(), basis_seed)
                 : make_basis_all(X, points, basis_seed);
      auto result = fit_nystrom(X, basis, kernel, lambda, nullptr, nys);
      return EstimatorSetup::Outcome{std::move(result.model),
                                     result.report.system_size,
                                     result.report.assembly_seconds +
                                         result.report.solve_seconds};
    };
  } else if (name == "lite") {
    const LiteReg reg = config.lite_reg;
    setup.fit = [m, reg, options](const Mat& X, const KernelConfig& kernel,
                                  double lambda, std::uint64_t basis_seed) {
      const Eigen::Index points = std::min<Eigen::Index>(m, X.rows());
      const Mat Y = make_basis_all(X, points, basis_seed).points;
      auto result = fit_lite(X, Y, kernel, lambda, reg, nullptr, options);
      return EstimatorSetup::Outcome{std::move(result.model),
                                     result.report.system_size,
                                     result.report.assembly_seconds +
                                         result.report.solve_seconds};
    };
  } else {
    throw input_error("bench: unknown estimator '" + name + "'");
  }
  return setup;
}

struct TunedParams {
  double sigma = kNaN;
  double lambda = kNaN;
  std::string failure;  // empty on success
};

TunedParams tune_configuration(const EstimatorSetup& setup, const Target& target,
                               const SweepConfig& config, Eigen::Index dim,
                               std::uint64_t cfg_tag) {
  TunedParams tuned;
  try {
    const auto seed_of = [&](std::uint64_t role) {
      return mix_seed(config.seed, static_cast<std::uint64_t>(dim), cfg_tag, role);
    };
    const Dataset train = target.sample(config.n_train, dim, seed_of(kRoleTuneTrain));
    const Dataset val = target.sample(config.n_val, dim, seed_of(kRoleTuneVal));
    Mat X(train.n() + val.n(), dim);
    X.topRows(train.n()) = train.points;
    X.bottomRows(val.n()) = val.points;

    GridSearchConfig gs;
    gs.sigma_grid = config.sigma_grid;
    gs.lambda_grid = config.lambda_grid;
    gs.criterion = config.criterion;
    if (config.criterion == TuneCriterion::fisher) gs.true_score = target.score();
    for (Eigen::Index r = 0; r < train.n(); ++r) gs.train_rows.push_back(r);
    for (Eigen::Index r = 0; r < val.n(); ++r) gs.val_rows.push_back(train.n() + r);

    const std::uint64_t basis_seed = seed_of(kRoleTuneBasis);
    const Fitter fitter = [&setup, basis_seed](const Mat& X_train,
                                               const KernelConfig& kernel,
                                               double lambda) {
      return setup.fit(X_train, kernel, lambda, basis_seed).model;
    };
    const GridSearchResult result = grid_search(fitter, X, gs);
    tuned.sigma = result.best_sigma;
    tuned.lambda = result.best_lambda;
  } catch (const std::exception& e) {
    tuned.failure = e.what();
  }
  return tuned;
}

std::string sanitize(std::string text) {
  std::replace(text.begin(), text.end(), ',', ';');
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

}  // namespace

std::vector<SweepRow> convergence_sweep(const SweepConfig& config) {
  if (config.dims.empty()) throw input_error("convergence_sweep: dims must be non-empty");
  if (config.estimators.empty())
    throw input_error("convergence_sweep: estimators must be non-empty");
  if (config.trials < 1) throw input_error("convergence_sweep: trials must be >= 1");

  std::vector<SweepRow> rows;
  for (const Eigen::Index dim : config.dims) {
    const Target target = make_target(config, dim);
    const TrueScoreFn truth = target.score();
    for (std::size_t e = 0; e < config.estimators.size(); ++e) {
      const std::string& name = config.estimators[e];
      const std::vector<Eigen::Index> ms =
          name == "full" ? std::vector<Eigen::Index>{0} : config.m_values;
      for (const Eigen::Index m : ms) {
        const std::uint64_t cfg_tag = (e + 1) * 1000000ull +
                                      static_cast<std::uint64_t>(m);
        const EstimatorSetup setup = make_estimator(name, m, config);
        const TunedParams tuned = tune_configuration(setup, target, config, dim, cfg_tag);
        for (Eigen::Index trial = 0; trial < config.trials; ++trial) {
          SweepRow row;
          row.dataset = config.dataset;
          row.dim = dim;
          row.estimator = name;
          row.m = m;
          row.trial = trial;
          row.sigma = tuned.sigma;
          row.lambda = tuned.lambda;
          row.fisher = kNaN;
          row.j_hat = kNaN;
          if (!tuned.failure.empty()) {
            row.status = "failed: tuning: " + sanitize(tuned.failure);
            rows.push_back(std::move(row));
            continue;
          }
          try {
            const auto seed_of = [&](std::uint64_t role) {
              return mix_seed(config.seed, static_cast<std::uint64_t>(dim),
                              cfg_tag + 997ull * static_cast<std::uint64_t>(trial + 1),
                              role);
            };
            const Dataset train =
                target.sample(config.n_train, dim, seed_of(kRoleTrialTrain));
            const Dataset test =
                target.sample(config.n_test, dim, seed_of(kRoleTrialTest));
            auto outcome = setup.fit(train.points, KernelConfig(tuned.sigma),
                                     tuned.lambda, seed_of(kRoleTrialBasis));
            row.components = outcome.components;
            row.fit_seconds = outcome.fit_seconds;
            row.fisher = fisher_divergence(outcome.model, test.points, truth);
            row.j_hat = j_hat(outcome.model, test.points);
            row.status = "ok";
          } catch (const std::exception& ex) {
            row.status = "failed: " + sanitize(ex.what());
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "dataset,dim,estimator,m,components,trial,sigma,lambda,fisher,j_hat,"
      "fit_seconds,status\n";
  for (const auto& row : rows) {
    out += row.dataset;
    out.push_back(',');
    out += std::to_string(row.dim);
    out.push_back(',');
    out += row.estimator;
    out.push_back(',');
    out += std::to_string(row.m);
    out.push_back(',');
    out += std::to_string(row.components);
    out.push_back(',');
    out += std::to_string(row.trial);
    out.push_back(',');
    out += double_to_string(row.sigma);
    out.push_back(',');
    out += double_to_string(row.lambda);
    out.push_back(',');
    out += double_to_string(row.fisher);
    out.push_back(',');
    out += double_to_string(row.j_hat);
    out.push_back(',');
    out += double_to_string(row.fit_seconds);
    out.push_back(',');
    out += row.status;
    out.push_back('\n');
  }
  return out;
}

std::vector<CompareRow> subsampling_compare(const SweepConfig& config) {
  if (config.dims.empty()) throw input_error("subsampling_compare: dims must be non-empty");
  if (config.m_values.empty())
    throw input_error("subsampling_compare: m_values must be non-empty");
  if (config.trials < 1) throw input_error("subsampling_compare: trials must be >= 1");

  const std::vector<std::string> variants{"all_components", "global"};
  std::vector<CompareRow> rows;
  for (const Eigen::Index dim : config.dims) {
    const Target target = make_target(config, dim);
    const TrueScoreFn truth = target.score();
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const std::string estimator = v == 0 ? "nystrom" : "nystrom_d";
      for (const Eigen::Index m : config.m_values) {
        const std::uint64_t cfg_tag = (v + 51) * 1000000ull +
                                      static_cast<std::uint64_t>(m);
        const EstimatorSetup setup = make_estimator(estimator, m, config);
        const TunedParams tuned = tune_configuration(setup, target, config, dim, cfg_tag);
        for (Eigen::Index trial = 0; trial < config.trials; ++trial) {
          CompareRow row;
          row.dataset = config.dataset;
          row.dim = dim;
          row.variant = variants[v];
          row.m = m;
          row.trial = trial;
          row.sigma = tuned.sigma;
          row.lambda = tuned.lambda;
          row.fisher = kNaN;
          if (!tuned.failure.empty()) {
            row.status = "failed: tuning: " + sanitize(tuned.failure);
            rows.push_back(std::move(row));
            continue;
          }
          try {
            const auto seed_of = [&](std::uint64_t role) {
              return mix_seed(config.seed, static_cast<std::uint64_t>(dim),
                              cfg_tag + 997ull * static_cast<std::uint64_t>(trial + 1),
                              role);
            };
            const Dataset train =
                target.sample(config.n_train, dim, seed_of(kRoleTrialTrain));
            const Dataset test =
                target.sample(config.n_test, dim, seed_of(kRoleTrialTest));
            auto outcome = setup.fit(train.points, KernelConfig(tuned.sigma),
                                     tuned.lambda, seed_of(kRoleTrialBasis));
            row.components = outcome.components;
            row.retained_points = outcome.model.basis.points.rows();
            row.fit_seconds = outcome.fit_seconds;
            row.fisher = fisher_divergence(outcome.model, test.points, truth);
            row.status = "ok";
          } catch (const std::exception& ex) {
            row.status = "failed: " + sanitize(ex.what());
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string out =
      "dataset,dim,variant,m,components,retained_points,trial,sigma,lambda,"
      "fisher,fit_seconds,status\n";
  for (const auto& row : rows) {
    out += row.dataset;
    out.push_back(',');
    out += std::to_string(row.dim);
    out.push_back(',');
    out += row.variant;
    out.push_back(',');
    out += std::to_string(row.m);
    out.push_back(',');
    out += std::to_string(row.components);
    out.push_back(',');
    out += std::to_string(row.retained_points);
    out.push_back(',');
    out += std::to_string(row.trial);
    out.push_back(',');
    out += double_to_string(row.sigma);
    out.push_back(',');
    out += double_to_string(row.lambda);
    out.push_back(',');
    out += double_to_string(row.fisher);
    out.push_back(',');
    out += double_to_string(row.fit_seconds);
    out.push_back(',');
    out += row.status;
    out.push_back('\n');
  }
  return out;
}

}  // namespace kexfam
