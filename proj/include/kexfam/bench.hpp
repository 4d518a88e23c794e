#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kexfam/dataset.hpp"
#include "kexfam/fit.hpp"
#include "kexfam/objective.hpp"

namespace kexfam {

// Shared configuration for the benchmark drivers.  Each (dim, estimator,
// basis size) configuration is tuned once by grid search on a dedicated
// tuning sample, then evaluated over independent trials with fresh
// training and test samples.  All seeds derive deterministically from
// `seed`; cells run sequentially so timings are single-threaded.
struct SweepConfig {
  std::string dataset = "ring";  // "ring" or "grid"
  RingParams ring;
  GridParams grid;  // vertices are drawn once per dimension
  std::vector<Eigen::Index> dims{2};
  Eigen::Index n_train = 500;
  Eigen::Index n_val = 500;
  Eigen::Index n_test = 5000;
  // Estimators: "full", "nystrom" (point subsampling, all components),
  // "nystrom_d" (component subsampling over the full index grid), "lite".
  std::vector<std::string> estimators{"full", "nystrom"};
  // Basis sizes for the subsampled estimators: points for nystrom/lite,
  // times d components for nystrom_d.  Ignored by "full".
  std::vector<Eigen::Index> m_values{50};
  Eigen::Index trials = 10;
  std::uint64_t seed = 0;
  TuneCriterion criterion = TuneCriterion::fisher;
  std::vector<double> sigma_grid;   // empty = default per tuning sample
  std::vector<double> lambda_grid;  // empty = default
  Eigen::Index full_size_cap = 10000;
  bool force = false;
  double nystrom_jitter = 1e-5;
  LiteReg lite_reg = LiteReg::rkhs_norm;
};

struct SweepRow {
  std::string dataset;
  Eigen::Index dim = 0;
  std::string estimator;
  Eigen::Index m = 0;           // basis points requested (0 for full)
  Eigen::Index components = 0;  // solved system size
  Eigen::Index trial = 0;
  double sigma = 0.0;
  double lambda = 0.0;
  double fisher = 0.0;
  double j_hat = 0.0;
  double fit_seconds = 0.0;
  std::string status;  // "ok" or "failed: <reason>"
};

// Accuracy/cost sweep over dims, estimators and basis sizes.
std::vector<SweepRow> convergence_sweep(const SweepConfig& config);

// CSV: dataset,dim,estimator,m,components,trial,sigma,lambda,fisher,
//      j_hat,fit_seconds,status.
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct CompareRow {
  std::string dataset;
  Eigen::Index dim = 0;
  std::string variant;  // "all_components" or "global"
  Eigen::Index m = 0;
  Eigen::Index components = 0;
  Eigen::Index retained_points = 0;  // distinct points kept by the fit
  Eigen::Index trial = 0;
  double sigma = 0.0;
  double lambda = 0.0;
  double fisher = 0.0;
  double fit_seconds = 0.0;
  std::string status;
};

// Head-to-head of point subsampling (m points, every component) versus
// component subsampling (m * d components drawn over all points) at equal
// active-component counts.
std::vector<CompareRow> subsampling_compare(const SweepConfig& config);

// CSV: dataset,dim,variant,m,components,retained_points,trial,sigma,
//      lambda,fisher,fit_seconds,status.
std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace kexfam
