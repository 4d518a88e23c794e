#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kexfam/model.hpp"

namespace kexfam {

// Pointwise empirical score-matching objective of a model on the given
// points: mean over rows of
//   sum_i [ d2f/dx_i2 + 1/2 (df/dx_i)^2 + df/dx_i * dlogq0/dx_i ],
// where f is the model's log-density part and the last term vanishes for
// the uniform base measure.  On the training set this agrees with the
// quadratic-form objectives in fit.hpp up to the regularizer.
double j_hat(const ScoreModel& model, const Mat& X_eval);

using TrueScoreFn = std::function<Vec(const Vec&)>;

// Half the mean squared Euclidean distance between the model score and a
// reference score over the given points.  (Conventions: the 1/2 factor is
// included; this is an expectation, not a sum.)
double fisher_divergence(const ScoreModel& model, const Mat& X_eval,
                         const TrueScoreFn& reference_score);

// Median pairwise squared distance between rows; requires n >= 2 and a
// nonzero spread.  Even pair counts average the two middle values.
double median_heuristic(const Mat& X);

// Kernel-width grid 2^k * median_heuristic(X) for k = -3..3.
std::vector<double> default_sigma_grid(const Mat& X);
// Regularization grid: 7 values log-spaced from 1e-6 to 1.
std::vector<double> default_lambda_grid();

enum class TuneCriterion { j_hat, fisher };
std::string to_string(TuneCriterion criterion);
TuneCriterion tune_criterion_from_string(const std::string& name);

struct GridCell {
  double sigma = 0.0;
  double lambda = 0.0;
  double value = 0.0;       // criterion on the validation split (NaN on failure)
  double fit_seconds = 0.0;
  std::string status;       // "ok" or "failed: <reason>"
};

struct GridSearchConfig {
  std::vector<double> sigma_grid;   // empty: default grid from the train split
  std::vector<double> lambda_grid;  // empty: default grid
  TuneCriterion criterion = TuneCriterion::j_hat;
  TrueScoreFn true_score;           // required when criterion == fisher
  // Row indices of X used for fitting and validation.  Both empty selects
  // the default deterministic split: first ceil(n/2) rows train, rest
  // validate.
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> val_rows;
};

struct GridSearchResult {
  double best_sigma = 0.0;
  double best_lambda = 0.0;
  double best_value = 0.0;
  std::vector<GridCell> table;  // row-major: sigma outer, lambda inner
};

// Fits one model on the training rows for a given kernel width and
// regularization strength.
using Fitter =
    std::function<ScoreModel(const Mat& X_train, const KernelConfig&, double lambda)>;

// Exhaustive search over the grid; failed cells are recorded and skipped.
// The minimum is selected by (value, then larger lambda, then larger
// sigma).  Throws numerical_error if every cell fails.
GridSearchResult grid_search(const Fitter& fitter, const Mat& X,
                             const GridSearchConfig& config);

// CSV table: sigma,lambda,value,fit_seconds,status (one row per cell).
std::string grid_table_csv(const GridSearchResult& result);

}  // namespace kexfam
