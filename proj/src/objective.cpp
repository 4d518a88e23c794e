#include "kexfam/objective.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "kexfam/errors.hpp"
#include "kexfam/text.hpp"

namespace kexfam {

namespace {

void check_eval_set(const ScoreModel& model, const Mat& X_eval, const char* what) {
  if (X_eval.rows() < 1)
    throw input_error(std::string(what) + ": evaluation set must be non-empty");
  if (X_eval.cols() != model.dim())
    throw input_error(std::string(what) + ": evaluation dimension " +
                      std::to_string(X_eval.cols()) + " does not match model dimension " +
                      std::to_string(model.dim()));
}

}  // namespace

double j_hat(const ScoreModel& model, const Mat& X_eval) {
  check_eval_set(model, X_eval, "j_hat");
  double acc = 0.0;
  for (Eigen::Index b = 0; b < X_eval.rows(); ++b) {
    const Vec x = X_eval.row(b).transpose();
    const Vec g = model.grad(x);
    double term = model.second_diag(x).sum() + 0.5 * g.squaredNorm();
    if (model.q0_grad) term += g.dot(model.q0_grad(x));
    acc += term;
  }
  return acc / static_cast<double>(X_eval.rows());
}

double fisher_divergence(const ScoreModel& model, const Mat& X_eval,
                         const TrueScoreFn& reference_score) {
  check_eval_set(model, X_eval, "fisher_divergence");
  if (!reference_score)
    throw input_error("fisher_divergence: reference score function is required");
  double acc = 0.0;
  for (Eigen::Index b = 0; b < X_eval.rows(); ++b) {
    const Vec x = X_eval.row(b).transpose();
    const Vec truth = reference_score(x);
    if (truth.size() != x.size())
      throw evaluation_error("fisher_divergence: reference score has wrong dimension at row " +
                             std::to_string(b));
    if (!truth.allFinite())
      throw evaluation_error("fisher_divergence: reference score non-finite at row " +
                             std::to_string(b));
    acc += (model.score(x) - truth).squaredNorm();
  }
  return 0.5 * acc / static_cast<double>(X_eval.rows());
}

double median_heuristic(const Mat& X) {
  if (X.rows() < 2)
    throw input_error("median_heuristic: need at least 2 points");
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(X.rows()) *
                (static_cast<std::size_t>(X.rows()) - 1) / 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = i + 1; j < X.rows(); ++j)
      dists.push_back((X.row(i) - X.row(j)).squaredNorm());
  const std::size_t count = dists.size();
  const std::size_t mid = count / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<long>(mid), dists.end());
  double med = dists[mid];
  if (count % 2 == 0) {
    const double below =
        *std::max_element(dists.begin(), dists.begin() + static_cast<long>(mid));
    med = 0.5 * (med + below);
  }
  if (!(med > 0.0))
    throw input_error("median_heuristic: degenerate data (median distance is zero)");
  return med;
}

std::vector<double> default_sigma_grid(const Mat& X) {
  const double med = median_heuristic(X);
  std::vector<double> grid;
  for (int k = -3; k <= 3; ++k) grid.push_back(std::ldexp(med, k));
  return grid;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int k = -6; k <= 0; ++k) grid.push_back(std::pow(10.0, k));
  return grid;
}

std::string to_string(TuneCriterion criterion) {
  switch (criterion) {
    case TuneCriterion::j_hat: return "j_hat";
    case TuneCriterion::fisher: return "fisher";
  }
  throw input_error("unknown tuning criterion value");
}

TuneCriterion tune_criterion_from_string(const std::string& name) {
  if (name == "j_hat") return TuneCriterion::j_hat;
  if (name == "fisher") return TuneCriterion::fisher;
  throw input_error("unknown tuning criterion '" + name + "'");
}

GridSearchResult grid_search(const Fitter& fitter, const Mat& X,
                             const GridSearchConfig& config) {
  if (!fitter) throw input_error("grid_search: fitter is required");
  if (X.rows() < 2) throw input_error("grid_search: need at least 2 points");
  if (config.criterion == TuneCriterion::fisher && !config.true_score)
    throw input_error("grid_search: fisher criterion requires a reference score");
  if (config.train_rows.empty() != config.val_rows.empty())
    throw input_error("grid_search: provide both train and validation rows or neither");

  std::vector<Eigen::Index> train = config.train_rows;
  std::vector<Eigen::Index> val = config.val_rows;
  if (train.empty()) {
    const Eigen::Index n_train = (X.rows() + 1) / 2;
    for (Eigen::Index r = 0; r < X.rows(); ++r)
      (r < n_train ? train : val).push_back(r);
  }
  for (const auto& rows : {train, val}) {
    if (rows.empty())
      throw input_error("grid_search: train and validation splits must be non-empty");
    for (Eigen::Index r : rows)
      if (r < 0 || r >= X.rows())
        throw input_error("grid_search: split row index out of range");
  }

  Mat X_train(static_cast<Eigen::Index>(train.size()), X.cols());
  for (std::size_t r = 0; r < train.size(); ++r)
    X_train.row(static_cast<Eigen::Index>(r)) = X.row(train[r]);
  Mat X_val(static_cast<Eigen::Index>(val.size()), X.cols());
  for (std::size_t r = 0; r < val.size(); ++r)
    X_val.row(static_cast<Eigen::Index>(r)) = X.row(val[r]);

  std::vector<double> sigma_grid =
      config.sigma_grid.empty() ? default_sigma_grid(X_train) : config.sigma_grid;
  std::vector<double> lambda_grid =
      config.lambda_grid.empty() ? default_lambda_grid() : config.lambda_grid;

  GridSearchResult result;
  bool have_best = false;
  for (double sigma : sigma_grid) {
    for (double lambda : lambda_grid) {
      GridCell cell;
      cell.sigma = sigma;
      cell.lambda = lambda;
      cell.value = std::numeric_limits<double>::quiet_NaN();
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const ScoreModel model = fitter(X_train, KernelConfig(sigma), lambda);
        cell.fit_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        const double value = config.criterion == TuneCriterion::fisher
                                 ? fisher_divergence(model, X_val, config.true_score)
                                 : j_hat(model, X_val);
        if (!std::isfinite(value))
          throw numerical_error("criterion value is non-finite");
        cell.value = value;
        cell.status = "ok";
      } catch (const std::exception& e) {
        cell.fit_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        cell.status = std::string("failed: ") + e.what();
      }
      if (cell.status == "ok") {
        // Prefer smaller value, breaking ties toward larger lambda and
        // then larger sigma.
        const bool better =
            !have_best || cell.value < result.best_value ||
            (cell.value == result.best_value &&
             (cell.lambda > result.best_lambda ||
              (cell.lambda == result.best_lambda && cell.sigma > result.best_sigma)));
        if (better) {
          result.best_sigma = cell.sigma;
          result.best_lambda = cell.lambda;
          result.best_value = cell.value;
          have_best = true;
        }
      }
      result.table.push_back(std::move(cell));
    }
  }
  if (!have_best)
    throw numerical_error("grid_search: every cell failed; see the grid table");
  return result;
}

std::string grid_table_csv(const GridSearchResult& result) {
  std::string out = "sigma,lambda,value,fit_seconds,status\n";
  for (const auto& cell : result.table) {
    out += double_to_string(cell.sigma);
    out.push_back(',');
    out += double_to_string(cell.lambda);
    out.push_back(',');
    out += double_to_string(cell.value);
    out.push_back(',');
    out += double_to_string(cell.fit_seconds);
    out.push_back(',');
    // Commas in failure messages would break the table shape.
    std::string status = cell.status;
    std::replace(status.begin(), status.end(), ',', ';');
    out += status;
    out.push_back('\n');
  }
  return out;
}

}  // namespace kexfam
