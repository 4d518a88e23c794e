#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "kexfam/dataset.hpp"
#include "kexfam/errors.hpp"
#include "kexfam/fit.hpp"
#include "kexfam/objective.hpp"
#include "test_util.hpp"

using namespace kexfam;
using namespace testutil;

namespace {

ScoreModel zero_lite_model(Eigen::Index m, Eigen::Index d) {
  ScoreModel model(ModelKind::lite, KernelConfig(1.0), 1e-3);
  model.basis.mode = BasisMode::explicit_set;
  model.basis.points = Mat::Zero(m, d);
  for (Eigen::Index a = 0; a < m; ++a)
    model.basis.points(a, 0) = static_cast<double>(a);
  model.beta = Vec::Zero(m);
  return model;
}

}  // namespace

TEST_CASE("pointwise objective of the zero function is zero") {
  ScoreModel model = zero_lite_model(3, 2);
  kexfam::RandomStream rng(51, 0);
  Mat X = random_mat(rng, 6, 2, 2.0);
  CHECK(j_hat(model, X) == 0.0);
}

TEST_CASE("pointwise objective against a hand computation") {
  // f(x) = 2 exp(-x^2):  f'(x) = -4x exp(-x^2),  f''(x) = (8x^2-4) exp(-x^2).
  // At x = 1: f' = -4/e, f'' = 4/e, so the integrand is 4/e + 8/e^2.
  ScoreModel model(ModelKind::lite, KernelConfig(1.0), 1e-3);
  model.basis.mode = BasisMode::explicit_set;
  model.basis.points = Mat::Zero(1, 1);
  model.beta = Vec::Constant(1, 2.0);

  Mat X(1, 1);
  X << 1.0;
  const double e1 = std::exp(-1.0);
  const double want = 4.0 * e1 + 8.0 * e1 * e1;
  CHECK(rel_err(j_hat(model, X), want) < 1e-14);

  // By symmetry the integrand is identical at -1, so the mean is unchanged.
  Mat X2(2, 1);
  X2 << 1.0, -1.0;
  CHECK(rel_err(j_hat(model, X2), want) < 1e-14);

  // A base-measure gradient adds f'(x) dlogq0(x): at x = 1 with
  // dlogq0 = -x this contributes +4/e.
  model.q0_grad = [](const Vec& x) { return Vec(-x); };
  CHECK(rel_err(j_hat(model, X), want + 4.0 * e1) < 1e-14);
}

TEST_CASE("pointwise objective is permutation invariant") {
  kexfam::RandomStream rng(52, 0);
  ScoreModel model = zero_lite_model(4, 2);
  model.beta = random_vec(rng, 4);
  Mat X = random_mat(rng, 8, 2, 1.5);
  Mat Xrev = X.colwise().reverse();
  CHECK(rel_err(j_hat(model, X), j_hat(model, Xrev)) < 1e-12);
}

TEST_CASE("fisher divergence conventions") {
  // The zero model against a standard normal reference integrates to
  // (1/2) E |x|^2 = d/2.
  ScoreModel model = zero_lite_model(2, 2);
  GaussianParams gp;
  Mat X = sample_gaussian(4000, 2, gp, 7).points;
  auto truth = [](const Vec& x) { return Vec(-x); };
  CHECK(fisher_divergence(model, X, truth) == doctest::Approx(1.0).epsilon(0.05));

  // A model compared with its own score has divergence exactly zero.
  kexfam::RandomStream rng(53, 0);
  model.beta = random_vec(rng, 2);
  auto self = [&](const Vec& x) { return model.score(x); };
  CHECK(fisher_divergence(model, X.topRows(50), self) == 0.0);

  CHECK_THROWS_AS(fisher_divergence(model, X, nullptr), input_error);
  auto wrong_dim = [](const Vec&) { return Vec(Vec::Zero(5)); };
  CHECK_THROWS_AS(fisher_divergence(model, X.topRows(3), wrong_dim),
                  evaluation_error);
  auto non_finite = [](const Vec& x) {
    return Vec(Vec::Constant(x.size(), std::numeric_limits<double>::infinity()));
  };
  CHECK_THROWS_AS(fisher_divergence(model, X.topRows(3), non_finite),
                  evaluation_error);
  CHECK_THROWS_AS(fisher_divergence(model, Mat(), truth), input_error);
  CHECK_THROWS_AS(fisher_divergence(model, Mat::Zero(3, 4), truth), input_error);
}

TEST_CASE("median heuristic") {
  Mat X(3, 1);
  X << 0.0, 1.0, 3.0;  // squared distances 1, 4, 9
  CHECK(median_heuristic(X) == 4.0);

  Mat Y(4, 1);
  Y << 0.0, 1.0, 3.0, 4.0;  // squared distances 1, 9, 16, 4, 9, 1
  // sorted: 1 1 4 9 9 16 -> average of 4 and 9
  CHECK(median_heuristic(Y) == 6.5);

  CHECK_THROWS_AS(median_heuristic(Mat::Zero(1, 2)), input_error);
  CHECK_THROWS_AS(median_heuristic(Mat::Zero(5, 2)), input_error);  // no spread
}

TEST_CASE("default parameter grids") {
  Mat X(3, 1);
  X << 0.0, 1.0, 3.0;
  const double med = 4.0;
  auto sigmas = default_sigma_grid(X);
  REQUIRE(sigmas.size() == 7);
  for (int k = -3; k <= 3; ++k)
    CHECK(sigmas[static_cast<std::size_t>(k + 3)] == std::ldexp(med, k));

  auto lambdas = default_lambda_grid();
  REQUIRE(lambdas.size() == 7);
  CHECK(lambdas.front() == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(lambdas.back() == 1.0);
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    CHECK(lambdas[i] / lambdas[i - 1] == doctest::Approx(10.0).epsilon(1e-10));
}

TEST_CASE("tuning criterion names round trip") {
  for (TuneCriterion c : {TuneCriterion::j_hat, TuneCriterion::fisher})
    CHECK(tune_criterion_from_string(to_string(c)) == c);
  CHECK_THROWS_AS(tune_criterion_from_string("aic"), input_error);
}

TEST_CASE("grid search selects the best cell") {
  RingParams rp;
  Mat X = sample_ring(30, 2, rp, 61).points;
  Fitter fitter = [](const Mat& Xt, const KernelConfig& k, double lambda) {
    return fit_lite(Xt, Xt, k, lambda).model;
  };
  GridSearchConfig cfg;
  cfg.sigma_grid = {1.0, 4.0, 16.0};
  cfg.lambda_grid = {1e-4, 1e-2};
  GridSearchResult res = grid_search(fitter, X, cfg);
  REQUIRE(res.table.size() == 6);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& cell : res.table) {
    REQUIRE(cell.status == "ok");
    best = std::min(best, cell.value);
  }
  CHECK(res.best_value == best);

  // Deterministic: rerunning reproduces the same selection and values.
  GridSearchResult res2 = grid_search(fitter, X, cfg);
  CHECK(res2.best_sigma == res.best_sigma);
  CHECK(res2.best_lambda == res.best_lambda);
  CHECK(res2.best_value == res.best_value);
  for (std::size_t i = 0; i < res.table.size(); ++i)
    CHECK(res2.table[i].value == res.table[i].value);
}

TEST_CASE("grid search ties break toward stronger regularization") {
  Mat X = Mat::Random(10, 2);
  // A fitter that ignores its arguments produces identical criterion values
  // in every cell.
  ScoreModel canned = zero_lite_model(2, 2);
  Fitter fitter = [&](const Mat&, const KernelConfig&, double) { return canned; };
  GridSearchConfig cfg;
  cfg.sigma_grid = {1.0, 2.0, 4.0};
  cfg.lambda_grid = {1e-3, 1e-2, 1e-1};
  GridSearchResult res = grid_search(fitter, X, cfg);
  CHECK(res.best_lambda == 1e-1);
  CHECK(res.best_sigma == 4.0);
}

TEST_CASE("grid search records failures and skips them") {
  RingParams rp;
  Mat X = sample_ring(24, 2, rp, 62).points;
  Fitter fitter = [](const Mat& Xt, const KernelConfig& k, double lambda) {
    if (k.sigma < 2.0) throw numerical_error("synthetic failure, sigma too small");
    return fit_lite(Xt, Xt, k, lambda).model;
  };
  GridSearchConfig cfg;
  cfg.sigma_grid = {1.0, 8.0};
  cfg.lambda_grid = {1e-3, 1e-2};
  GridSearchResult res = grid_search(fitter, X, cfg);
  REQUIRE(res.table.size() == 4);
  CHECK(res.table[0].status == "failed: synthetic failure, sigma too small");
  CHECK(std::isnan(res.table[0].value));
  CHECK(res.table[2].status == "ok");
  CHECK(res.best_sigma == 8.0);

  Fitter always_fails = [](const Mat&, const KernelConfig&, double) -> ScoreModel {
    throw numerical_error("nope");
  };
  CHECK_THROWS_AS(grid_search(always_fails, X, cfg), numerical_error);
}

TEST_CASE("grid search split handling") {
  Mat X(5, 1);
  X << 0.0, 1.0, 2.0, 3.0, 4.0;
  Mat seen_train;
  Fitter fitter = [&](const Mat& Xt, const KernelConfig& k, double lambda) {
    seen_train = Xt;
    return fit_lite(Xt, Xt, k, lambda).model;
  };
  GridSearchConfig cfg;
  cfg.sigma_grid = {4.0};
  cfg.lambda_grid = {1e-2};

  // Default split: first ceil(n/2) rows train.
  grid_search(fitter, X, cfg);
  REQUIRE(seen_train.rows() == 3);
  CHECK(seen_train(0, 0) == 0.0);
  CHECK(seen_train(2, 0) == 2.0);

  // Explicit split rows are honored in the order given.
  cfg.train_rows = {4, 0};
  cfg.val_rows = {1, 2, 3};
  grid_search(fitter, X, cfg);
  REQUIRE(seen_train.rows() == 2);
  CHECK(seen_train(0, 0) == 4.0);
  CHECK(seen_train(1, 0) == 0.0);

  cfg.val_rows.clear();
  CHECK_THROWS_AS(grid_search(fitter, X, cfg), input_error);
  cfg.train_rows = {0, 9};
  cfg.val_rows = {1};
  CHECK_THROWS_AS(grid_search(fitter, X, cfg), input_error);

  GridSearchConfig fisher_cfg;
  fisher_cfg.criterion = TuneCriterion::fisher;
  CHECK_THROWS_AS(grid_search(fitter, X, fisher_cfg), input_error);
  CHECK_THROWS_AS(grid_search(nullptr, X, cfg), input_error);
}

TEST_CASE("grid table serialization") {
  GridSearchResult res;
  res.table.push_back({1.0, 0.5, 0.25, 0.001, "ok"});
  res.table.push_back({2.0, 0.5, std::numeric_limits<double>::quiet_NaN(), 0.0,
                       "failed: bad, very bad"});
  const std::string csv = grid_table_csv(res);
  CHECK(csv.substr(0, csv.find('\n')) == "sigma,lambda,value,fit_seconds,status");
  CHECK(csv.find("failed: bad; very bad") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
