#include <doctest.h>

#include <cmath>
#include <set>

#include "kexfam/dataset.hpp"
#include "kexfam/errors.hpp"
#include "kexfam/fit.hpp"
#include "kexfam/objective.hpp"
#include "test_util.hpp"

using namespace kexfam;
using namespace testutil;

namespace {

// Naive slot-explicit assembly of the full system, written independently of
// the library implementation.
FullSystem oracle_full(const Mat& X, const KernelConfig& k, const Mat& q0g) {
  const auto n = X.rows(), d = X.cols();
  FullSystem sys;
  sys.G.resize(n * d, n * d);
  sys.h = Vec::Zero(n * d);
  for (Eigen::Index b = 0; b < n; ++b) {
    const Vec xb = X.row(b).transpose();
    for (Eigen::Index a = 0; a < n; ++a) {
      const Vec xa = X.row(a).transpose();
      sys.G.block(b * d, a * d, d, d) = kernel_cross_hessian(k, xb, xa);
      const Mat d3 = kernel_dx_dyy(k, xb, xa);       // d/db_i d2/da_j
      const Mat ch = kernel_cross_hessian(k, xb, xa);  // d/db_i d/da_j
      for (Eigen::Index i = 0; i < d; ++i) {
        double v = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) v += d3(i, j) + ch(i, j) * q0g(a, j);
        sys.h(b * d + i) += v;
      }
    }
  }
  sys.h /= static_cast<double>(n);

  double acc = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    const Vec xa = X.row(a).transpose();
    for (Eigen::Index b = 0; b < n; ++b) {
      const Vec xb = X.row(b).transpose();
      acc += kernel_dxx_dyy(k, xa, xb).sum();
      // <grad part_a, second part_b>: single derivative on the a slot.
      const Mat d3_ab = kernel_dx_dyy(k, xa, xb);
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) acc += q0g(a, i) * d3_ab(i, j);
      // <second part_a, grad part_b>: single derivative on the b slot.
      const Mat d3_ba = kernel_dx_dyy(k, xb, xa);
      for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < d; ++i) acc += q0g(b, j) * d3_ba(j, i);
      const Mat ch = kernel_cross_hessian(k, xa, xb);
      acc += q0g.row(a) * ch * q0g.row(b).transpose();
    }
  }
  sys.xi_norm2 = acc / static_cast<double>(n * n);
  return sys;
}

Mat ring_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  RingParams p;
  return sample_ring(n, d, p, seed).points;
}

ScoreModel full_model_with_beta(const Mat& X, const KernelConfig& k, double lambda,
                                const Vec& beta, const ScoreFn& q0 = nullptr) {
  ScoreModel m(ModelKind::full, k, lambda);
  m.xi_scale = -1.0 / lambda;
  m.basis.mode = BasisMode::all_components;
  m.basis.points = X;
  for (Eigen::Index b = 0; b < X.rows(); ++b)
    for (Eigen::Index i = 0; i < X.cols(); ++i) m.basis.index_set.emplace_back(b, i);
  m.beta = beta;
  m.q0_grad = q0;
  m.q0_grad_at_points = q0_gradient_rows(X, q0);
  return m;
}

ScoreModel nystrom_model_with_beta(const BasisSpec& basis, const KernelConfig& k,
                                   double lambda, const Vec& beta, bool augmented,
                                   const ScoreFn& q0 = nullptr) {
  ScoreModel m(ModelKind::nystrom, k, lambda);
  m.basis = basis;
  m.beta = beta;
  m.augmented = augmented;
  m.q0_grad = q0;
  return m;
}

ScoreModel lite_model_with_beta(const Mat& Y, const KernelConfig& k, double lambda,
                                const Vec& beta, const ScoreFn& q0 = nullptr) {
  ScoreModel m(ModelKind::lite, k, lambda);
  m.basis.mode = BasisMode::explicit_set;
  m.basis.points = Y;
  m.beta = beta;
  m.q0_grad = q0;
  return m;
}

const ScoreFn kGaussQ0 = [](const Vec& x) { return Vec(-0.5 * x); };

}  // namespace

TEST_CASE("full system assembly matches the naive oracle") {
  kexfam::RandomStream rng(301, 0);
  for (bool with_q0 : {false, true}) {
    Mat X = random_gaussian_mat(rng, 4, 2, 0.9);
    KernelConfig k(1.4);
    const ScoreFn q0 = with_q0 ? kGaussQ0 : ScoreFn();
    const Mat q0g = q0_gradient_rows(X, q0);
    FullSystem got = assemble_full(X, k, q0);
    FullSystem want = oracle_full(X, k, q0g);
    CHECK(rel_block_err(got.G, want.G) < 1e-13);
    CHECK(rel_block_err(got.h, want.h) < 1e-13);
    CHECK(rel_err(got.xi_norm2, want.xi_norm2) < 1e-12);
    CHECK(got.xi_norm2 > 0.0);  // squared norm of a nonzero function
    CHECK(rel_block_err(got.G, got.G.transpose()) < 1e-14);
  }
}

TEST_CASE("two-point full fit matches a hand solve") {
  Mat X(2, 1);
  X << 0.2, 1.1;
  KernelConfig k(1.5);
  const double lambda = 0.05;
  FitResult fit = fit_full(X, k, lambda);

  FullSystem sys = assemble_full(X, k);
  // Solve (G + n lambda I) beta = h / lambda with the closed 2x2 inverse.
  const double a = sys.G(0, 0) + 2 * lambda, b = sys.G(0, 1);
  const double c = sys.G(1, 0), e = sys.G(1, 1) + 2 * lambda;
  const double det = a * e - b * c;
  const Vec rhs = sys.h / lambda;
  Vec beta(2);
  beta << (e * rhs(0) - b * rhs(1)) / det, (-c * rhs(0) + a * rhs(1)) / det;
  CHECK(rel_block_err(fit.model.beta, beta) < 1e-12);

  CHECK(fit.model.kind == ModelKind::full);
  CHECK(fit.model.xi_scale == -1.0 / lambda);
  CHECK(fit.model.basis.points == X);
  CHECK(fit.report.system_size == 2);
  CHECK(fit.report.jitter_used == 0.0);
  CHECK(fit.report.residual_norm < 1e-12);
}

TEST_CASE("full objective equals the pointwise objective plus regularizer") {
  kexfam::RandomStream rng(302, 0);
  for (bool with_q0 : {false, true}) {
    Mat X = ring_points(7, 2, 13);
    KernelConfig k(2.0);
    const double lambda = 0.02;
    const ScoreFn q0 = with_q0 ? kGaussQ0 : ScoreFn();
    FullSystem sys = assemble_full(X, k, q0);
    for (int rep = 0; rep < 4; ++rep) {
      Vec beta = random_vec(rng, X.size(), 0.3);
      const double quad = full_objective(sys, X.rows(), lambda, beta);
      ScoreModel m = full_model_with_beta(X, k, lambda, beta, q0);
      const double norm2 = sys.xi_norm2 / (lambda * lambda) -
                           2.0 * beta.dot(sys.h) / lambda +
                           beta.dot(sys.G * beta);
      const double pointwise = j_hat(m, X) + 0.5 * lambda * norm2;
      CHECK(rel_err(quad, pointwise) < 1e-8);
    }
  }
}

TEST_CASE("nystrom objective equals the pointwise objective plus regularizer") {
  kexfam::RandomStream rng(303, 0);
  Mat X = ring_points(8, 2, 14);
  KernelConfig k(1.7);
  const double lambda = 0.05;
  for (bool augmented : {false, true}) {
    for (bool with_q0 : {false, true}) {
      const ScoreFn q0 = with_q0 ? kGaussQ0 : ScoreFn();
      BasisSpec basis = make_basis_per_point(X, 5, 1, 99);
      NystromSystem sys = assemble_nystrom(X, basis, k, q0, augmented);
      const auto T = static_cast<Eigen::Index>(sys.h.size());
      for (int rep = 0; rep < 3; ++rep) {
        Vec beta = random_vec(rng, T, 0.4);
        const double quad = nystrom_objective(sys, X.rows(), lambda, beta);
        ScoreModel m = nystrom_model_with_beta(basis, k, lambda, beta, augmented, q0);
        const double pointwise =
            j_hat(m, X) + 0.5 * lambda * beta.dot(sys.G * beta);
        CHECK(rel_err(quad, pointwise) < 1e-8);
      }
    }
  }
}

TEST_CASE("lite objective equals the pointwise objective plus regularizer") {
  kexfam::RandomStream rng(304, 0);
  Mat X = ring_points(8, 2, 15);
  Mat Y = X.topRows(5);
  KernelConfig k(2.2);
  const double lambda = 0.03;
  for (LiteReg reg : {LiteReg::rkhs_norm, LiteReg::rkhs_plus_l2}) {
    for (bool with_q0 : {false, true}) {
      const ScoreFn q0 = with_q0 ? kGaussQ0 : ScoreFn();
      LiteSystem sys = assemble_lite(X, Y, k, q0);
      for (int rep = 0; rep < 3; ++rep) {
        Vec beta = random_vec(rng, 5, 0.5);
        const double quad = lite_objective(sys, X.rows(), lambda, reg, beta);
        ScoreModel m = lite_model_with_beta(Y, k, lambda, beta, q0);
        double reg_term = beta.dot(sys.G * beta);
        if (reg == LiteReg::rkhs_plus_l2) reg_term += beta.squaredNorm();
        const double pointwise = j_hat(m, X) + 0.5 * lambda * reg_term;
        CHECK(rel_err(quad, pointwise) < 1e-8);
      }
    }
  }
}

TEST_CASE("fitted coefficients minimize their objectives") {
  kexfam::RandomStream rng(305, 0);
  Mat X = ring_points(10, 2, 16);
  KernelConfig k(2.0);
  const double lambda = 0.05;

  SUBCASE("full") {
    FitResult fit = fit_full(X, k, lambda);
    FullSystem sys = assemble_full(X, k);
    const double at_min = full_objective(sys, X.rows(), lambda, fit.model.beta);
    const double scale = std::max(1.0, std::abs(at_min));
    for (int rep = 0; rep < 25; ++rep) {
      Vec delta = random_vec(rng, X.size(), rep % 2 ? 1e-3 : 0.3);
      const double perturbed =
          full_objective(sys, X.rows(), lambda, Vec(fit.model.beta + delta));
      CHECK(perturbed - at_min > -1e-10 * scale);
    }
  }

  SUBCASE("nystrom, no jitter") {
    BasisSpec basis = make_basis_all(X, 6, 4);
    FitOptions opt;
    opt.jitter = 0.0;
    FitResult fit = fit_nystrom(X, basis, k, lambda, nullptr, opt);
    NystromSystem sys = assemble_nystrom(X, basis, k);
    const double at_min = nystrom_objective(sys, X.rows(), lambda, fit.model.beta);
    CHECK(at_min <= 0.0);  // beats the zero function
    const double scale = std::max(1.0, std::abs(at_min));
    for (int rep = 0; rep < 25; ++rep) {
      Vec delta = random_vec(rng, fit.model.beta.size(), rep % 2 ? 1e-3 : 0.5);
      const double perturbed =
          nystrom_objective(sys, X.rows(), lambda, Vec(fit.model.beta + delta));
      CHECK(perturbed - at_min > -1e-10 * scale);
    }
    CHECK(fit.report.residual_norm < 1e-6);
  }

  SUBCASE("nystrom, default jitter regularizes the coefficients") {
    BasisSpec basis = make_basis_all(X, 6, 4);
    FitResult fit = fit_nystrom(X, basis, k, lambda);
    CHECK(fit.report.jitter_used == 1e-5);
    NystromSystem sys = assemble_nystrom(X, basis, k);
    auto ridged = [&](const Vec& b) {
      return nystrom_objective(sys, X.rows(), lambda, b) +
             0.5 * 1e-5 * b.squaredNorm();
    };
    const double at_min = ridged(fit.model.beta);
    const double scale = std::max(1.0, std::abs(at_min));
    for (int rep = 0; rep < 25; ++rep) {
      Vec delta = random_vec(rng, fit.model.beta.size(), rep % 2 ? 1e-3 : 0.5);
      CHECK(ridged(Vec(fit.model.beta + delta)) - at_min > -1e-10 * scale);
    }
  }

  SUBCASE("lite") {
    Mat Y = X.topRows(6);
    for (LiteReg reg : {LiteReg::rkhs_norm, LiteReg::rkhs_plus_l2}) {
      FitResult fit = fit_lite(X, Y, k, lambda, reg);
      CHECK(fit.report.jitter_used == 0.0);
      LiteSystem sys = assemble_lite(X, Y, k);
      const double at_min =
          lite_objective(sys, X.rows(), lambda, reg, fit.model.beta);
      CHECK(at_min <= 1e-12);
      const double scale = std::max(1.0, std::abs(at_min));
      for (int rep = 0; rep < 25; ++rep) {
        Vec delta = random_vec(rng, 6, rep % 2 ? 1e-3 : 0.5);
        const double perturbed =
            lite_objective(sys, X.rows(), lambda, reg, Vec(fit.model.beta + delta));
        CHECK(perturbed - at_min > -1e-10 * scale);
      }
    }
  }
}

TEST_CASE("larger index sets never worsen the optimal objective") {
  Mat X = ring_points(12, 2, 17);
  KernelConfig k(2.5);
  const double lambda = 0.02;
  FitOptions opt;
  opt.jitter = 0.0;  // exact nesting needs the unridged objective

  std::vector<IndexPair> idx;
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < 12; ++a) {
    idx.emplace_back(a, 0);
    idx.emplace_back(a, 1);
    if (a % 3 != 2) continue;
    BasisSpec basis = make_basis_explicit(X, idx);
    FitResult fit = fit_nystrom(X, basis, k, lambda, nullptr, opt);
    NystromSystem sys = assemble_nystrom(X, basis, k);
    const double value = nystrom_objective(sys, X.rows(), lambda, fit.model.beta);
    CHECK(value <= prev + 1e-9 * std::max(1.0, std::abs(prev)));
    prev = value;
  }
}

TEST_CASE("lite fit matches the closed matrix form") {
  // With the basis at the data points the scalar-kernel fit reduces to
  //   beta = -(tau/2) (A + n tau^2 lambda K / 4)^+ b,
  //   A = sum_i M_i^T M_i,  M_i = D_i K - K D_i,  D_i = diag(X(:, i)),
  //   b_a = sum_b K_ab (2/tau |X_a - X_b|^2 - d),
  // everything assembled here from scratch with scalar kernel values only.
  kexfam::RandomStream rng(306, 0);
  const double tau = 2.5, lambda = 0.5;
  for (Eigen::Index d : {1, 2, 3}) {
    const Eigen::Index n = 8;
    Mat X = random_gaussian_mat(rng, n, d, 1.5);
    KernelConfig kc(tau);

    Mat K(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b)
        K(a, b) = std::exp(-(X.row(a) - X.row(b)).squaredNorm() / tau);

    Mat A = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < d; ++i) {
      Mat Di = X.col(i).asDiagonal();
      Mat Mi = Di * K - K * Di;
      A += Mi.transpose() * Mi;
    }
    Vec b = Vec::Zero(n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index c = 0; c < n; ++c)
        b(a) += K(a, c) * (2.0 / tau * (X.row(a) - X.row(c)).squaredNorm() -
                           static_cast<double>(d));

    // The assembled system obeys the same closed forms.
    LiteSystem sys = assemble_lite(X, X, kc);
    CHECK(rel_block_err(Mat(sys.B.transpose() * sys.B), Mat(4.0 / (tau * tau) * A)) <
          1e-12);
    CHECK(rel_block_err(sys.h, Vec(2.0 / (static_cast<double>(n) * tau) * b)) < 1e-12);
    CHECK(rel_block_err(sys.G, K) < 1e-13);

    const Mat M = A + static_cast<double>(n) * tau * tau * lambda / 4.0 * K;
    const Vec beta_ref = -(tau / 2.0) * M.fullPivLu().solve(b);

    FitOptions opt;
    opt.jitter = 0.0;
    FitResult fit = fit_lite(X, X, kc, lambda, LiteReg::rkhs_norm, nullptr, opt);
    CHECK((fit.model.beta - beta_ref).norm() <
          1e-8 * std::max(1.0, beta_ref.norm()));
  }
}

TEST_CASE("pseudo-inverse solver") {
  SUBCASE("rank deficiency and minimum norm") {
    Mat M = Vec(Vec::Zero(3)).asDiagonal();
    M(0, 0) = 2.0;
    M(1, 1) = 1.0;
    Vec rhs(3);
    rhs << 2.0, 3.0, 5.0;
    PinvSolve s = pinv_solve_sym(M, rhs, 0.0);
    CHECK(s.effective_rank == 2);
    CHECK(rel_block_err(s.x, Vec((Vec(3) << 1.0, 3.0, 0.0).finished())) < 1e-14);
    CHECK(s.residual_norm < 1e-14);
  }
  SUBCASE("consistent singular system") {
    Mat M(2, 2);
    M << 1.0, 1.0, 1.0, 1.0;
    Vec rhs(2);
    rhs << 2.0, 2.0;
    PinvSolve s = pinv_solve_sym(M, rhs, 0.0);
    CHECK(s.effective_rank == 1);
    CHECK(rel_block_err(s.x, Vec((Vec(2) << 1.0, 1.0).finished())) < 1e-14);
    CHECK(s.residual_norm < 1e-14);
  }
  SUBCASE("rhs orthogonal to the range yields zero") {
    Mat M(2, 2);
    M << 1.0, 1.0, 1.0, 1.0;
    Vec rhs(2);
    rhs << 1.0, -1.0;
    PinvSolve s = pinv_solve_sym(M, rhs, 0.0);
    CHECK(s.x.norm() == 0.0);
    CHECK(s.residual_norm == 0.0);
  }
  SUBCASE("jitter makes a singular direction solvable") {
    Mat M = Vec(Vec::Zero(2)).asDiagonal();
    M(0, 0) = 1.0;
    Vec rhs(2);
    rhs << 1.0, 1.0;
    PinvSolve s = pinv_solve_sym(M, rhs, 1e-4);
    CHECK(s.effective_rank == 2);
    CHECK(s.x(0) == doctest::Approx(1.0 / 1.0001).epsilon(1e-12));
    CHECK(s.x(1) == doctest::Approx(1e4).epsilon(1e-12));
  }
  SUBCASE("validation") {
    Mat M = Mat::Zero(2, 3);
    CHECK_THROWS_AS(pinv_solve_sym(M, Vec::Zero(2), 0.0), input_error);
    Mat S = Mat::Zero(2, 2);
    CHECK_THROWS_AS(pinv_solve_sym(S, Vec::Zero(2), -1.0), input_error);
    S(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(pinv_solve_sym(S, Vec::Zero(2), 0.0), numerical_error);
  }
}

TEST_CASE("fits recover a gaussian score directionally") {
  // Standard normal data: the true score is -x.  With a wide kernel and
  // moderate regularization every estimator tracks the linear score.
  GaussianParams gp;
  Mat X = sample_gaussian(200, 1, gp, 29).points;
  KernelConfig k(8.0);
  const double lambda = 1e-3;

  FitResult full = fit_full(X, k, lambda);
  BasisSpec basis = make_basis_all(X, 80, 8);
  FitResult ny = fit_nystrom(X, basis, k, lambda);
  FitResult lite = fit_lite(X, X, k, lambda);

  for (const ScoreModel* m : {&full.model, &ny.model, &lite.model}) {
    for (double x0 : {-1.0, 0.5, 1.0}) {
      Vec x(1);
      x << x0;
      CHECK(std::abs(m->score(x)(0) - (-x0)) < 0.35);
    }
  }
}

TEST_CASE("fit validation and resource limits") {
  Mat X = ring_points(6, 2, 30);
  KernelConfig k(1.0);

  CHECK_THROWS_AS(fit_full(Mat(), k, 0.1), input_error);
  CHECK_THROWS_AS(fit_full(X, k, 0.0), input_error);
  CHECK_THROWS_AS(fit_full(X, k, -0.5), input_error);

  FitOptions capped;
  capped.full_size_cap = 10;  // n d = 12 exceeds this
  CHECK_THROWS_AS(fit_full(X, k, 0.1, nullptr, capped), resource_error);
  capped.force = true;
  CHECK_NOTHROW(fit_full(X, k, 0.1, nullptr, capped));

  Mat bad = X;
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(fit_full(bad, k, 0.1), input_error);

  BasisSpec basis = make_basis_all(X, 3, 1);
  Mat Xd3 = Mat::Zero(5, 3);
  CHECK_THROWS_AS(fit_nystrom(Xd3, basis, k, 0.1), input_error);
  BasisSpec empty_idx = basis;
  empty_idx.index_set.clear();
  CHECK_THROWS_AS(fit_nystrom(X, empty_idx, k, 0.1), input_error);

  CHECK_THROWS_AS(fit_lite(X, Mat::Zero(3, 3), k, 0.1), input_error);

  const ScoreFn bad_q0 = [](const Vec&) { return Vec(Vec::Zero(5)); };
  CHECK_THROWS_AS(fit_full(X, k, 0.1, bad_q0), input_error);
  const ScoreFn nan_q0 = [](const Vec& x) {
    return Vec(Vec::Constant(x.size(), std::numeric_limits<double>::quiet_NaN()));
  };
  CHECK_THROWS_AS(fit_full(X, k, 0.1, nan_q0), numerical_error);
}

TEST_CASE("lite regularizer names round trip") {
  for (LiteReg reg : {LiteReg::rkhs_norm, LiteReg::rkhs_plus_l2})
    CHECK(lite_reg_from_string(to_string(reg)) == reg);
  CHECK_THROWS_AS(lite_reg_from_string("ridge"), input_error);
}

TEST_CASE("the two lite regularizers differ and both minimize their objective") {
  Mat X = ring_points(9, 2, 31);
  Mat Y = X.topRows(5);
  KernelConfig k(2.0);
  FitResult a = fit_lite(X, Y, k, 0.05, LiteReg::rkhs_norm);
  FitResult b = fit_lite(X, Y, k, 0.05, LiteReg::rkhs_plus_l2);
  CHECK((a.model.beta - b.model.beta).norm() > 1e-8);
}

TEST_CASE("subsampled fit compacts its basis") {
  Mat X = ring_points(10, 2, 32);
  // Global mode keeps all points in the spec; after the fit only points
  // referenced by the drawn index pairs remain.
  BasisSpec basis = make_basis_global(X, 6, 3);
  FitResult fit = fit_nystrom(X, basis, KernelConfig(1.5), 0.05);
  std::set<Eigen::Index> pts;
  for (const auto& [a, i] : fit.model.basis.index_set) pts.insert(a);
  CHECK(static_cast<Eigen::Index>(pts.size()) == fit.model.basis.points.rows());
  CHECK(fit.model.beta.size() == static_cast<Eigen::Index>(fit.model.basis.size()));
}
