#include "kexfam/fit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "kexfam/errors.hpp"

namespace kexfam {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_data(const Mat& X, const char* what) {
  if (X.rows() < 1 || X.cols() < 1)
    throw input_error(std::string(what) + ": data matrix must be non-empty");
  if (!X.allFinite())
    throw input_error(std::string(what) + ": data contains non-finite values");
}

void check_lambda(double lambda, const char* what) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw input_error(std::string(what) + ": lambda must be finite and > 0, got " +
                      std::to_string(lambda));
}

// Sorted unique point rows referenced by an index set, plus the position of
// each original row in that list (-1 if unreferenced).
struct RefPoints {
  std::vector<Eigen::Index> rows;
  std::vector<Eigen::Index> pos;
};

RefPoints referenced_points(const BasisSpec& basis) {
  RefPoints out;
  for (const auto& [a, i] : basis.index_set) out.rows.push_back(a);
  std::sort(out.rows.begin(), out.rows.end());
  out.rows.erase(std::unique(out.rows.begin(), out.rows.end()), out.rows.end());
  out.pos.assign(static_cast<std::size_t>(basis.points.rows()), -1);
  for (std::size_t r = 0; r < out.rows.size(); ++r)
    out.pos[static_cast<std::size_t>(out.rows[r])] = static_cast<Eigen::Index>(r);
  return out;
}

Mat select_rows(const Mat& X, const std::vector<Eigen::Index>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
  return out;
}

}  // namespace

std::string to_string(LiteReg reg) {
  switch (reg) {
    case LiteReg::rkhs_norm: return "rkhs_norm";
    case LiteReg::rkhs_plus_l2: return "rkhs_plus_l2";
  }
  throw input_error("unknown lite regularizer value");
}

LiteReg lite_reg_from_string(const std::string& name) {
  if (name == "rkhs_norm") return LiteReg::rkhs_norm;
  if (name == "rkhs_plus_l2") return LiteReg::rkhs_plus_l2;
  throw input_error("unknown lite regularizer '" + name + "'");
}

Mat q0_gradient_rows(const Mat& X, const ScoreFn& q0_grad) {
  Mat out = Mat::Zero(X.rows(), X.cols());
  if (!q0_grad) return out;
  for (Eigen::Index b = 0; b < X.rows(); ++b) {
    const Vec g = q0_grad(X.row(b).transpose());
    if (g.size() != X.cols())
      throw input_error("q0_grad returned wrong dimension at data row " +
                        std::to_string(b));
    if (!g.allFinite())
      throw numerical_error("q0_grad returned non-finite values at data row " +
                            std::to_string(b));
    out.row(b) = g.transpose();
  }
  return out;
}

FullSystem assemble_full(const Mat& X, const KernelConfig& kernel,
                         const ScoreFn& q0_grad) {
  check_data(X, "assemble_full");
  const auto n = X.rows(), d = X.cols();
  const bool has_q0 = static_cast<bool>(q0_grad);
  const Mat q0g = q0_gradient_rows(X, q0_grad);

  FullSystem sys;
  sys.G = cross_hessian_block(kernel, X, X);

  Mat H = Mat::Zero(n, d);
  for (Eigen::Index b = 0; b < n; ++b) {
    const Vec xb = X.row(b).transpose();
    for (Eigen::Index a = 0; a < n; ++a) {
      const Mat dx = kernel_dx_dyy(kernel, xb, X.row(a).transpose());
      H.row(b) += dx.rowwise().sum().transpose();
      if (has_q0)
        H.row(b) += (sys.G.block(b * d, a * d, d, d) * q0g.row(a).transpose())
                        .transpose();
    }
  }
  H /= static_cast<double>(n);
  sys.h.resize(n * d);
  for (Eigen::Index b = 0; b < n; ++b)
    for (Eigen::Index i = 0; i < d; ++i) sys.h(b * d + i) = H(b, i);

  double acc = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    const Vec xa = X.row(a).transpose();
    for (Eigen::Index b = 0; b < n; ++b) {
      const Vec xb = X.row(b).transpose();
      acc += kernel_dxx_dyy(kernel, xa, xb).sum();
      if (has_q0) {
        const Vec rowsum = kernel_dx_dyy(kernel, xa, xb).rowwise().sum();
        acc += q0g.row(a).dot(rowsum) - q0g.row(b).dot(rowsum);
        acc += q0g.row(a) * sys.G.block(a * d, b * d, d, d) *
               q0g.row(b).transpose();
      }
    }
  }
  sys.xi_norm2 = acc / static_cast<double>(n * n);
  return sys;
}

NystromSystem assemble_nystrom(const Mat& X, const BasisSpec& basis,
                               const KernelConfig& kernel, const ScoreFn& q0_grad,
                               bool augmented) {
  check_data(X, "assemble_nystrom");
  if (basis.index_set.empty())
    throw input_error("assemble_nystrom: basis index set must be non-empty");
  if (basis.points.cols() != X.cols())
    throw input_error("assemble_nystrom: basis dimension does not match data");
  for (const auto& [a, i] : basis.index_set)
    if (a < 0 || a >= basis.points.rows() || i < 0 || i >= basis.points.cols())
      throw input_error("assemble_nystrom: index set entry out of range");

  const auto n = X.rows(), d = X.cols();
  const bool has_q0 = static_cast<bool>(q0_grad);
  const Mat q0g = q0_gradient_rows(X, q0_grad);
  const RefPoints ref = referenced_points(basis);
  const Mat Yref = select_rows(basis.points, ref.rows);
  const auto nref = Yref.rows();

  // Dense blocks over the referenced points; active columns are selected
  // from these below.
  const Mat Bfull = cross_hessian_block(kernel, X, Yref);
  const Mat Gfull = cross_hessian_block(kernel, Yref, Yref);
  Mat B2full, G12full, G22full;
  if (augmented) {
    B2full.resize(n * d, nref * d);
    for (Eigen::Index b = 0; b < n; ++b)
      for (Eigen::Index r = 0; r < nref; ++r)
        B2full.block(b * d, r * d, d, d) =
            kernel_dx_dyy(kernel, X.row(b).transpose(), Yref.row(r).transpose());
    G12full.resize(nref * d, nref * d);
    G22full.resize(nref * d, nref * d);
    for (Eigen::Index r = 0; r < nref; ++r)
      for (Eigen::Index s = 0; s < nref; ++s) {
        G12full.block(r * d, s * d, d, d) =
            kernel_dx_dyy(kernel, Yref.row(r).transpose(), Yref.row(s).transpose());
        G22full.block(r * d, s * d, d, d) = kernel_dxx_dyy(
            kernel, Yref.row(r).transpose(), Yref.row(s).transpose());
      }
  }

  Mat H = Mat::Zero(nref, d);
  Mat H2 = augmented ? Mat::Zero(nref, d) : Mat();
  for (Eigen::Index r = 0; r < nref; ++r) {
    const Vec yr = Yref.row(r).transpose();
    for (Eigen::Index b = 0; b < n; ++b) {
      const Vec xb = X.row(b).transpose();
      const Mat dx = kernel_dx_dyy(kernel, yr, xb);
      H.row(r) += dx.rowwise().sum().transpose();
      if (has_q0)
        H.row(r) += (Bfull.block(b * d, r * d, d, d).transpose() *
                     q0g.row(b).transpose())
                        .transpose();
      if (augmented) {
        H2.row(r) +=
            kernel_dxx_dyy(kernel, yr, xb).rowwise().sum().transpose();
        if (has_q0)
          H2.row(r) -= (dx.transpose() * q0g.row(b).transpose()).transpose();
      }
    }
  }
  H /= static_cast<double>(n);
  if (augmented) H2 /= static_cast<double>(n);

  const auto L = static_cast<Eigen::Index>(basis.index_set.size());
  const Eigen::Index total = augmented ? 2 * L : L;
  NystromSystem sys;
  sys.B.resize(n * d, total);
  sys.G.resize(total, total);
  sys.h.resize(total);
  for (Eigen::Index t = 0; t < L; ++t) {
    const auto [a, i] = basis.index_set[static_cast<std::size_t>(t)];
    const Eigen::Index r = ref.pos[static_cast<std::size_t>(a)];
    sys.B.col(t) = Bfull.col(r * d + i);
    sys.h(t) = H(r, i);
    if (augmented) {
      sys.B.col(L + t) = B2full.col(r * d + i);
      sys.h(L + t) = H2(r, i);
    }
  }
  for (Eigen::Index t = 0; t < L; ++t) {
    const auto [a, i] = basis.index_set[static_cast<std::size_t>(t)];
    const Eigen::Index r = ref.pos[static_cast<std::size_t>(a)];
    for (Eigen::Index s = 0; s < L; ++s) {
      const auto [a2, j] = basis.index_set[static_cast<std::size_t>(s)];
      const Eigen::Index r2 = ref.pos[static_cast<std::size_t>(a2)];
      sys.G(t, s) = Gfull(r * d + i, r2 * d + j);
      if (augmented) {
        sys.G(t, L + s) = G12full(r * d + i, r2 * d + j);
        sys.G(L + t, s) = G12full(r2 * d + j, r * d + i);
        sys.G(L + t, L + s) = G22full(r * d + i, r2 * d + j);
      }
    }
  }
  return sys;
}

LiteSystem assemble_lite(const Mat& X, const Mat& Y, const KernelConfig& kernel,
                         const ScoreFn& q0_grad) {
  check_data(X, "assemble_lite");
  check_data(Y, "assemble_lite (basis points)");
  if (Y.cols() != X.cols())
    throw input_error("assemble_lite: basis dimension does not match data");
  const auto n = X.rows(), d = X.cols(), m = Y.rows();
  const bool has_q0 = static_cast<bool>(q0_grad);
  const Mat q0g = q0_gradient_rows(X, q0_grad);

  LiteSystem sys;
  sys.B.resize(n * d, m);
  sys.G = gram(kernel, Y, Y);
  sys.h = Vec::Zero(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const Vec ya = Y.row(a).transpose();
    for (Eigen::Index b = 0; b < n; ++b) {
      const Vec xb = X.row(b).transpose();
      const Vec g = kernel_grad_x(kernel, xb, ya);
      sys.B.block(b * d, a, d, 1) = g;
      sys.h(a) += kernel_second_diag_y(kernel, xb, ya).sum();
      if (has_q0) sys.h(a) += g.dot(q0g.row(b));
    }
  }
  sys.h /= static_cast<double>(n);
  return sys;
}

double full_objective(const FullSystem& sys, Eigen::Index n, double lambda,
                      const Vec& beta) {
  check_lambda(lambda, "full_objective");
  const Vec image = sys.G * beta - sys.h / lambda;  // data-operator image of f
  const double quad = image.squaredNorm() / (2.0 * static_cast<double>(n));
  const double inner = -sys.xi_norm2 / lambda + beta.dot(sys.h);
  const double norm2 = sys.xi_norm2 / (lambda * lambda) -
                       2.0 * beta.dot(sys.h) / lambda + beta.dot(sys.G * beta);
  return quad + inner + 0.5 * lambda * norm2;
}

double nystrom_objective(const NystromSystem& sys, Eigen::Index n, double lambda,
                         const Vec& beta) {
  check_lambda(lambda, "nystrom_objective");
  return (sys.B * beta).squaredNorm() / (2.0 * static_cast<double>(n)) +
         beta.dot(sys.h) + 0.5 * lambda * beta.dot(sys.G * beta);
}

double lite_objective(const LiteSystem& sys, Eigen::Index n, double lambda,
                      LiteReg reg, const Vec& beta) {
  check_lambda(lambda, "lite_objective");
  double reg_term = beta.dot(sys.G * beta);
  if (reg == LiteReg::rkhs_plus_l2) reg_term += beta.squaredNorm();
  return (sys.B * beta).squaredNorm() / (2.0 * static_cast<double>(n)) +
         beta.dot(sys.h) + 0.5 * lambda * reg_term;
}

PinvSolve pinv_solve_sym(const Mat& M, const Vec& rhs, double jitter,
                         double rel_cutoff) {
  if (M.rows() != M.cols() || M.rows() != rhs.size())
    throw input_error("pinv_solve_sym: shape mismatch");
  if (!(jitter >= 0.0) || !std::isfinite(jitter))
    throw input_error("pinv_solve_sym: jitter must be finite and >= 0");
  if (!M.allFinite() || !rhs.allFinite())
    throw numerical_error("pinv_solve_sym: non-finite system entries");
  Mat A = M;
  if (jitter != 0.0) A.diagonal().array() += jitter;
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  if (es.info() != Eigen::Success)
    throw numerical_error("pinv_solve_sym: eigendecomposition failed on a " +
                          std::to_string(M.rows()) + "x" + std::to_string(M.cols()) +
                          " system");
  const Vec& evals = es.eigenvalues();
  const Mat& V = es.eigenvectors();
  const double lmax = evals.maxCoeff();
  const double cutoff = lmax > 0.0 ? rel_cutoff * lmax : 0.0;

  PinvSolve out;
  out.x = Vec::Zero(rhs.size());
  Vec projected_rhs = Vec::Zero(rhs.size());
  if (lmax > 0.0) {
    const Vec coeffs = V.transpose() * rhs;
    for (Eigen::Index i = 0; i < evals.size(); ++i) {
      if (evals(i) > cutoff) {
        out.x += V.col(i) * (coeffs(i) / evals(i));
        projected_rhs += V.col(i) * coeffs(i);
        ++out.effective_rank;
      }
    }
  }
  const double denom = projected_rhs.norm();
  out.residual_norm = denom > 0.0 ? (A * out.x - projected_rhs).norm() / denom : 0.0;
  return out;
}

FitResult fit_full(const Mat& X, const KernelConfig& kernel, double lambda,
                   const ScoreFn& q0_grad, const FitOptions& options) {
  check_data(X, "fit_full");
  check_lambda(lambda, "fit_full");
  const auto n = X.rows(), d = X.cols();
  const Eigen::Index nd = n * d;
  if (nd > options.full_size_cap && !options.force)
    throw resource_error("fit_full: system size n*d = " + std::to_string(nd) +
                         " exceeds the cap " + std::to_string(options.full_size_cap) +
                         "; use the subsampled estimator or force the fit");

  FitReport report;
  report.system_size = nd;

  const auto t0 = Clock::now();
  const FullSystem sys = assemble_full(X, kernel, q0_grad);
  report.assembly_seconds = seconds_since(t0);

  const auto t1 = Clock::now();
  Mat A = sys.G;
  A.diagonal().array() += static_cast<double>(n) * lambda;
  const Vec rhs = sys.h / lambda;
  const Vec beta = A.ldlt().solve(rhs);
  report.solve_seconds = seconds_since(t1);
  if (!beta.allFinite())
    throw numerical_error("fit_full: solver produced non-finite coefficients (n=" +
                          std::to_string(n) + ", d=" + std::to_string(d) +
                          ", sigma=" + std::to_string(kernel.sigma) +
                          ", lambda=" + std::to_string(lambda) + ")");
  const double rhs_norm = rhs.norm();
  report.residual_norm = rhs_norm > 0.0 ? (A * beta - rhs).norm() / rhs_norm : 0.0;
  report.effective_rank = nd;
  report.jitter_used = 0.0;

  ScoreModel model(ModelKind::full, kernel, lambda);
  model.xi_scale = -1.0 / lambda;
  model.basis.mode = BasisMode::all_components;
  model.basis.points = X;
  for (Eigen::Index b = 0; b < n; ++b)
    for (Eigen::Index i = 0; i < d; ++i) model.basis.index_set.emplace_back(b, i);
  model.beta = beta;
  model.q0_grad = q0_grad;
  model.q0_grad_at_points = q0_gradient_rows(X, q0_grad);
  return FitResult{std::move(model), report};
}

FitResult fit_nystrom(const Mat& X, const BasisSpec& basis,
                      const KernelConfig& kernel, double lambda,
                      const ScoreFn& q0_grad, const FitOptions& options) {
  check_data(X, "fit_nystrom");
  check_lambda(lambda, "fit_nystrom");
  const double jitter = options.jitter.value_or(1e-5);

  FitReport report;
  const auto t0 = Clock::now();
  const NystromSystem sys =
      assemble_nystrom(X, basis, kernel, q0_grad, options.augmented);
  report.assembly_seconds = seconds_since(t0);
  report.system_size = sys.G.rows();

  const auto t1 = Clock::now();
  const Mat M =
      sys.B.transpose() * sys.B / static_cast<double>(X.rows()) + lambda * sys.G;
  const PinvSolve solved = pinv_solve_sym(M, -sys.h, jitter);
  report.solve_seconds = seconds_since(t1);
  report.jitter_used = jitter;
  report.residual_norm = solved.residual_norm;
  report.effective_rank = solved.effective_rank;

  ScoreModel model(ModelKind::nystrom, kernel, lambda);
  model.basis = basis;
  model.beta = solved.x;
  model.augmented = options.augmented;
  model.q0_grad = q0_grad;
  compact_basis(model);
  return FitResult{std::move(model), report};
}

FitResult fit_lite(const Mat& X, const Mat& Y, const KernelConfig& kernel,
                   double lambda, LiteReg reg, const ScoreFn& q0_grad,
                   const FitOptions& options) {
  check_data(X, "fit_lite");
  check_lambda(lambda, "fit_lite");
  const double jitter = options.jitter.value_or(0.0);

  FitReport report;
  const auto t0 = Clock::now();
  const LiteSystem sys = assemble_lite(X, Y, kernel, q0_grad);
  report.assembly_seconds = seconds_since(t0);
  report.system_size = Y.rows();

  const auto t1 = Clock::now();
  Mat R = sys.G;
  if (reg == LiteReg::rkhs_plus_l2) R.diagonal().array() += 1.0;
  const Mat M =
      sys.B.transpose() * sys.B / static_cast<double>(X.rows()) + lambda * R;
  const PinvSolve solved = pinv_solve_sym(M, -sys.h, jitter);
  report.solve_seconds = seconds_since(t1);
  report.jitter_used = jitter;
  report.residual_norm = solved.residual_norm;
  report.effective_rank = solved.effective_rank;

  ScoreModel model(ModelKind::lite, kernel, lambda);
  model.basis.mode = BasisMode::explicit_set;
  model.basis.points = Y;
  model.beta = solved.x;
  model.q0_grad = q0_grad;
  return FitResult{std::move(model), report};
}

}  // namespace kexfam
