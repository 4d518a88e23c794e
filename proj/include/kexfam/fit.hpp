#pragma once

#include <Eigen/Dense>
#include <optional>

#include "kexfam/basis.hpp"
#include "kexfam/kernel.hpp"
#include "kexfam/model.hpp"

namespace kexfam {

struct FitReport {
  double assembly_seconds = 0.0;
  double solve_seconds = 0.0;
  double jitter_used = 0.0;
  Eigen::Index system_size = 0;
  // Relative residual of the solved linear system; for pseudo-inverse
  // solves the right-hand side is first projected onto the range.
  double residual_norm = 0.0;
  Eigen::Index effective_rank = 0;
};

struct FitOptions {
  // Ridge added to the matrix before (pseudo-)inversion.  Defaults:
  // 1e-5 for the subsampled fit, 0 for the scalar-basis fit.
  std::optional<double> jitter;
  // Refuse full fits whose system exceeds this many coefficients (n*d)
  // unless force is set.
  Eigen::Index full_size_cap = 10000;
  bool force = false;
  // Subsampled fit only: append second-derivative basis functions
  // d2/dy_i2 k(Y_a, .) over the same index set.
  bool augmented = false;
};

// Regularizer used by the scalar-basis fit: either the RKHS norm alone or
// the RKHS norm plus the squared Euclidean norm of the coefficients.
enum class LiteReg { rkhs_norm, rkhs_plus_l2 };

std::string to_string(LiteReg reg);
LiteReg lite_reg_from_string(const std::string& name);

struct FitResult {
  ScoreModel model;
  FitReport report;
};

// Gradient rows of log q0 at each point (zeros when q0_grad is null).
Mat q0_gradient_rows(const Mat& X, const ScoreFn& q0_grad);

// --- Assembled linear systems (exposed for diagnostics and tests) ---

// Full-basis system over all n*d derivative components of the data.
struct FullSystem {
  Mat G;           // (n d) x (n d) second-derivative Gram matrix
  Vec h;           // stacked gradient of the empirical residual function
  double xi_norm2; // squared RKHS norm of that residual function
};
FullSystem assemble_full(const Mat& X, const KernelConfig& kernel,
                         const ScoreFn& q0_grad = nullptr);

// Subsampled system restricted to the basis index set (columns ordered as
// basis.index_set; with augmented, the second group is appended).
struct NystromSystem {
  Mat B;  // (n d) x |I| data-to-basis cross-derivative matrix
  Mat G;  // |I| x |I| basis Gram matrix
  Vec h;  // residual-function gradient at the active components
};
NystromSystem assemble_nystrom(const Mat& X, const BasisSpec& basis,
                               const KernelConfig& kernel,
                               const ScoreFn& q0_grad = nullptr,
                               bool augmented = false);

// Scalar-basis system with one plain kernel function per row of Y.
struct LiteSystem {
  Mat B;  // (n d) x m first-derivative matrix
  Mat G;  // m x m plain kernel Gram matrix
  Vec h;  // residual function evaluated at the basis points
};
LiteSystem assemble_lite(const Mat& X, const Mat& Y, const KernelConfig& kernel,
                         const ScoreFn& q0_grad = nullptr);

// Regularized empirical score-matching objective as a quadratic form in
// the coefficients (n = number of training points).  These equal the
// pointwise objective evaluated on the training data plus the RKHS
// regularizer; see the objective module for the pointwise route.
double full_objective(const FullSystem& sys, Eigen::Index n, double lambda,
                      const Vec& beta);
double nystrom_objective(const NystromSystem& sys, Eigen::Index n, double lambda,
                         const Vec& beta);
double lite_objective(const LiteSystem& sys, Eigen::Index n, double lambda,
                      LiteReg reg, const Vec& beta);

// --- Solver ---

// Minimum-norm solution of (M + jitter I) x = rhs through a symmetric
// eigendecomposition, keeping eigenvalues above rel_cutoff times the
// largest one.  residual_norm is computed against the rhs projected onto
// the retained eigenspace.
struct PinvSolve {
  Vec x;
  double residual_norm = 0.0;
  Eigen::Index effective_rank = 0;
};
PinvSolve pinv_solve_sym(const Mat& M, const Vec& rhs, double jitter,
                         double rel_cutoff = 1e-10);

// --- Fits ---

// Exact estimator: solves (G + n lambda I) beta = h / lambda and keeps the
// residual-function term with weight -1/lambda.  Refuses n*d beyond
// options.full_size_cap unless options.force.
FitResult fit_full(const Mat& X, const KernelConfig& kernel, double lambda,
                   const ScoreFn& q0_grad = nullptr, const FitOptions& options = {});

// Subsampled estimator over the basis index set:
//   beta = -((1/n) B^T B + lambda G + jitter I)^+ h.
FitResult fit_nystrom(const Mat& X, const BasisSpec& basis,
                      const KernelConfig& kernel, double lambda,
                      const ScoreFn& q0_grad = nullptr,
                      const FitOptions& options = {});

// Scalar-basis estimator with plain kernel functions at the rows of Y:
//   beta = -((1/n) B^T B + lambda R + jitter I)^+ h,
// R = G (rkhs_norm) or G + I (rkhs_plus_l2).
FitResult fit_lite(const Mat& X, const Mat& Y, const KernelConfig& kernel,
                   double lambda, LiteReg reg = LiteReg::rkhs_norm,
                   const ScoreFn& q0_grad = nullptr, const FitOptions& options = {});

}  // namespace kexfam
