#pragma once

#include <Eigen/Dense>

namespace kexfam {

// Gaussian kernel k(x, y) = exp(-||x - y||^2 / sigma).
//
// Note the convention: sigma divides the *squared* distance directly
// (no factor 2 in the denominator).
//
// All derivatives below have closed forms in u = x - y with c = 2 / sigma
// and phi = k(x, y):
//   d/dx_i k                 = -c u_i phi
//   d/dx_i d/dy_j k          =  c (delta_ij - c u_i u_j) phi
//   d/dx_i d2/dy_j2 k        =  c^2 (2 u_j delta_ij + u_i - c u_i u_j^2) phi
//   d2/dx_i2 d2/dy_j2 k      =  c^2 (2 delta_ij + 1 - c u_i^2 - c u_j^2
//                                    - 4 c u_i u_j delta_ij
//                                    + c^2 u_i^2 u_j^2) phi
//   d2/dy_i2 k = d2/dx_i2 k  =  c (c u_i^2 - 1) phi
// Derivatives in the second argument flip the sign once per odd order in y.
struct KernelConfig {
  double sigma;

  explicit KernelConfig(double sigma_in);
};

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// k(x, y).
double kernel_eval(const KernelConfig& cfg, const Vec& x, const Vec& y);

// Entry i: d/dx_i k(x, y).
Vec kernel_grad_x(const KernelConfig& cfg, const Vec& x, const Vec& y);

// Entry (i, j): d/dx_i d/dy_j k(x, y).
Mat kernel_cross_hessian(const KernelConfig& cfg, const Vec& x, const Vec& y);

// Entry (i, j): d/dx_i d2/dy_j2 k(x, y).
Mat kernel_dx_dyy(const KernelConfig& cfg, const Vec& x, const Vec& y);

// Entry (i, j): d2/dx_i2 d2/dy_j2 k(x, y).
Mat kernel_dxx_dyy(const KernelConfig& cfg, const Vec& x, const Vec& y);

// Entry i: d2/dy_i2 k(x, y)  (equal to d2/dx_i2 k(x, y)).
Vec kernel_second_diag_y(const KernelConfig& cfg, const Vec& x, const Vec& y);

// Block assembly over point sets (rows of X: n x d, rows of Y: m x d).
//
// Coefficient indexing everywhere in this library is point-major,
// dimension-minor: slot (a, i) maps to flat index a*d + i.

// (n*d) x (m*d) matrix with block (b, a) = kernel_cross_hessian(X_b, Y_a),
// i.e. entry ((b,i),(a,j)) = d/dx_i d/dy_j k(X_b, Y_a).
Mat cross_hessian_block(const KernelConfig& cfg, const Mat& X, const Mat& Y);

// n x m plain Gram matrix K with K(b, a) = k(X_b, Y_a).
Mat gram(const KernelConfig& cfg, const Mat& X, const Mat& Y);

}  // namespace kexfam
