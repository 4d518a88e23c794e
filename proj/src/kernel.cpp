#include "kexfam/kernel.hpp"

#include <cmath>
#include <string>

#include "kexfam/errors.hpp"

namespace kexfam {

namespace {

void check_dims(const Vec& x, const Vec& y, const char* op) {
  if (x.size() != y.size() || x.size() == 0)
    throw input_error(std::string(op) + ": x and y must be non-empty with equal length, got " +
                      std::to_string(x.size()) + " and " + std::to_string(y.size()));
}

}  // namespace

KernelConfig::KernelConfig(double sigma_in) : sigma(sigma_in) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw input_error("KernelConfig: sigma must be finite and > 0, got " +
                      std::to_string(sigma_in));
}

double kernel_eval(const KernelConfig& cfg, const Vec& x, const Vec& y) {
  check_dims(x, y, "kernel_eval");
  return std::exp(-(x - y).squaredNorm() / cfg.sigma);
}

Vec kernel_grad_x(const KernelConfig& cfg, const Vec& x, const Vec& y) {
  check_dims(x, y, "kernel_grad_x");
  const Vec u = x - y;
  const double c = 2.0 / cfg.sigma;
  const double phi = std::exp(-u.squaredNorm() / cfg.sigma);
  return (-c * phi) * u;
}

Mat kernel_cross_hessian(const KernelConfig& cfg, const Vec& x, const Vec& y) {
  check_dims(x, y, "kernel_cross_hessian");
  const Vec u = x - y;
  const double c = 2.0 / cfg.sigma;
  const double phi = std::exp(-u.squaredNorm() / cfg.sigma);
  const auto d = u.size();
  Mat out(d, d);
  out.noalias() = (-c * c * phi) * (u * u.transpose());
  out.diagonal().array() += c * phi;
  return out;
}

Mat kernel_dx_dyy(const KernelConfig& cfg, const Vec& x, const Vec& y) {
  check_dims(x, y, "kernel_dx_dyy");
  const Vec u = x - y;
  const double c = 2.0 / cfg.sigma;
  const double phi = std::exp(-u.squaredNorm() / cfg.sigma);
  const auto d = u.size();
  Mat out(d, d);
  const double c2phi = c * c * phi;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double delta = (i == j) ? 1.0 : 0.0;
      out(i, j) = c2phi * (2.0 * u(j) * delta + u(i) - c * u(i) * u(j) * u(j));
    }
  }
  return out;
}

Mat kernel_dxx_dyy(const KernelConfig& cfg, const Vec& x, const Vec& y) {
  check_dims(x, y, "kernel_dxx_dyy");
  const Vec u = x - y;
  const double c = 2.0 / cfg.sigma;
  const double phi = std::exp(-u.squaredNorm() / cfg.sigma);
  const auto d = u.size();
  Mat out(d, d);
  const double c2phi = c * c * phi;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double ui2 = u(i) * u(i);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double uj2 = u(j) * u(j);
      const double delta = (i == j) ? 1.0 : 0.0;
      out(i, j) = c2phi * (2.0 * delta + 1.0 - c * ui2 - c * uj2 -
                           4.0 * c * u(i) * u(j) * delta + c * c * ui2 * uj2);
    }
  }
  return out;
}

Vec kernel_second_diag_y(const KernelConfig& cfg, const Vec& x, const Vec& y) {
  check_dims(x, y, "kernel_second_diag_y");
  const Vec u = x - y;
  const double c = 2.0 / cfg.sigma;
  const double phi = std::exp(-u.squaredNorm() / cfg.sigma);
  return c * phi * (c * u.array().square() - 1.0);
}

Mat cross_hessian_block(const KernelConfig& cfg, const Mat& X, const Mat& Y) {
  if (X.cols() != Y.cols() || X.cols() == 0)
    throw input_error("cross_hessian_block: X and Y must share a positive dimension");
  const auto n = X.rows(), m = Y.rows(), d = X.cols();
  const double c = 2.0 / cfg.sigma;
  Mat out(n * d, m * d);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index a = 0; a < m; ++a) {
      const Vec u = X.row(b).transpose() - Y.row(a).transpose();
      const double phi = std::exp(-u.squaredNorm() / cfg.sigma);
      auto block = out.block(b * d, a * d, d, d);
      block.noalias() = (-c * c * phi) * (u * u.transpose());
      block.diagonal().array() += c * phi;
    }
  }
  return out;
}

Mat gram(const KernelConfig& cfg, const Mat& X, const Mat& Y) {
  if (X.cols() != Y.cols() || X.cols() == 0)
    throw input_error("gram: X and Y must share a positive dimension");
  const auto n = X.rows(), m = Y.rows();
  Mat out(n, m);
  for (Eigen::Index b = 0; b < n; ++b)
    for (Eigen::Index a = 0; a < m; ++a)
      out(b, a) =
          std::exp(-(X.row(b) - Y.row(a)).squaredNorm() / cfg.sigma);
  return out;
}

}  // namespace kexfam
