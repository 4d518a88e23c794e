#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "kexfam/basis.hpp"
#include "kexfam/kernel.hpp"

namespace kexfam {

enum class ModelKind { full, nystrom, lite };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// Gradient of the log base measure at a point.  A null function means the
// uniform (flat) base measure, i.e. gradient identically zero.
using ScoreFn = std::function<Vec(const Vec&)>;

// A fitted unnormalized log-density model f plus the base-measure hook.
//
//   full:    f(x) = xi_scale * xi(x) + sum_{(a,i)} beta_(a,i) d/dy_i k(Y_a, x)
//            with Y the full training set, xi the empirical residual
//            function built from second kernel derivatives at the training
//            points, and xi_scale = -1/lambda.
//   nystrom: f(x) = sum over the active index set only (xi_scale = 0).
//            With `augmented`, a second coefficient group on the functions
//            d2/dy_i2 k(Y_a, .) over the same index set is appended.
//   lite:    f(x) = sum_a beta_a k(Y_a, x).
//
// The model's score is grad f + grad log q0.
class ScoreModel {
 public:
  ScoreModel(ModelKind kind, KernelConfig kernel, double lambda);

  ModelKind kind;
  KernelConfig kernel;
  double lambda = 0.0;
  double xi_scale = 0.0;
  BasisSpec basis;
  Vec beta;
  bool augmented = false;
  ScoreFn q0_grad;         // null = uniform base measure
  Mat q0_grad_at_points;   // log q0 gradient rows at basis points (full kind)

  // f(x).
  double value(const Vec& x) const;
  // Gradient of f alone (no base measure term).
  Vec grad(const Vec& x) const;
  // grad f(x) + grad log q0(x): the model score.
  Vec score(const Vec& x) const;
  // Entries d2 f / dx_i2.
  Vec second_diag(const Vec& x) const;

  // Row-per-point batch versions.
  Vec value_batch(const Mat& X) const;
  Mat score_batch(const Mat& X) const;

  Eigen::Index dim() const { return basis.points.cols(); }
};

// JSON (de)serialization.  Documents carry a format tag, kernel and
// regularization scalars, the basis (points embedded as CSV text plus the
// index set) and the coefficient vector, printed with shortest round-trip
// precision: a reloaded model evaluates bit-identically.
//
// Only models with a uniform base measure can be serialized; basis points
// not referenced by the index set are dropped on save.
std::string model_to_json_text(const ScoreModel& model);
ScoreModel model_from_json_text(const std::string& text);
void save_model(const ScoreModel& model, const std::string& path);
ScoreModel load_model(const std::string& path);

// Drops basis points that no index pair references and remaps the index
// set (stable order).  Applied by fits and by serialization.
void compact_basis(ScoreModel& model);

}  // namespace kexfam
