#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace kexfam {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// How the active derivative components { d/dy_i k(Y_a, .) } are chosen.
enum class BasisMode {
  all_components,  // m sampled points, every dimension of each
  bernoulli,       // m sampled points, each (point, dim) kept independently w.p. p
  per_point,       // m sampled points, exactly ell sampled dims per point
  global,          // all points, a fixed number of (point, dim) pairs drawn
                   // uniformly without replacement from the full index grid
  explicit_set,    // caller-provided points and index set
};

std::string to_string(BasisMode mode);
BasisMode basis_mode_from_string(const std::string& name);

using IndexPair = std::pair<Eigen::Index, Eigen::Index>;  // (point row in Y, dim)

struct BasisSpec {
  BasisMode mode = BasisMode::explicit_set;
  Mat points;                      // m x d basis point matrix Y
  std::vector<IndexPair> index_set;  // active (point, dim) pairs, point-major order
  std::uint64_t seed = 0;
  double p = 1.0;        // bernoulli keep probability
  Eigen::Index ell = 0;  // per_point dims per point

  std::size_t size() const { return index_set.size(); }
};

// Basis constructors.  Point subsets are drawn uniformly without
// replacement from the rows of X (selection order: partial Fisher-Yates,
// then sorted ascending so equal-m draws nest naturally in reading order).
//
// Draw order: point selection first (m uniforms), then mode-specific dim
// draws per selected point in ascending point order.
BasisSpec make_basis_all(const Mat& X, Eigen::Index m, std::uint64_t seed);
BasisSpec make_basis_bernoulli(const Mat& X, Eigen::Index m, double p,
                               std::uint64_t seed);
BasisSpec make_basis_per_point(const Mat& X, Eigen::Index m, Eigen::Index ell,
                               std::uint64_t seed);
// Keeps all points and draws `count` (point, dim) pairs uniformly without
// replacement from the n*d grid.
BasisSpec make_basis_global(const Mat& X, Eigen::Index count, std::uint64_t seed);
BasisSpec make_basis_explicit(const Mat& Y, std::vector<IndexPair> index_set);

}  // namespace kexfam
