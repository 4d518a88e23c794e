#include "kexfam/basis.hpp"

#include <algorithm>
#include <cmath>

#include "kexfam/errors.hpp"
#include "kexfam/rng.hpp"

namespace kexfam {

std::string to_string(BasisMode mode) {
  switch (mode) {
    case BasisMode::all_components: return "all_components";
    case BasisMode::bernoulli: return "bernoulli";
    case BasisMode::per_point: return "per_point";
    case BasisMode::global: return "global";
    case BasisMode::explicit_set: return "explicit";
  }
  throw input_error("unknown basis mode value");
}

BasisMode basis_mode_from_string(const std::string& name) {
  if (name == "all_components") return BasisMode::all_components;
  if (name == "bernoulli") return BasisMode::bernoulli;
  if (name == "per_point") return BasisMode::per_point;
  if (name == "global") return BasisMode::global;
  if (name == "explicit") return BasisMode::explicit_set;
  throw input_error("unknown basis mode '" + name + "'");
}

namespace {

Mat select_rows(const Mat& X, const std::vector<std::size_t>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

void check_points(const Mat& X, const char* what) {
  if (X.rows() < 1 || X.cols() < 1)
    throw input_error(std::string(what) + ": point matrix must be non-empty");
}

void check_m(const Mat& X, Eigen::Index m, const char* what) {
  if (m < 1 || m > X.rows())
    throw input_error(std::string(what) + ": need 1 <= m <= n, got m=" +
                      std::to_string(m) + " n=" + std::to_string(X.rows()));
}

}  // namespace

BasisSpec make_basis_all(const Mat& X, Eigen::Index m, std::uint64_t seed) {
  check_points(X, "make_basis_all");
  check_m(X, m, "make_basis_all");
  RandomStream rng(seed, streams::kBasis);
  const auto rows = sample_without_replacement(
      static_cast<std::size_t>(X.rows()), static_cast<std::size_t>(m), rng);
  BasisSpec spec;
  spec.mode = BasisMode::all_components;
  spec.points = select_rows(X, rows);
  spec.seed = seed;
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index i = 0; i < X.cols(); ++i) spec.index_set.emplace_back(a, i);
  return spec;
}

BasisSpec make_basis_bernoulli(const Mat& X, Eigen::Index m, double p,
                               std::uint64_t seed) {
  check_points(X, "make_basis_bernoulli");
  check_m(X, m, "make_basis_bernoulli");
  if (!(p > 0.0) || p > 1.0 || !std::isfinite(p))
    throw input_error("make_basis_bernoulli: need 0 < p <= 1");
  RandomStream rng(seed, streams::kBasis);
  const auto rows = sample_without_replacement(
      static_cast<std::size_t>(X.rows()), static_cast<std::size_t>(m), rng);
  BasisSpec spec;
  spec.mode = BasisMode::bernoulli;
  spec.points = select_rows(X, rows);
  spec.seed = seed;
  spec.p = p;
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index i = 0; i < X.cols(); ++i)
      if (rng.uniform01() < p) spec.index_set.emplace_back(a, i);
  if (spec.index_set.empty())
    throw input_error(
        "make_basis_bernoulli: drawn index set is empty; increase p or change seed");
  return spec;
}

BasisSpec make_basis_per_point(const Mat& X, Eigen::Index m, Eigen::Index ell,
                               std::uint64_t seed) {
  check_points(X, "make_basis_per_point");
  check_m(X, m, "make_basis_per_point");
  if (ell < 1 || ell > X.cols())
    throw input_error("make_basis_per_point: need 1 <= ell <= d, got ell=" +
                      std::to_string(ell) + " d=" + std::to_string(X.cols()));
  RandomStream rng(seed, streams::kBasis);
  const auto rows = sample_without_replacement(
      static_cast<std::size_t>(X.rows()), static_cast<std::size_t>(m), rng);
  BasisSpec spec;
  spec.mode = BasisMode::per_point;
  spec.points = select_rows(X, rows);
  spec.seed = seed;
  spec.ell = ell;
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto dims = sample_without_replacement(static_cast<std::size_t>(X.cols()),
                                                 static_cast<std::size_t>(ell), rng);
    for (std::size_t i : dims) spec.index_set.emplace_back(a, static_cast<Eigen::Index>(i));
  }
  return spec;
}

BasisSpec make_basis_global(const Mat& X, Eigen::Index count, std::uint64_t seed) {
  check_points(X, "make_basis_global");
  const Eigen::Index total = X.rows() * X.cols();
  if (count < 1 || count > total)
    throw input_error("make_basis_global: need 1 <= count <= n*d, got count=" +
                      std::to_string(count) + " n*d=" + std::to_string(total));
  RandomStream rng(seed, streams::kBasis);
  const auto flat = sample_without_replacement(static_cast<std::size_t>(total),
                                               static_cast<std::size_t>(count), rng);
  BasisSpec spec;
  spec.mode = BasisMode::global;
  spec.points = X;
  spec.seed = seed;
  for (std::size_t f : flat)
    spec.index_set.emplace_back(static_cast<Eigen::Index>(f) / X.cols(),
                                static_cast<Eigen::Index>(f) % X.cols());
  return spec;
}

BasisSpec make_basis_explicit(const Mat& Y, std::vector<IndexPair> index_set) {
  check_points(Y, "make_basis_explicit");
  if (index_set.empty())
    throw input_error("make_basis_explicit: index set must be non-empty");
  for (const auto& [a, i] : index_set)
    if (a < 0 || a >= Y.rows() || i < 0 || i >= Y.cols())
      throw input_error("make_basis_explicit: index (" + std::to_string(a) + "," +
                        std::to_string(i) + ") out of range for " +
                        std::to_string(Y.rows()) + "x" + std::to_string(Y.cols()) +
                        " points");
  auto sorted = index_set;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw input_error("make_basis_explicit: duplicate (point, dim) pair in index set");
  BasisSpec spec;
  spec.mode = BasisMode::explicit_set;
  spec.points = Y;
  spec.index_set = std::move(index_set);
  return spec;
}

}  // namespace kexfam
