#include "kexfam/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kexfam/dataset.hpp"
#include "kexfam/errors.hpp"
#include "kexfam/version.hpp"

namespace kexfam {

using nlohmann::json;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::full: return "full";
    case ModelKind::nystrom: return "nystrom";
    case ModelKind::lite: return "lite";
  }
  throw input_error("unknown model kind value");
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "full") return ModelKind::full;
  if (name == "nystrom") return ModelKind::nystrom;
  if (name == "lite") return ModelKind::lite;
  throw input_error("unknown model kind '" + name + "'");
}

ScoreModel::ScoreModel(ModelKind kind_in, KernelConfig kernel_in, double lambda_in)
    : kind(kind_in), kernel(kernel_in), lambda(lambda_in) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw input_error("ScoreModel: lambda must be finite and > 0");
}

namespace {

void check_eval_point(const ScoreModel& model, const Vec& x, const char* what) {
  if (x.size() != model.dim())
    throw input_error(std::string(what) + ": point dimension " +
                      std::to_string(x.size()) + " does not match model dimension " +
                      std::to_string(model.dim()));
}

// Per-basis-point derivative blocks, computed lazily and reused while
// consecutive index pairs reference the same point.
struct PointCache {
  const KernelConfig& cfg;
  const Mat& points;
  const Vec& x;
  Eigen::Index a = -1;
  Vec grad_first;   // d/dy_i k(Y_a, x)
  Mat cross;        // d/dy_i d/dx_j k(Y_a, x)
  Mat dx_dyy;       // d/dy_i d2/dx_j2 k(Y_a, x)
  Mat dxx_dyy;      // d2/dy_i2 d2/dx_j2 k(Y_a, x)
  Vec second_first; // d2/dy_i2 k(Y_a, x)
  bool has_grad = false, has_cross = false, has_dx = false, has_dxx = false,
       has_second = false;

  PointCache(const KernelConfig& cfg_in, const Mat& pts, const Vec& x_in)
      : cfg(cfg_in), points(pts), x(x_in) {}

  void focus(Eigen::Index a_new) {
    if (a_new == a) return;
    a = a_new;
    has_grad = has_cross = has_dx = has_dxx = has_second = false;
  }
  const Vec& grad() {
    if (!has_grad) {
      grad_first = kernel_grad_x(cfg, points.row(a).transpose(), x);
      has_grad = true;
    }
    return grad_first;
  }
  const Mat& cross_h() {
    if (!has_cross) {
      cross = kernel_cross_hessian(cfg, points.row(a).transpose(), x);
      has_cross = true;
    }
    return cross;
  }
  const Mat& dx() {
    if (!has_dx) {
      dx_dyy = kernel_dx_dyy(cfg, points.row(a).transpose(), x);
      has_dx = true;
    }
    return dx_dyy;
  }
  const Mat& dxx() {
    if (!has_dxx) {
      dxx_dyy = kernel_dxx_dyy(cfg, points.row(a).transpose(), x);
      has_dxx = true;
    }
    return dxx_dyy;
  }
  const Vec& second() {
    if (!has_second) {
      second_first = kernel_second_diag_y(cfg, points.row(a).transpose(), x);
      has_second = true;
    }
    return second_first;
  }
};

Eigen::Index coefficient_count(const ScoreModel& model) {
  if (model.kind == ModelKind::lite) return model.basis.points.rows();
  const auto base = static_cast<Eigen::Index>(model.basis.index_set.size());
  return model.augmented ? 2 * base : base;
}

void check_model_shape(const ScoreModel& model, const char* what) {
  if (model.beta.size() != coefficient_count(model))
    throw input_error(std::string(what) + ": coefficient vector length " +
                      std::to_string(model.beta.size()) + " does not match basis (" +
                      std::to_string(coefficient_count(model)) + " expected)");
  if (model.kind == ModelKind::lite && !model.basis.index_set.empty())
    throw input_error(std::string(what) + ": lite models use an empty index set");
  if (model.kind != ModelKind::lite && model.basis.index_set.empty())
    throw input_error(std::string(what) + ": index set must be non-empty");
}

}  // namespace

double ScoreModel::value(const Vec& x) const {
  check_eval_point(*this, x, "ScoreModel::value");
  check_model_shape(*this, "ScoreModel::value");
  double out = 0.0;
  if (kind == ModelKind::lite) {
    for (Eigen::Index a = 0; a < basis.points.rows(); ++a)
      out += beta(a) * kernel_eval(kernel, basis.points.row(a).transpose(), x);
    return out;
  }
  PointCache cache(kernel, basis.points, x);
  const auto n_idx = static_cast<Eigen::Index>(basis.index_set.size());
  for (Eigen::Index t = 0; t < n_idx; ++t) {
    const auto [a, i] = basis.index_set[static_cast<std::size_t>(t)];
    cache.focus(a);
    out += beta(t) * cache.grad()(i);
    if (augmented) out += beta(n_idx + t) * cache.second()(i);
  }
  if (xi_scale != 0.0) {
    const auto n = basis.points.rows();
    double xi = 0.0;
    for (Eigen::Index b = 0; b < n; ++b) {
      const Vec yb = basis.points.row(b).transpose();
      xi += kernel_second_diag_y(kernel, yb, x).sum();
      if (q0_grad_at_points.size() != 0)
        xi += kernel_grad_x(kernel, yb, x).dot(q0_grad_at_points.row(b));
    }
    out += xi_scale * xi / static_cast<double>(n);
  }
  return out;
}

Vec ScoreModel::grad(const Vec& x) const {
  check_eval_point(*this, x, "ScoreModel::grad");
  check_model_shape(*this, "ScoreModel::grad");
  const auto d = dim();
  Vec out = Vec::Zero(d);
  if (kind == ModelKind::lite) {
    for (Eigen::Index a = 0; a < basis.points.rows(); ++a)
      out += beta(a) * kernel_grad_x(kernel, x, basis.points.row(a).transpose());
    return out;
  }
  PointCache cache(kernel, basis.points, x);
  const auto n_idx = static_cast<Eigen::Index>(basis.index_set.size());
  for (Eigen::Index t = 0; t < n_idx; ++t) {
    const auto [a, i] = basis.index_set[static_cast<std::size_t>(t)];
    cache.focus(a);
    out += beta(t) * cache.cross_h().row(i).transpose();
    if (augmented) out -= beta(n_idx + t) * cache.dx().col(i);
  }
  if (xi_scale != 0.0) {
    const auto n = basis.points.rows();
    Vec xi = Vec::Zero(d);
    for (Eigen::Index b = 0; b < n; ++b) {
      const Vec yb = basis.points.row(b).transpose();
      xi -= kernel_dx_dyy(kernel, yb, x).rowwise().sum();
      if (q0_grad_at_points.size() != 0)
        xi += kernel_cross_hessian(kernel, yb, x).transpose() *
              q0_grad_at_points.row(b).transpose();
    }
    out += (xi_scale / static_cast<double>(n)) * xi;
  }
  return out;
}

Vec ScoreModel::score(const Vec& x) const {
  Vec out = grad(x);
  if (q0_grad) {
    const Vec q = q0_grad(x);
    if (q.size() != out.size())
      throw input_error("ScoreModel::score: q0_grad returned wrong dimension");
    out += q;
  }
  return out;
}

Vec ScoreModel::second_diag(const Vec& x) const {
  check_eval_point(*this, x, "ScoreModel::second_diag");
  check_model_shape(*this, "ScoreModel::second_diag");
  const auto d = dim();
  Vec out = Vec::Zero(d);
  if (kind == ModelKind::lite) {
    for (Eigen::Index a = 0; a < basis.points.rows(); ++a)
      out += beta(a) *
             kernel_second_diag_y(kernel, basis.points.row(a).transpose(), x);
    return out;
  }
  PointCache cache(kernel, basis.points, x);
  const auto n_idx = static_cast<Eigen::Index>(basis.index_set.size());
  for (Eigen::Index t = 0; t < n_idx; ++t) {
    const auto [a, i] = basis.index_set[static_cast<std::size_t>(t)];
    cache.focus(a);
    out += beta(t) * cache.dx().row(i).transpose();
    if (augmented) out += beta(n_idx + t) * cache.dxx().row(i).transpose();
  }
  if (xi_scale != 0.0) {
    const auto n = basis.points.rows();
    Vec xi = Vec::Zero(d);
    for (Eigen::Index b = 0; b < n; ++b) {
      const Vec yb = basis.points.row(b).transpose();
      xi += kernel_dxx_dyy(kernel, yb, x).colwise().sum().transpose();
      if (q0_grad_at_points.size() != 0)
        xi += kernel_dx_dyy(kernel, yb, x).transpose() *
              q0_grad_at_points.row(b).transpose();
    }
    out += (xi_scale / static_cast<double>(n)) * xi;
  }
  return out;
}

Vec ScoreModel::value_batch(const Mat& X) const {
  Vec out(X.rows());
  for (Eigen::Index b = 0; b < X.rows(); ++b) out(b) = value(X.row(b).transpose());
  return out;
}

Mat ScoreModel::score_batch(const Mat& X) const {
  Mat out(X.rows(), X.cols());
  for (Eigen::Index b = 0; b < X.rows(); ++b)
    out.row(b) = score(X.row(b).transpose()).transpose();
  return out;
}

void compact_basis(ScoreModel& model) {
  if (model.kind == ModelKind::lite) return;  // every point carries a coefficient
  std::vector<Eigen::Index> used;
  for (const auto& [a, i] : model.basis.index_set) used.push_back(a);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  if (used.size() == static_cast<std::size_t>(model.basis.points.rows())) return;
  std::vector<Eigen::Index> remap(static_cast<std::size_t>(model.basis.points.rows()), -1);
  Mat kept(static_cast<Eigen::Index>(used.size()), model.basis.points.cols());
  for (std::size_t r = 0; r < used.size(); ++r) {
    remap[static_cast<std::size_t>(used[r])] = static_cast<Eigen::Index>(r);
    kept.row(static_cast<Eigen::Index>(r)) = model.basis.points.row(used[r]);
  }
  model.basis.points = std::move(kept);
  for (auto& pair : model.basis.index_set)
    pair.first = remap[static_cast<std::size_t>(pair.first)];
  if (model.q0_grad_at_points.size() != 0) {
    Mat q(static_cast<Eigen::Index>(used.size()), model.q0_grad_at_points.cols());
    for (std::size_t r = 0; r < used.size(); ++r)
      q.row(static_cast<Eigen::Index>(r)) = model.q0_grad_at_points.row(used[r]);
    model.q0_grad_at_points = std::move(q);
  }
}

namespace {

bool has_nontrivial_base_measure(const ScoreModel& model) {
  if (model.q0_grad) return true;
  if (model.q0_grad_at_points.size() != 0 &&
      model.q0_grad_at_points.cwiseAbs().maxCoeff() > 0.0)
    return true;
  return false;
}

}  // namespace

std::string model_to_json_text(const ScoreModel& model) {
  check_model_shape(model, "model_to_json_text");
  if (has_nontrivial_base_measure(model))
    throw input_error(
        "model serialization supports only the uniform base measure "
        "(q0 gradient information cannot be stored)");
  ScoreModel compacted = model;
  compact_basis(compacted);

  json doc;
  doc["format"] = kModelFormatTag;
  doc["kind"] = to_string(compacted.kind);
  doc["sigma"] = compacted.kernel.sigma;
  doc["lambda"] = compacted.lambda;
  doc["xi_scale"] = compacted.xi_scale;
  doc["augmented"] = compacted.augmented;
  json basis;
  basis["mode"] = to_string(compacted.basis.mode);
  basis["seed"] = compacted.basis.seed;
  basis["p"] = compacted.basis.p;
  basis["ell"] = compacted.basis.ell;
  basis["points_csv"] = points_to_csv(compacted.basis.points);
  json idx = json::array();
  for (const auto& [a, i] : compacted.basis.index_set)
    idx.push_back(json::array({a, i}));
  basis["index_set"] = std::move(idx);
  doc["basis"] = std::move(basis);
  doc["beta"] = std::vector<double>(compacted.beta.data(),
                                    compacted.beta.data() + compacted.beta.size());
  return doc.dump(2) + "\n";
}

ScoreModel model_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw input_error(std::string("model JSON parse failure: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kModelFormatTag)
      throw input_error("model JSON: unsupported format tag '" +
                        doc.at("format").get<std::string>() + "'");
    ScoreModel model(model_kind_from_string(doc.at("kind").get<std::string>()),
                     KernelConfig(doc.at("sigma").get<double>()),
                     doc.at("lambda").get<double>());
    model.xi_scale = doc.at("xi_scale").get<double>();
    model.augmented = doc.at("augmented").get<bool>();
    const auto& jb = doc.at("basis");
    model.basis.mode = basis_mode_from_string(jb.at("mode").get<std::string>());
    model.basis.seed = jb.at("seed").get<std::uint64_t>();
    model.basis.p = jb.at("p").get<double>();
    model.basis.ell = jb.at("ell").get<Eigen::Index>();
    model.basis.points = points_from_csv_text(jb.at("points_csv").get<std::string>());
    for (const auto& pair : jb.at("index_set")) {
      if (!pair.is_array() || pair.size() != 2)
        throw input_error("model JSON: index_set entries must be [point, dim] pairs");
      const auto a = pair[0].get<Eigen::Index>();
      const auto i = pair[1].get<Eigen::Index>();
      if (a < 0 || a >= model.basis.points.rows() || i < 0 ||
          i >= model.basis.points.cols())
        throw input_error("model JSON: index_set entry out of range");
      model.basis.index_set.emplace_back(a, i);
    }
    const auto beta = doc.at("beta").get<std::vector<double>>();
    model.beta = Eigen::Map<const Vec>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    for (double v : beta)
      if (!std::isfinite(v)) throw input_error("model JSON: non-finite coefficient");
    if (model.kind == ModelKind::full)
      model.q0_grad_at_points = Mat::Zero(model.basis.points.rows(),
                                          model.basis.points.cols());
    check_model_shape(model, "model JSON");
    return model;
  } catch (const json::exception& e) {
    throw input_error(std::string("model JSON: missing or mistyped field: ") + e.what());
  }
}

void save_model(const ScoreModel& model, const std::string& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open for writing: " + path);
  file << model_to_json_text(model);
  if (!file) throw std::runtime_error("write failed: " + path);
}

ScoreModel load_model(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw input_error("cannot open: " + path);
  std::ostringstream buf;
  buf << file.rdbuf();
  return model_from_json_text(buf.str());
}

}  // namespace kexfam
