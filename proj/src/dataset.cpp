#include "kexfam/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string_view>
#include <system_error>

#include <json.hpp>

#include "kexfam/errors.hpp"
#include "kexfam/rng.hpp"
#include "kexfam/text.hpp"

namespace kexfam {

namespace {

using nlohmann::json;

std::vector<double> normalized_weights(const std::vector<double>& weights,
                                       std::size_t count, const char* what) {
  std::vector<double> w;
  if (weights.empty()) {
    w.assign(count, 1.0 / static_cast<double>(count));
    return w;
  }
  if (weights.size() != count)
    throw input_error(std::string(what) + ": weights size " +
                      std::to_string(weights.size()) + " does not match component count " +
                      std::to_string(count));
  double total = 0.0;
  for (double v : weights) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw input_error(std::string(what) + ": weights must be finite and >= 0");
    total += v;
  }
  if (!(total > 0.0))
    throw input_error(std::string(what) + ": weights must not all be zero");
  w = weights;
  for (double& v : w) v /= total;
  return w;
}

// One uniform draw, then a scan over the cumulative weights.
std::size_t draw_component(const std::vector<double>& w, RandomStream& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    cum += w[k];
    if (u < cum) return k;
  }
  return w.size() - 1;
}

double logsumexp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

std::vector<double> softmax(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  std::vector<double> out(v.size());
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out[k] = std::exp(v[k] - mx);
    s += out[k];
  }
  for (double& x : out) x /= s;
  return out;
}

json params_to_json(const GeneratorParams& params) {
  json out;
  if (const auto* rp = std::get_if<RingParams>(&params)) {
    out["radii"] = rp->radii;
    out["radial_std"] = rp->radial_std;
    out["noise_std"] = rp->noise_std;
    out["weights"] = rp->weights;
  } else if (const auto* gp = std::get_if<GridParams>(&params)) {
    out["side"] = gp->side;
    out["component_std"] = gp->component_std;
    out["weights"] = gp->weights;
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < gp->vertices.rows(); ++r) {
      std::vector<double> row(gp->vertices.cols());
      for (Eigen::Index c = 0; c < gp->vertices.cols(); ++c)
        row[static_cast<std::size_t>(c)] = gp->vertices(r, c);
      rows.push_back(std::move(row));
    }
    out["vertices"] = rows;
  } else if (const auto* np = std::get_if<GaussianParams>(&params)) {
    out["mean"] = std::vector<double>(np->mean.data(), np->mean.data() + np->mean.size());
    out["std"] = np->std;
  }
  return out;
}

GeneratorParams params_from_json(const std::string& generator, const json& j) {
  if (generator == "ring") {
    RingParams p;
    p.radii = j.at("radii").get<std::vector<double>>();
    p.radial_std = j.at("radial_std").get<double>();
    p.noise_std = j.at("noise_std").get<double>();
    p.weights = j.at("weights").get<std::vector<double>>();
    return p;
  }
  if (generator == "grid") {
    GridParams p;
    p.side = j.at("side").get<double>();
    p.component_std = j.at("component_std").get<double>();
    p.weights = j.at("weights").get<std::vector<double>>();
    const auto rows = j.at("vertices").get<std::vector<std::vector<double>>>();
    if (!rows.empty()) {
      p.vertices.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
          throw input_error("dataset sidecar: ragged vertices array");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
          p.vertices(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    return p;
  }
  if (generator == "gaussian") {
    GaussianParams p;
    const auto mean = j.at("mean").get<std::vector<double>>();
    p.mean = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    p.std = j.at("std").get<double>();
    return p;
  }
  return ExternalParams{};
}

}  // namespace

Dataset sample_ring(Eigen::Index n, Eigen::Index d, const RingParams& params,
                    std::uint64_t seed) {
  if (n < 1) throw input_error("sample_ring: n must be >= 1");
  if (d < 2) throw input_error("sample_ring: d must be >= 2");
  if (params.radii.empty()) throw input_error("sample_ring: radii must be non-empty");
  for (double r : params.radii)
    if (!(r > 0.0) || !std::isfinite(r))
      throw input_error("sample_ring: radii must be finite and > 0");
  if (!(params.radial_std >= 0.0) || !(params.noise_std >= 0.0))
    throw input_error("sample_ring: radial_std and noise_std must be >= 0");
  const auto w = normalized_weights(params.weights, params.radii.size(), "sample_ring");

  RandomStream rng(seed, streams::kDataset);
  Mat points(n, d);
  for (Eigen::Index b = 0; b < n; ++b) {
    const std::size_t k = draw_component(w, rng);
    const double angle = 2.0 * std::numbers::pi * rng.uniform01();
    const double radius = params.radii[k] + params.radial_std * rng.normal();
    points(b, 0) = radius * std::cos(angle);
    points(b, 1) = radius * std::sin(angle);
    for (Eigen::Index j = 2; j < d; ++j)
      points(b, j) = params.noise_std * rng.normal();
  }

  Dataset out;
  out.points = std::move(points);
  out.generator = "ring";
  out.seed = seed;
  out.params = params;
  return out;
}

Dataset sample_grid(Eigen::Index n, Eigen::Index d, const GridParams& params,
                    std::uint64_t seed) {
  if (n < 1) throw input_error("sample_grid: n must be >= 1");
  if (d < 1 || d > 40) throw input_error("sample_grid: d must be in [1, 40]");
  if (!(params.component_std > 0.0))
    throw input_error("sample_grid: component_std must be > 0");
  if (!std::isfinite(params.side)) throw input_error("sample_grid: side must be finite");
  const auto w = normalized_weights(params.weights, static_cast<std::size_t>(d),
                                    "sample_grid");

  RandomStream rng(seed, streams::kDataset);
  GridParams used = params;
  if (used.vertices.size() == 0) {
    // Uniform without replacement over the 2^d vertex codes: draw a code,
    // reject if already chosen.
    const std::uint64_t num_codes = 1ull << d;
    std::vector<std::uint64_t> codes;
    while (codes.size() < static_cast<std::size_t>(d)) {
      const std::uint64_t code = rng.uniform_index(num_codes);
      bool dup = false;
      for (std::uint64_t c : codes) dup = dup || (c == code);
      if (!dup) codes.push_back(code);
    }
    used.vertices.resize(d, d);
    for (Eigen::Index k = 0; k < d; ++k)
      for (Eigen::Index j = 0; j < d; ++j)
        used.vertices(k, j) = ((codes[static_cast<std::size_t>(k)] >> j) & 1ull)
                                  ? used.side
                                  : 0.0;
  } else if (used.vertices.rows() != d || used.vertices.cols() != d) {
    throw input_error("sample_grid: provided vertices must be d x d");
  }

  Mat points(n, d);
  for (Eigen::Index b = 0; b < n; ++b) {
    const std::size_t k = draw_component(w, rng);
    for (Eigen::Index j = 0; j < d; ++j)
      points(b, j) = used.vertices(static_cast<Eigen::Index>(k), j) +
                     used.component_std * rng.normal();
  }

  Dataset out;
  out.points = std::move(points);
  out.generator = "grid";
  out.seed = seed;
  out.params = used;
  return out;
}

Dataset sample_gaussian(Eigen::Index n, Eigen::Index d,
                        const GaussianParams& params, std::uint64_t seed) {
  if (n < 1) throw input_error("sample_gaussian: n must be >= 1");
  if (d < 1) throw input_error("sample_gaussian: d must be >= 1");
  if (!(params.std > 0.0)) throw input_error("sample_gaussian: std must be > 0");
  GaussianParams used = params;
  if (used.mean.size() == 0) used.mean = Vec::Zero(d);
  if (used.mean.size() != d)
    throw input_error("sample_gaussian: mean length must equal d");

  RandomStream rng(seed, streams::kDataset);
  Mat points(n, d);
  for (Eigen::Index b = 0; b < n; ++b)
    for (Eigen::Index j = 0; j < d; ++j)
      points(b, j) = used.mean(j) + used.std * rng.normal();

  Dataset out;
  out.points = std::move(points);
  out.generator = "gaussian";
  out.seed = seed;
  out.params = used;
  return out;
}

namespace {

void check_ring_point(const RingParams& params, const Vec& x) {
  if (x.size() < 2) throw input_error("ring density: point dimension must be >= 2");
  if (!(params.radial_std > 0.0))
    throw evaluation_error("ring density: radial_std must be > 0");
  if (x.size() > 2 && !(params.noise_std > 0.0))
    throw evaluation_error("ring density: noise_std must be > 0 when d > 2");
}

std::vector<double> ring_logits(const RingParams& params, double r,
                                const std::vector<double>& w) {
  const double s2 = params.radial_std * params.radial_std;
  std::vector<double> logits(params.radii.size());
  for (std::size_t k = 0; k < params.radii.size(); ++k) {
    const double dr = r - params.radii[k];
    logits[k] = std::log(w[k]) - dr * dr / (2.0 * s2);
  }
  return logits;
}

}  // namespace

double ring_log_density(const RingParams& params, const Vec& x) {
  check_ring_point(params, x);
  const auto w = normalized_weights(params.weights, params.radii.size(), "ring density");
  const double r = std::hypot(x(0), x(1));
  if (!(r > 0.0))
    throw evaluation_error("ring density: undefined on the axis r = 0");
  double out = logsumexp(ring_logits(params, r, w)) - std::log(r);
  const double t2 = params.noise_std * params.noise_std;
  for (Eigen::Index j = 2; j < x.size(); ++j) out -= x(j) * x(j) / (2.0 * t2);
  return out;
}

Vec ring_true_score(const RingParams& params, const Vec& x) {
  check_ring_point(params, x);
  const auto w = normalized_weights(params.weights, params.radii.size(), "ring score");
  const double r = std::hypot(x(0), x(1));
  if (!(r > 0.0))
    throw evaluation_error("ring score: undefined on the axis r = 0");
  const auto gamma = softmax(ring_logits(params, r, w));
  const double s2 = params.radial_std * params.radial_std;
  double radial = -1.0 / r;
  for (std::size_t k = 0; k < params.radii.size(); ++k)
    radial -= gamma[k] * (r - params.radii[k]) / s2;
  Vec score(x.size());
  score(0) = radial * x(0) / r;
  score(1) = radial * x(1) / r;
  const double t2 = params.noise_std * params.noise_std;
  for (Eigen::Index j = 2; j < x.size(); ++j) score(j) = -x(j) / t2;
  return score;
}

namespace {

std::vector<double> grid_logits(const GridParams& params, const Vec& x,
                                const std::vector<double>& w) {
  const double s2 = params.component_std * params.component_std;
  std::vector<double> logits(static_cast<std::size_t>(params.vertices.rows()));
  for (Eigen::Index k = 0; k < params.vertices.rows(); ++k)
    logits[static_cast<std::size_t>(k)] =
        std::log(w[static_cast<std::size_t>(k)]) -
        (x - params.vertices.row(k).transpose()).squaredNorm() / (2.0 * s2);
  return logits;
}

void check_grid_point(const GridParams& params, const Vec& x) {
  if (params.vertices.size() == 0)
    throw input_error("grid density: vertices not set (sample first or provide them)");
  if (x.size() != params.vertices.cols())
    throw input_error("grid density: point dimension does not match vertices");
  if (!(params.component_std > 0.0))
    throw evaluation_error("grid density: component_std must be > 0");
}

}  // namespace

double grid_log_density(const GridParams& params, const Vec& x) {
  check_grid_point(params, x);
  const auto w = normalized_weights(
      params.weights, static_cast<std::size_t>(params.vertices.rows()), "grid density");
  return logsumexp(grid_logits(params, x, w));
}

Vec grid_true_score(const GridParams& params, const Vec& x) {
  check_grid_point(params, x);
  const auto w = normalized_weights(
      params.weights, static_cast<std::size_t>(params.vertices.rows()), "grid score");
  const auto resp = softmax(grid_logits(params, x, w));
  const double s2 = params.component_std * params.component_std;
  Vec score = Vec::Zero(x.size());
  for (Eigen::Index k = 0; k < params.vertices.rows(); ++k)
    score += resp[static_cast<std::size_t>(k)] *
             (params.vertices.row(k).transpose() - x) / s2;
  return score;
}

double gaussian_log_density(const GaussianParams& params, const Vec& x) {
  if (!(params.std > 0.0)) throw evaluation_error("gaussian density: std must be > 0");
  Vec mean = params.mean.size() == 0 ? Vec::Zero(x.size()) : params.mean;
  if (mean.size() != x.size())
    throw input_error("gaussian density: mean length does not match point");
  return -(x - mean).squaredNorm() / (2.0 * params.std * params.std);
}

Vec gaussian_true_score(const GaussianParams& params, const Vec& x) {
  if (!(params.std > 0.0)) throw evaluation_error("gaussian score: std must be > 0");
  Vec mean = params.mean.size() == 0 ? Vec::Zero(x.size()) : params.mean;
  if (mean.size() != x.size())
    throw input_error("gaussian score: mean length does not match point");
  return -(x - mean) / (params.std * params.std);
}

bool has_true_score(const Dataset& data) {
  return data.generator == "ring" || data.generator == "grid" ||
         data.generator == "gaussian";
}

Vec dataset_true_score(const Dataset& data, const Vec& x) {
  if (const auto* rp = std::get_if<RingParams>(&data.params))
    return ring_true_score(*rp, x);
  if (const auto* gp = std::get_if<GridParams>(&data.params))
    return grid_true_score(*gp, x);
  if (const auto* np = std::get_if<GaussianParams>(&data.params))
    return gaussian_true_score(*np, x);
  throw input_error("dataset_true_score: generator '" + data.generator +
                    "' has no analytic score");
}

double dataset_log_density(const Dataset& data, const Vec& x) {
  if (const auto* rp = std::get_if<RingParams>(&data.params))
    return ring_log_density(*rp, x);
  if (const auto* gp = std::get_if<GridParams>(&data.params))
    return grid_log_density(*gp, x);
  if (const auto* np = std::get_if<GaussianParams>(&data.params))
    return gaussian_log_density(*np, x);
  throw input_error("dataset_log_density: generator '" + data.generator +
                    "' has no analytic density");
}

std::string points_to_csv(const Mat& points) {
  if (points.rows() == 0 || points.cols() == 0)
    throw input_error("points_to_csv: empty point matrix");
  std::string out;
  out.reserve(static_cast<std::size_t>(points.size()) * 20);
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    if (j > 0) out.push_back(',');
    out += "x" + std::to_string(j + 1);
  }
  out.push_back('\n');
  for (Eigen::Index b = 0; b < points.rows(); ++b) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      if (j > 0) out.push_back(',');
      out += double_to_string(points(b, j));
    }
    out.push_back('\n');
  }
  return out;
}

Mat points_from_csv_text(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  bool header = true;
  Eigen::Index d = -1;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      if (header) {
        d = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',')) + 1;
        header = false;
      } else {
        std::vector<double> row;
        std::size_t cpos = 0;
        while (true) {
          std::size_t cend = line.find(',', cpos);
          const std::string_view cell =
              line.substr(cpos, cend == std::string_view::npos ? std::string_view::npos
                                                               : cend - cpos);
          row.push_back(parse_double(cell, "points CSV"));
          if (cend == std::string_view::npos) break;
          cpos = cend + 1;
        }
        if (static_cast<Eigen::Index>(row.size()) != d)
          throw input_error("points CSV: row with " + std::to_string(row.size()) +
                            " values, expected " + std::to_string(d));
        rows.push_back(std::move(row));
      }
    }
    pos = end + 1;
  }
  if (header || rows.empty()) throw input_error("points CSV: no data rows");
  Mat out(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t b = 0; b < rows.size(); ++b)
    for (Eigen::Index j = 0; j < d; ++j)
      out(static_cast<Eigen::Index>(b), j) = rows[b][static_cast<std::size_t>(j)];
  return out;
}

void write_points_csv(const Mat& points, const std::string& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open for writing: " + path);
  file << points_to_csv(points);
  if (!file) throw std::runtime_error("write failed: " + path);
}

Mat read_points_csv(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw input_error("cannot open: " + path);
  std::ostringstream buf;
  buf << file.rdbuf();
  return points_from_csv_text(buf.str());
}

std::string sidecar_path_for(const std::string& csv_path) {
  if (csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".csv")
    return csv_path.substr(0, csv_path.size() - 4) + ".json";
  return csv_path + ".json";
}

void write_dataset(const Dataset& data, const std::string& csv_path) {
  write_points_csv(data.points, csv_path);
  json side;
  side["generator"] = data.generator;
  side["seed"] = data.seed;
  side["n"] = data.n();
  side["d"] = data.d();
  side["params"] = params_to_json(data.params);
  std::ofstream file(sidecar_path_for(csv_path), std::ios::binary);
  if (!file)
    throw std::runtime_error("cannot open for writing: " + sidecar_path_for(csv_path));
  file << side.dump(2) << "\n";
}

Dataset load_dataset(const std::string& csv_path) {
  Dataset out;
  out.points = read_points_csv(csv_path);
  const std::string side_path = sidecar_path_for(csv_path);
  if (!std::filesystem::exists(side_path)) return out;
  std::ifstream file(side_path, std::ios::binary);
  if (!file) throw input_error("cannot open: " + side_path);
  json side;
  try {
    file >> side;
    out.generator = side.at("generator").get<std::string>();
    out.seed = side.at("seed").get<std::uint64_t>();
    out.params = params_from_json(out.generator, side.at("params"));
    if (side.at("n").get<Eigen::Index>() != out.n() ||
        side.at("d").get<Eigen::Index>() != out.d())
      throw input_error("dataset sidecar shape does not match CSV: " + side_path);
  } catch (const json::exception& e) {
    throw input_error("malformed dataset sidecar " + side_path + ": " + e.what());
  }
  return out;
}

}  // namespace kexfam
