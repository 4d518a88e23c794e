#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace kexfam {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Concentric circles in the first two coordinates with Gaussian radial
// noise; remaining coordinates are independent Gaussian noise.
struct RingParams {
  std::vector<double> radii{1.0, 3.0, 5.0};
  double radial_std = 0.1;
  double noise_std = 0.1;
  std::vector<double> weights;  // empty = uniform over radii
};

// Mixture of d isotropic Gaussians whose means are d distinct vertices of
// the hypercube {0, side}^d, drawn once per dataset without replacement.
struct GridParams {
  double side = 4.0;
  double component_std = 1.0;
  std::vector<double> weights;  // empty = uniform over components
  Mat vertices;                 // d x d; empty = drawn from the seed
};

// Isotropic Gaussian, used as a plain HMC target.
struct GaussianParams {
  Vec mean;  // empty = zero vector
  double std = 1.0;
};

// Points loaded from a CSV with no generator metadata.
struct ExternalParams {};

using GeneratorParams =
    std::variant<RingParams, GridParams, GaussianParams, ExternalParams>;

struct Dataset {
  Mat points;  // n x d, one point per row
  std::string generator = "external";
  std::uint64_t seed = 0;
  GeneratorParams params = ExternalParams{};

  Eigen::Index n() const { return points.rows(); }
  Eigen::Index d() const { return points.cols(); }
};

// Samplers.  All randomness comes from the counter-based stream
// (seed, dataset stream id); draws are consumed in the documented order so
// outputs are bitwise reproducible across runs and platforms with IEEE
// doubles and the same libm.
//
// sample_ring draw order, per point: mixture component (1 uniform via CDF
// scan), angle (1 uniform), radial noise (1 normal), then one normal per
// extra dimension beyond the first two.  Requires d >= 2.
Dataset sample_ring(Eigen::Index n, Eigen::Index d, const RingParams& params,
                    std::uint64_t seed);

// sample_grid draw order: first the d vertices (one uniform index over the
// 2^d vertex codes per attempt, rejecting duplicates), unless
// params.vertices is already set; then per point: mixture component
// (1 uniform via CDF scan) and d normals.  Requires 1 <= d <= 40.
Dataset sample_grid(Eigen::Index n, Eigen::Index d, const GridParams& params,
                    std::uint64_t seed);

// sample_gaussian draw order, per point: d normals.
Dataset sample_gaussian(Eigen::Index n, Eigen::Index d,
                        const GaussianParams& params, std::uint64_t seed);

// Unnormalized log densities (constant offsets dropped) and their exact
// gradients.  Gradients are analytic; the pair is consistent so finite
// differences of the log density reproduce the score.
double ring_log_density(const RingParams& params, const Vec& x);
Vec ring_true_score(const RingParams& params, const Vec& x);

double grid_log_density(const GridParams& params, const Vec& x);
Vec grid_true_score(const GridParams& params, const Vec& x);

double gaussian_log_density(const GaussianParams& params, const Vec& x);
Vec gaussian_true_score(const GaussianParams& params, const Vec& x);

// Dispatchers over a dataset's generator tag.
bool has_true_score(const Dataset& data);
Vec dataset_true_score(const Dataset& data, const Vec& x);
double dataset_log_density(const Dataset& data, const Vec& x);

// CSV format: header x1,...,xd; one row per point; LF line endings;
// values printed with shortest round-trip precision so reloading is
// bit-exact.
std::string points_to_csv(const Mat& points);
Mat points_from_csv_text(const std::string& text);
void write_points_csv(const Mat& points, const std::string& path);
Mat read_points_csv(const std::string& path);

// Dataset persistence: CSV of points plus a JSON sidecar recording
// generator kind, seed, shape and generator parameters (including drawn
// grid vertices).  The sidecar path replaces a trailing ".csv" with
// ".json", or appends ".json" when there is no ".csv" suffix.
std::string sidecar_path_for(const std::string& csv_path);
void write_dataset(const Dataset& data, const std::string& csv_path);
// Loads the CSV; attaches generator metadata when the sidecar exists,
// otherwise tags the dataset as external.
Dataset load_dataset(const std::string& csv_path);

}  // namespace kexfam
