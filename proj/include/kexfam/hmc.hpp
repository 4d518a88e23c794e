#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kexfam/objective.hpp"

namespace kexfam {

using LogDensityFn = std::function<double(const Vec&)>;

struct HmcConfig {
  Eigen::Index num_steps = 100;
  double step_size = 0.1;
};

// A leapfrog path under the Hamiltonian with potential U and dU/dx equal
// to minus the supplied score field.  Row t holds the state after t steps.
struct Trajectory {
  Mat positions;  // (steps_completed + 1) x d
  Mat momenta;    // (steps_completed + 1) x d
  Eigen::Index steps_completed = 0;
  bool truncated = false;  // the score field went non-finite mid-path
};

// Integrates num_steps leapfrog steps (half momentum kick, position drift,
// half momentum kick) from (x0, p0).  A non-finite score or position stops
// the path early and marks it truncated.
Trajectory surrogate_trajectory(const TrueScoreFn& score_field, const Vec& x0,
                                const Vec& p0, const HmcConfig& config);

// Same, drawing p0 as d standard normals from (seed, HMC stream).
Trajectory surrogate_trajectory_seeded(const TrueScoreFn& score_field, const Vec& x0,
                                       const HmcConfig& config, std::uint64_t seed);

// Hypothetical Metropolis-Hastings acceptance of each visited state as an
// endpoint, judged under the true target (dynamics may use a surrogate
// score field):  a_t = min(1, exp(H(x0, p0) - H(x_t, p_t))) with
// H(x, p) = -target_logp(x) + ||p||^2 / 2.
//
// Steps missing because the trajectory truncated count as acceptance 0.
// mean_acceptance is the average over the num_steps entries and is defined
// as 1 when num_steps == 0.  A non-finite target_logp at a visited state
// is an error.
struct AcceptanceProfile {
  Trajectory trajectory;
  Vec per_step;  // length num_steps, entry t-1 for step t
  double mean_acceptance = 1.0;
};

AcceptanceProfile acceptance_profile(const TrueScoreFn& score_field,
                                     const LogDensityFn& target_logp, const Vec& x0,
                                     const Vec& p0, const HmcConfig& config);

AcceptanceProfile acceptance_profile_seeded(const TrueScoreFn& score_field,
                                            const LogDensityFn& target_logp,
                                            const Vec& x0, const HmcConfig& config,
                                            std::uint64_t seed);

// A named surrogate score field entering the comparison experiment.
struct ScoreField {
  std::string id;
  TrueScoreFn score;
};

struct AcceptanceStats {
  std::string id;
  double mean_acceptance = 0.0;
  double q05 = 0.0;  // 5% and 95% quantiles over runs
  double q95 = 0.0;
  Eigen::Index runs = 0;
  Eigen::Index truncated_runs = 0;
};

// Runs repetitions x starts.rows() trajectories per field.  Run (r, s)
// draws its initial momentum from the stream (seed, HMC stream + r *
// starts + s), identical across fields, so rows are directly comparable
// and duplicated fields produce identical rows.  Quantiles interpolate
// between order statistics.
std::vector<AcceptanceStats> acceptance_experiment(
    const std::vector<ScoreField>& fields, const LogDensityFn& target_logp,
    const Mat& starts, const HmcConfig& config, Eigen::Index repetitions,
    std::uint64_t seed);

// CSV: id,mean_acceptance,q05,q95,runs,truncated_runs.
std::string acceptance_table_csv(const std::vector<AcceptanceStats>& rows);

}  // namespace kexfam
