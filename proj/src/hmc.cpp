#include "kexfam/hmc.hpp"

#include <algorithm>
#include <cmath>

#include "kexfam/errors.hpp"
#include "kexfam/rng.hpp"
#include "kexfam/text.hpp"

namespace kexfam {

namespace {

void check_config(const HmcConfig& config) {
  if (config.num_steps < 0)
    throw input_error("hmc: num_steps must be >= 0");
  if (!(config.step_size > 0.0) || !std::isfinite(config.step_size))
    throw input_error("hmc: step_size must be finite and > 0");
}

Vec eval_score_field(const TrueScoreFn& score_field, const Vec& x) {
  const Vec g = score_field(x);
  if (g.size() != x.size())
    throw input_error("hmc: score field returned wrong dimension");
  return g;
}

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 < values.size())
    return values[lo] + frac * (values[lo + 1] - values[lo]);
  return values[lo];
}

}  // namespace

Trajectory surrogate_trajectory(const TrueScoreFn& score_field, const Vec& x0,
                                const Vec& p0, const HmcConfig& config) {
  check_config(config);
  if (!score_field) throw input_error("surrogate_trajectory: score field is required");
  if (x0.size() != p0.size() || x0.size() == 0)
    throw input_error("surrogate_trajectory: x0 and p0 must be non-empty, same size");
  const auto d = x0.size();
  const auto T = config.num_steps;
  const double eps = config.step_size;

  Mat positions(T + 1, d), momenta(T + 1, d);
  positions.row(0) = x0.transpose();
  momenta.row(0) = p0.transpose();

  Trajectory out;
  Vec x = x0, p = p0;
  Vec g = eval_score_field(score_field, x);
  Eigen::Index done = 0;
  bool truncated = !g.allFinite();
  if (!truncated) {
    for (Eigen::Index t = 1; t <= T; ++t) {
      const Vec p_half = p + 0.5 * eps * g;        // dp/dt = score
      const Vec x_next = x + eps * p_half;
      if (!x_next.allFinite()) {
        truncated = true;
        break;
      }
      const Vec g_next = eval_score_field(score_field, x_next);
      if (!g_next.allFinite()) {
        truncated = true;
        break;
      }
      p = p_half + 0.5 * eps * g_next;
      x = x_next;
      g = g_next;
      positions.row(t) = x.transpose();
      momenta.row(t) = p.transpose();
      done = t;
    }
  }
  out.positions = positions.topRows(done + 1);
  out.momenta = momenta.topRows(done + 1);
  out.steps_completed = done;
  out.truncated = truncated;
  return out;
}

Trajectory surrogate_trajectory_seeded(const TrueScoreFn& score_field, const Vec& x0,
                                       const HmcConfig& config, std::uint64_t seed) {
  RandomStream rng(seed, streams::kHmc);
  Vec p0(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) p0(i) = rng.normal();
  return surrogate_trajectory(score_field, x0, p0, config);
}

AcceptanceProfile acceptance_profile(const TrueScoreFn& score_field,
                                     const LogDensityFn& target_logp, const Vec& x0,
                                     const Vec& p0, const HmcConfig& config) {
  if (!target_logp) throw input_error("acceptance_profile: target_logp is required");
  AcceptanceProfile out;
  out.trajectory = surrogate_trajectory(score_field, x0, p0, config);
  const auto T = config.num_steps;
  out.per_step = Vec::Zero(T);
  if (T == 0) {
    out.mean_acceptance = 1.0;
    return out;
  }

  auto hamiltonian = [&](Eigen::Index t) {
    const Vec x = out.trajectory.positions.row(t).transpose();
    const double logp = target_logp(x);
    if (!std::isfinite(logp))
      throw evaluation_error("acceptance_profile: target log-density non-finite at step " +
                             std::to_string(t));
    return -logp + 0.5 * out.trajectory.momenta.row(t).squaredNorm();
  };

  const double h0 = hamiltonian(0);
  double total = 0.0;
  for (Eigen::Index t = 1; t <= out.trajectory.steps_completed; ++t) {
    const double a = std::min(1.0, std::exp(h0 - hamiltonian(t)));
    out.per_step(t - 1) = a;
    total += a;
  }
  // Steps lost to truncation keep acceptance 0.
  out.mean_acceptance = total / static_cast<double>(T);
  return out;
}

AcceptanceProfile acceptance_profile_seeded(const TrueScoreFn& score_field,
                                            const LogDensityFn& target_logp,
                                            const Vec& x0, const HmcConfig& config,
                                            std::uint64_t seed) {
  RandomStream rng(seed, streams::kHmc);
  Vec p0(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) p0(i) = rng.normal();
  return acceptance_profile(score_field, target_logp, x0, p0, config);
}

std::vector<AcceptanceStats> acceptance_experiment(
    const std::vector<ScoreField>& fields, const LogDensityFn& target_logp,
    const Mat& starts, const HmcConfig& config, Eigen::Index repetitions,
    std::uint64_t seed) {
  check_config(config);
  if (fields.empty()) throw input_error("acceptance_experiment: no score fields given");
  if (starts.rows() < 1) throw input_error("acceptance_experiment: no start points");
  if (repetitions < 1) throw input_error("acceptance_experiment: repetitions must be >= 1");

  std::vector<AcceptanceStats> table;
  for (const auto& field : fields) {
    if (!field.score)
      throw input_error("acceptance_experiment: score field '" + field.id +
                        "' is null");
    std::vector<double> means;
    Eigen::Index truncated = 0;
    for (Eigen::Index r = 0; r < repetitions; ++r) {
      for (Eigen::Index s = 0; s < starts.rows(); ++s) {
        // Momentum stream depends only on (seed, run), not on the field.
        RandomStream rng(seed, streams::kHmc + static_cast<std::uint64_t>(
                                                   r * starts.rows() + s));
        Vec p0(starts.cols());
        for (Eigen::Index i = 0; i < starts.cols(); ++i) p0(i) = rng.normal();
        const auto profile = acceptance_profile(
            field.score, target_logp, starts.row(s).transpose(), p0, config);
        means.push_back(profile.mean_acceptance);
        if (profile.trajectory.truncated) ++truncated;
      }
    }
    AcceptanceStats stats;
    stats.id = field.id;
    stats.runs = static_cast<Eigen::Index>(means.size());
    stats.truncated_runs = truncated;
    double total = 0.0;
    for (double v : means) total += v;
    stats.mean_acceptance = total / static_cast<double>(means.size());
    stats.q05 = quantile(means, 0.05);
    stats.q95 = quantile(means, 0.95);
    table.push_back(std::move(stats));
  }
  return table;
}

std::string acceptance_table_csv(const std::vector<AcceptanceStats>& rows) {
  std::string out = "id,mean_acceptance,q05,q95,runs,truncated_runs\n";
  for (const auto& row : rows) {
    out += row.id;
    out.push_back(',');
    out += double_to_string(row.mean_acceptance);
    out.push_back(',');
    out += double_to_string(row.q05);
    out.push_back(',');
    out += double_to_string(row.q95);
    out.push_back(',');
    out += std::to_string(row.runs);
    out.push_back(',');
    out += std::to_string(row.truncated_runs);
    out.push_back('\n');
  }
  return out;
}

}  // namespace kexfam
