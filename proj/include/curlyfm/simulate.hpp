#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "curlyfm/matcher.hpp"
#include "curlyfm/matrix.hpp"

namespace curlyfm {

/// Particle paths on a time grid. states[k] holds every particle at times[k].
struct Trajectory {
  std::vector<double> times;
  std::vector<Matrix> states;
  /// (steps + 1) x particles, when tracked.
  std::optional<Matrix> log_density;
  /// velocities[k] is the drift net at (states[k], times[k]), k < steps; when recorded.
  std::vector<Matrix> velocities;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
  std::size_t particles() const { return states.empty() ? 0 : states.front().rows(); }
  std::size_t dim() const { return states.empty() ? 0 : states.front().cols(); }
  const Matrix& final_state() const { return states.back(); }
};

struct SimulationConfig {
  std::size_t steps = 100;
  double t0 = 0.0;
  double t1 = 1.0;
  bool record_velocities = false;
};

/// How the score enters the SDE drift: v + sigma^2/2 s, or the plain sum v + s.
enum class ScoreComposition { Scaled, Raw };

ScoreComposition score_composition_from_string(const std::string& name);
std::string to_string(ScoreComposition c);

/// Explicit Euler on x' = v(x, t).
Trajectory integrate_ode(const BridgeModel& model, const Matrix& x0, const SimulationConfig& config = {});

/// Euler-Maruyama with drift v + (sigma^2/2) s and diffusion sigma. Noise for
/// particle i at step k is keyed on (seed, i, k), so results do not depend on
/// thread count or batch composition.
Trajectory integrate_sde(const BridgeModel& model, const Matrix& x0, double sigma, std::uint64_t seed,
                         const SimulationConfig& config = {},
                         ScoreComposition composition = ScoreComposition::Scaled);

/// Exact divergence of the drift net at rows x, one forward-mode pass per coordinate.
std::vector<double> drift_divergence(const Mlp& drift, const Matrix& x, std::span<const double> t);

/// ODE integration with d(log p)/dt = -div v carried alongside.
Trajectory track_log_density(const BridgeModel& model, const Matrix& x0, std::span<const double> log_p0,
                             const SimulationConfig& config = {}, std::size_t max_dim = 64);

/// Rows "particle,step,t,x1..xd".
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace curlyfm
