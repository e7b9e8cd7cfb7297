#include "curlyfm/simulate.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

#include "curlyfm/errors.hpp"
#include "curlyfm/rng.hpp"

namespace curlyfm {

namespace {

void check_grid(const SimulationConfig& config) {
  if (config.steps == 0) throw ConfigError("integration needs at least one step");
  if (!(config.t1 > config.t0)) throw ConfigError("integration span must be increasing");
}

Trajectory start(const Matrix& x0, const SimulationConfig& config) {
  if (x0.empty()) throw DimensionError("no particles to integrate");
  if (!x0.all_finite()) throw IntegrationError("initial state is not finite", 0);
  Trajectory traj;
  const double dt = (config.t1 - config.t0) / static_cast<double>(config.steps);
  for (std::size_t k = 0; k <= config.steps; ++k) traj.times.push_back(config.t0 + static_cast<double>(k) * dt);
  traj.times.back() = config.t1;
  traj.states.reserve(config.steps + 1);
  traj.states.push_back(x0);
  return traj;
}

void check_model(const BridgeModel& model, const Matrix& x0) {
  if (model.drift.input_dim() != x0.cols() + 1 || model.drift.output_dim() != x0.cols())
    throw DimensionError("drift net does not match the state dimension");
}

void push_state(Trajectory& traj, Matrix x, std::size_t step) {
  if (!x.all_finite()) throw IntegrationError("state became non-finite", step);
  traj.states.push_back(std::move(x));
}

}  // namespace

ScoreComposition score_composition_from_string(const std::string& name) {
  if (name == "scaled") return ScoreComposition::Scaled;
  if (name == "raw") return ScoreComposition::Raw;
  throw ConfigError("unknown score composition '" + name + "'");
}

std::string to_string(ScoreComposition c) { return c == ScoreComposition::Scaled ? "scaled" : "raw"; }

Trajectory integrate_ode(const BridgeModel& model, const Matrix& x0, const SimulationConfig& config) {
  check_grid(config);
  check_model(model, x0);
  Trajectory traj = start(x0, config);
  for (std::size_t k = 0; k < config.steps; ++k) {
    const double t = traj.times[k];
    const double dt = traj.times[k + 1] - t;
    const Matrix& x = traj.states.back();
    const std::vector<double> tt(x.rows(), t);
    Matrix v = mlp_forward(model.drift, x, tt);
    Matrix next = x;
    for (std::size_t i = 0; i < next.size(); ++i) next.values()[i] += v.values()[i] * dt;
    if (config.record_velocities) traj.velocities.push_back(std::move(v));
    push_state(traj, std::move(next), k + 1);
  }
  return traj;
}

Trajectory integrate_sde(const BridgeModel& model, const Matrix& x0, double sigma, std::uint64_t seed,
                         const SimulationConfig& config, ScoreComposition composition) {
  check_grid(config);
  check_model(model, x0);
  if (!(sigma > 0.0)) throw ConfigError("SDE integration needs sigma > 0");
  if (!model.score) throw ConfigError("SDE integration needs a score network; train with sigma > 0");
  const double weight = composition == ScoreComposition::Scaled ? 0.5 * sigma * sigma : 1.0;
  Trajectory traj = start(x0, config);
  const std::size_t n = x0.rows(), d = x0.cols();
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = derive_seed(seed, {0x736465, i});
  for (std::size_t k = 0; k < config.steps; ++k) {
    const double t = traj.times[k];
    const double dt = traj.times[k + 1] - t;
    const double diffusion = sigma * std::sqrt(dt);
    const Matrix& x = traj.states.back();
    const std::vector<double> tt(n, t);
    Matrix v = mlp_forward(model.drift, x, tt);
    const Matrix s = mlp_forward(*model.score, x, tt);
    Matrix next = x;
#pragma omp parallel for schedule(static) if (n >= 256)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c)
        next(i, c) += (v(i, c) + weight * s(i, c)) * dt + diffusion * keyed_normal(keys[i], k * d + c);
    if (config.record_velocities) traj.velocities.push_back(std::move(v));
    push_state(traj, std::move(next), k + 1);
  }
  return traj;
}

std::vector<double> drift_divergence(const Mlp& drift, const Matrix& x, std::span<const double> t) {
  const std::size_t d = x.cols();
  if (drift.input_dim() != d + 1 || drift.output_dim() != d)
    throw DimensionError("divergence needs a square drift net");
  const Matrix input = append_time(x, t);
  std::vector<double> div(x.rows(), 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const DualBatch out = mlp_forward_dual(drift, input, j);
    for (std::size_t r = 0; r < x.rows(); ++r) div[r] += out.tangent(r, j);
  }
  return div;
}

Trajectory track_log_density(const BridgeModel& model, const Matrix& x0, std::span<const double> log_p0,
                             const SimulationConfig& config, std::size_t max_dim) {
  check_grid(config);
  check_model(model, x0);
  if (model.sigma > 0.0) throw ConfigError("log-density tracking is only defined for the deterministic flow (sigma = 0)");
  if (x0.cols() > max_dim)
    throw ConfigError("log-density tracking costs one pass per coordinate; d = " + std::to_string(x0.cols()) +
                      " exceeds the cap of " + std::to_string(max_dim) + ", disable tracking or raise the cap");
  if (log_p0.size() != x0.rows()) throw DimensionError("one initial log-density per particle expected");
  Trajectory traj = start(x0, config);
  const std::size_t n = x0.rows();
  Matrix logp(config.steps + 1, n);
  for (std::size_t i = 0; i < n; ++i) logp(0, i) = log_p0[i];
  for (std::size_t k = 0; k < config.steps; ++k) {
    const double t = traj.times[k];
    const double dt = traj.times[k + 1] - t;
    const Matrix& x = traj.states.back();
    const std::vector<double> tt(n, t);
    Matrix v = mlp_forward(model.drift, x, tt);
    const std::vector<double> div = drift_divergence(model.drift, x, tt);
    Matrix next = x;
    for (std::size_t i = 0; i < next.size(); ++i) next.values()[i] += v.values()[i] * dt;
    for (std::size_t i = 0; i < n; ++i) logp(k + 1, i) = logp(k, i) - div[i] * dt;
    if (config.record_velocities) traj.velocities.push_back(std::move(v));
    push_state(traj, std::move(next), k + 1);
  }
  traj.log_density = std::move(logp);
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "particle,step,t";
  for (std::size_t c = 0; c < traj.dim(); ++c) out << ",x" << c + 1;
  out << '\n';
  char buf[64];
  const auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, res.ptr - buf);
  };
  for (std::size_t p = 0; p < traj.particles(); ++p) {
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
      out << p << ',' << k << ',';
      put(traj.times[k]);
      for (double v : traj.states[k].row(p)) {
        out << ',';
        put(v);
      }
      out << '\n';
    }
  }
}

}  // namespace curlyfm
