#include "curlyfm/experiment.hpp"

#include <chrono>

#include "curlyfm/errors.hpp"
#include "curlyfm/rng.hpp"

namespace curlyfm {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ReferenceField knn_over(const std::vector<Snapshot>& marginals, const FieldSpec& spec) {
  std::vector<const Matrix*> pos, vel;
  for (const auto& m : marginals) {
    if (!m.velocities) throw ConfigError("field.kind: knn needs velocity columns in every training marginal");
    pos.push_back(&m.positions);
    vel.push_back(&*m.velocities);
  }
  return ReferenceField::knn(vconcat(pos), vconcat(vel), spec.k, spec.weighting);
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  config.validate();
  const DatasetSpec& d = config.dataset;
  PreparedData p;
  std::optional<ReferenceField> analytic;
  if (d.kind == "gaussian_spiral" || d.kind == "circles") {
    SyntheticPair train, eval;
    if (d.kind == "gaussian_spiral") {
      train = gen_gaussian_spiral(d.dim, d.n, d.seed, d.spread);
      eval = gen_gaussian_spiral(d.dim, d.eval_n, derive_seed(d.seed, {0x6576616c}), d.spread);
    } else {
      CirclesConfig c{d.n, d.source_radius, d.target_radius, d.skew, d.noise, d.omega, d.seed};
      train = gen_asymmetric_circles(c);
      c.n = d.eval_n;
      c.seed = derive_seed(d.seed, {0x6576616c});
      eval = gen_asymmetric_circles(c);
    }
    p.data = MultiMarginalDataset({train.source, train.target}, {}, train.field.name(), false);
    p.eval = {eval.source, eval.target};
    analytic = train.field;
    p.label = d.kind + "-d" + std::to_string(d.dim);
  } else if (d.kind == "rollout") {
    RolloutConfig rc;
    rc.n = d.n;
    rc.times = d.times;
    rc.solver_dt = d.solver_dt;
    rc.seed = d.seed;
    rc.center = d.center.empty() ? std::vector<double>{1.0, 0.0} : d.center;
    rc.radius = d.radius;
    rc.fd_step = d.fd_step;
    rc.held_out = d.held_out;
    analytic = ReferenceField::rotational(d.omega);
    p.data = rollout_dataset(*analytic, 2, rc);
    p.eval = p.data.all_marginals();
    p.label = "rollout-m" + std::to_string(d.times.size());
  } else {
    auto marginals = ingest_marginals_csv(d.path);
    for (std::size_t h : d.held_out)
      if (h + 1 >= marginals.size()) throw ConfigError("dataset.held_out: index " + std::to_string(h) + " is not interior");
    p.data = MultiMarginalDataset(marginals, d.held_out, "csv:" + d.path, false);
    p.eval = p.data.all_marginals();
    p.label = "csv";
  }

  const std::vector<Snapshot> visible = p.data.training_marginals();
  const std::size_t dim = visible.front().dim();
  if (config.field.kind == "dataset") {
    p.train_field = *analytic;
  } else if (config.field.kind == "zero") {
    p.train_field = ReferenceField::zero(dim);
  } else {
    p.train_field = knn_over(visible, config.field);
    if (config.field.filter_gamma >= 0.0)
      p.train_field = filter_velocities(p.train_field, config.field.filter_gamma, config.field.filter_noise,
                                        derive_seed(d.seed, {0x66696c}));
  }
  if (config.field.corrupt_beta > 0.0)
    p.train_field = corrupt_field(p.train_field, config.field.corrupt_beta, derive_seed(d.seed, {0x636f72}));
  p.truth_field = analytic ? *analytic : knn_over(p.data.all_marginals(), config.field);
  return p;
}

std::vector<double> training_times(const PreparedData& prepared) {
  std::vector<double> t;
  for (std::size_t i : prepared.data.training_indices()) t.push_back(prepared.data.marginal(i).time);
  return t;
}

InterpolantTrainResult train_stage_one(const ExperimentConfig& config, const PreparedData& prepared,
                                       std::uint64_t seed) {
  InterpolantTrainConfig ic = config.interpolant;
  ic.seed = seed;
  const auto marginals = prepared.data.training_marginals();
  return train_interpolant(ic, marginals, prepared.train_field);
}

std::vector<std::pair<std::size_t, std::size_t>> evaluation_pairs(const PreparedData& prepared) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (!prepared.data.held_out().empty()) {
    for (std::size_t h : prepared.data.held_out()) pairs.emplace_back(h - 1, h);
  } else {
    for (std::size_t i = 0; i + 1 < prepared.eval.size(); ++i) pairs.emplace_back(i, i + 1);
  }
  return pairs;
}

std::vector<MetricRecord> evaluate_model(const ExperimentConfig& config, const PreparedData& prepared,
                                         const BridgeModel& model, const std::string& label, std::uint64_t seed,
                                         std::vector<Trajectory>* trajectories) {
  std::vector<MetricRecord> out;
  const auto record = [&](std::size_t marginal, const std::string& metric, double value) {
    out.push_back({label, prepared.label, marginal, metric, seed, value});
  };
  for (auto [a, b] : evaluation_pairs(prepared)) {
    const Snapshot& start = prepared.eval[a];
    const Snapshot& target = prepared.eval[b];
    SimulationConfig sc;
    sc.steps = config.simulate.steps;
    sc.t0 = start.time;
    sc.t1 = target.time;
    sc.record_velocities = true;
    Trajectory traj = config.simulate.sde
                          ? integrate_sde(model, start.positions, model.sigma, derive_seed(seed, {3, b}), sc,
                                          config.simulate.composition)
                          : integrate_ode(model, start.positions, sc);
    const Matrix& end = traj.final_state();
    const TransportOptions topt{derive_seed(seed, {4, b}), config.metrics.w2_max_points};
    record(b, "w2", wasserstein2(end, target.positions, topt));
    if (config.metrics.emd) record(b, "emd", emd(end, target.positions, topt));
    if (config.metrics.mmd) record(b, "mmd", mmd(end, target.positions).reported);
    const AlongResult cos = cosine_distance_along(model, prepared.truth_field, traj);
    if (cos.defined()) record(b, "cos_dist", cos.value);
    record(b, "l2_cost", l2_cost_along(model, prepared.truth_field, traj, config.metrics.l2_squared).value);
    if (prepared.data.aligned_rows()) {
      record(b, "mse", mse_known_coupling(end, target.positions));
      const std::size_t k = std::min(config.metrics.precision_k, target.size());
      record(b, "prec@" + std::to_string(k), precision_at_k(end, target.positions, k));
    }
    if (trajectories) trajectories->push_back(std::move(traj));
  }
  return out;
}

MethodRun run_method(const ExperimentConfig& config, const PreparedData& prepared, Method method,
                     std::uint64_t seed, const PathInterpolant* interp, std::string label) {
  MethodRun run;
  run.label = label.empty() ? to_string(method) : std::move(label);
  run.method = method;
  run.seed = seed;
  const auto times = training_times(prepared);
  const PathInterpolant straight = PathInterpolant::straight(prepared.data.marginal(0).dim(), times);
  if (method == Method::CurlyFM && (!interp || !interp->trained()))
    throw StagingError("CurlyFM needs a trained interpolant before bridge training");

  BridgeTrainConfig bc = config.bridge;
  bc.method.method = method;
  bc.seed = seed;
  auto start = std::chrono::steady_clock::now();
  const auto marginals = prepared.data.training_marginals();
  BridgeTrainResult trained = train_bridge(bc, method == Method::CurlyFM ? *interp : straight, marginals,
                                           prepared.train_field);
  run.clock.push_back({"train-bridge", seconds_since(start)});
  run.model = std::move(trained.model);
  run.log = std::move(trained.log);

  start = std::chrono::steady_clock::now();
  run.metrics = evaluate_model(config, prepared, run.model, run.label, seed, &run.trajectories);
  for (auto [a, b] : evaluation_pairs(prepared)) run.evaluated_marginals.push_back(b);
  run.clock.push_back({"simulate+evaluate", seconds_since(start)});
  return run;
}

}  // namespace curlyfm
