#include "curlyfm/matcher.hpp"

#include <cmath>

#include "curlyfm/errors.hpp"
#include "curlyfm/rng.hpp"
#include "curlyfm/tape.hpp"

namespace curlyfm {

namespace {

constexpr double kScoreFloor = 1e-12;

Matrix bridge_points(const Matrix& mu, std::span<const double> t, double sigma, const Matrix& eps) {
  Matrix x(mu.rows(), mu.cols());
  for (std::size_t r = 0; r < mu.rows(); ++r) {
    const double s = sigma * std::sqrt(t[r] * (1.0 - t[r]));
    for (std::size_t c = 0; c < mu.cols(); ++c) x(r, c) = mu(r, c) + s * eps(r, c);
  }
  return x;
}

std::vector<double> score_weights(std::span<const double> t, double sigma, std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r)
    w[r] = t[r] * (1.0 - t[r]) * sigma * sigma < kScoreFloor ? 0.0 : 0.5 / static_cast<double>(n);
  return w;
}

Var score_term(GradTape& tape, const BoundMlp& score, Var input, std::span<const double> t, double sigma,
               const Matrix& eps) {
  const Var s = forward(tape, score, input);
  std::vector<double> lam(t.size());
  for (std::size_t r = 0; r < t.size(); ++r) lam[r] = lambda_t(t[r], sigma);
  const Var residual = tape.add(tape.scale_rows(s, std::move(lam)), tape.constant(eps));
  return tape.weighted_sqnorm(residual, score_weights(t, sigma, t.size()));
}

BridgeLoss bridge_loss(const BridgeModel& model, const PathInterpolant& interp, const BridgeBatch& batch,
                       bool with_score) {
  model.validate();
  if (!interp.trained()) throw StagingError("bridge matching needs a trained interpolant");
  const std::size_t n = batch.x0.rows();
  if (batch.eps.rows() != n || batch.eps.cols() != interp.dim()) throw DimensionError("noise batch shape mismatch");
  GradTape tape;
  const TapePath path = record_paths(tape, interp, batch.x0, batch.x1, batch.t, batch.segment, true);
  const Matrix mu = tape.value(tape.detach(path.mu));
  const Var target = tape.detach(path.mu_dot);

  std::vector<double> tg;
  for (double tl : batch.t) tg.push_back(global_time(interp, batch.segment, tl));
  const Var input = tape.constant(append_time(bridge_points(mu, batch.t, model.sigma, batch.eps), tg));

  const BoundMlp drift = bind(tape, model.drift);
  const Var v = forward(tape, drift, input);
  const Var flow = tape.weighted_sqnorm(tape.sub(v, target), std::vector<double>(n, 0.5 / static_cast<double>(n)));
  Var total = flow;
  std::optional<BoundMlp> score;
  Var score_loss_var{};
  if (with_score && model.sigma > 0.0) {
    score = bind(tape, *model.score);
    score_loss_var = score_term(tape, *score, input, batch.t, model.sigma, batch.eps);
    total = tape.add(flow, score_loss_var);
  }
  backward(tape, total);

  BridgeLoss out;
  out.flow = tape.value(flow)(0, 0);
  out.score = score ? tape.value(score_loss_var)(0, 0) : 0.0;
  out.total = tape.value(total)(0, 0);
  if (!std::isfinite(out.total)) throw TrainingError("bridge loss is not finite");
  out.drift_grad = flat_gradient(tape, drift);
  if (score) out.score_grad = flat_gradient(tape, *score);
  if (!interp.is_straight()) out.interp_grad = flat_gradient(tape, path.phi);
  return out;
}

}  // namespace

void BridgeModel::validate() const {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if ((sigma > 0.0) != score.has_value()) throw ConfigError("score network must exist exactly when sigma > 0");
}

BridgeModel make_bridge_model(std::size_t dim, double sigma, const std::vector<std::size_t>& hidden,
                              Activation activation, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  std::vector<std::size_t> widths{dim + 1};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(dim);
  BridgeModel m;
  m.sigma = sigma;
  m.drift = Mlp::random(widths, activation, derive_seed(seed, {0}));
  if (sigma > 0.0) m.score = Mlp::random(widths, activation, derive_seed(seed, {1}));
  return m;
}

Method method_from_string(const std::string& name) {
  if (name == "curly") return Method::CurlyFM;
  if (name == "cfm") return Method::CFM;
  if (name == "otcfm") return Method::OTCFM;
  throw ConfigError("unknown method '" + name + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::CurlyFM: return "curly";
    case Method::CFM: return "cfm";
    case Method::OTCFM: return "otcfm";
  }
  return "?";
}

void MethodConfig::validate() const {
  if (cost_samples == 0) throw ConfigError("coupling cost needs K >= 1");
  if (sinkhorn_reg < 0.0) throw ConfigError("sinkhorn regularization must be >= 0");
}

CouplingMode MethodConfig::effective_coupling() const {
  switch (method) {
    case Method::CFM: return CouplingMode::Independent;
    case Method::OTCFM: return CouplingMode::ExactAssignment;
    case Method::CurlyFM: return coupling;
  }
  return coupling;
}

double lambda_t(double t, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("lambda_t is undefined for sigma <= 0");
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("lambda_t needs t in [0, 1]");
  return 2.0 * std::sqrt(t * (1.0 - t)) / sigma;
}

BridgeSample noisy_bridge_sample(const Matrix& mu, std::span<const double> t, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw DomainError("sigma must be >= 0");
  if (t.size() != mu.rows()) throw DimensionError("one time per row expected");
  for (double v : t)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("bridge time outside [0, 1]");
  BridgeSample s;
  s.eps = Matrix(mu.rows(), mu.cols());
  Rng rng(seed);
  for (double& e : s.eps.values()) e = rng.normal();
  s.x = bridge_points(mu, t, sigma, s.eps);
  return s;
}

BridgeLoss combined_loss(const BridgeModel& model, const PathInterpolant& interp, const BridgeBatch& batch) {
  return bridge_loss(model, interp, batch, true);
}

BridgeLoss flow_loss(const BridgeModel& model, const PathInterpolant& interp, const BridgeBatch& batch) {
  return bridge_loss(model, interp, batch, false);
}

BridgeLoss score_loss(const BridgeModel& model, const Matrix& mu, std::span<const double> t, double sigma,
                      const Matrix& eps) {
  BridgeLoss out;
  if (!(sigma > 0.0) || !model.score) return out;
  if (!eps.same_shape(mu) || t.size() != mu.rows()) throw DimensionError("score loss batch shape mismatch");
  GradTape tape;
  const BoundMlp score = bind(tape, *model.score);
  const Var input = tape.constant(append_time(bridge_points(mu, t, sigma, eps), t));
  const Var loss = score_term(tape, score, input, t, sigma, eps);
  backward(tape, loss);
  out.score = out.total = tape.value(loss)(0, 0);
  out.score_grad = flat_gradient(tape, score);
  return out;
}

BridgeTrainResult train_bridge(const BridgeTrainConfig& config, const PathInterpolant& interp,
                               std::span<const Snapshot> marginals, const ReferenceField& field) {
  config.method.validate();
  if (marginals.size() < 2) throw ConfigError("bridge training needs at least two marginals");
  if (config.batch_size == 0) throw ConfigError("bridge batch size must be positive");
  const std::size_t d = marginals.front().dim();
  std::vector<double> times;
  for (const auto& m : marginals) times.push_back(m.time);

  const bool curly = config.method.method == Method::CurlyFM;
  if (curly && !interp.trained()) throw StagingError("CurlyFM bridge training needs a trained interpolant");
  if (curly && interp.marginal_times() != times) throw ConfigError("interpolant was trained on other marginal times");
  const PathInterpolant straight = PathInterpolant::straight(d, times);
  const PathInterpolant& paths = curly ? interp : straight;
  const CouplingMode mode = config.method.effective_coupling();
  const double reg = config.method.sinkhorn_reg > 0.0 ? config.method.sinkhorn_reg
                                                      : std::max(2.0 * config.sigma * config.sigma, 1e-3);

  BridgeTrainResult result;
  result.model = make_bridge_model(d, config.sigma, config.hidden, config.activation, derive_seed(config.seed, {2, 0}));
  AdamState drift_adam(result.model.drift.parameter_count(), config.adam);
  AdamState score_adam(result.model.score ? result.model.score->parameter_count() : 0, config.adam);

  const std::size_t B = config.batch_size;
  const std::size_t steps = config.epochs * ((marginals.front().size() + B - 1) / B);
  result.log.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    Rng rng(derive_seed(config.seed, {2, 1, step}));
    BridgeBatch batch;
    batch.segment = marginals.size() > 2 ? rng.index(marginals.size() - 1) : 0;
    const Matrix& p0 = marginals[batch.segment].positions;
    const Matrix& p1 = marginals[batch.segment + 1].positions;
    std::vector<std::size_t> i0(B), i1(B);
    for (auto& i : i0) i = rng.index(p0.rows());
    for (auto& i : i1) i = rng.index(p1.rows());
    const Matrix b0 = p0.select_rows(i0);
    const Matrix b1 = p1.select_rows(i1);

    Coupling coupling;
    if (mode == CouplingMode::Independent) {
      coupling = independent_coupling(b0, b1);
    } else {
      const CostMatrix cost = curly ? cost_matrix(paths, field, b0, b1, config.method.cost_samples,
                                                  config.method.cost_sampling, derive_seed(config.seed, {2, 2, step}),
                                                  batch.segment)
                                    : squared_euclidean_cost(b0, b1);
      if (mode == CouplingMode::ExactAssignment) {
        coupling = solve_assignment(cost);
      } else {
        coupling = solve_sinkhorn(cost, reg);
        Rng plan_rng(derive_seed(config.seed, {2, 3, step}));
        coupling.pairs = sample_plan(coupling, B, plan_rng);
      }
    }
    std::vector<std::size_t> src, dst;
    for (auto [a, b] : coupling.pairs) {
      src.push_back(a);
      dst.push_back(b);
    }
    batch.x0 = b0.select_rows(src);
    batch.x1 = b1.select_rows(dst);
    batch.t.resize(B);
    Rng t_rng(derive_seed(config.seed, {2, 4, step}));
    for (double& t : batch.t) t = t_rng.uniform();
    batch.eps = Matrix(B, d);
    Rng eps_rng(derive_seed(config.seed, {2, 5, step}));
    for (double& e : batch.eps.values()) e = eps_rng.normal();

    const BridgeLoss loss = combined_loss(result.model, paths, batch);
    adam_step(drift_adam, result.model.drift, loss.drift_grad);
    if (result.model.score) adam_step(score_adam, *result.model.score, loss.score_grad);
    result.log.push_back({step, loss.flow, loss.score, coupling.total_cost / static_cast<double>(B)});
    if (config.record_couplings) {
      result.couplings.push_back(coupling.permutation());
      result.coupled_sources.push_back(b0);
      result.coupled_targets.push_back(b1);
    }
  }
  result.model.trained = true;
  return result;
}

}  // namespace curlyfm
