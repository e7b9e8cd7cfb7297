#include "curlyfm/interpolant.hpp"

#include <cmath>

#include "curlyfm/errors.hpp"
#include "curlyfm/rng.hpp"

namespace curlyfm {

namespace {

void check_local_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("interpolant time " + std::to_string(t) + " outside [0, 1]");
}

void check_pairs(const PathInterpolant& interp, const Matrix& x0, const Matrix& x1, std::span<const double> t) {
  if (x0.cols() != interp.dim() || x1.cols() != interp.dim())
    throw DimensionError("interpolant expects points of dimension " + std::to_string(interp.dim()));
  if (x0.rows() != x1.rows() || t.size() != x0.rows()) throw DimensionError("interpolant batch sizes differ");
  for (double v : t) check_local_time(v);
}

struct PathCoefficients {
  std::vector<double> t_global;
  std::vector<double> bridge;      // t (1 - t)
  std::vector<double> bridge_dt;   // t (1 - t) * segment length
  std::vector<double> slope;       // 1 - 2t
  double inv_length = 1.0;
};

PathCoefficients coefficients(const PathInterpolant& interp, std::span<const double> t, std::size_t segment) {
  PathCoefficients c;
  const double len = interp.segment_length(segment);
  c.inv_length = 1.0 / len;
  for (double tl : t) {
    c.t_global.push_back(global_time(interp, segment, tl));
    c.bridge.push_back(tl * (1.0 - tl));
    c.bridge_dt.push_back(tl * (1.0 - tl) * len);
    c.slope.push_back(1.0 - 2.0 * tl);
  }
  return c;
}

Matrix phi_input(const Matrix& x0, const Matrix& x1, std::span<const double> t_global) {
  const Matrix* blocks[] = {&x0, &x1};
  return append_time(hconcat(blocks), t_global);
}

}  // namespace

PathInterpolant::PathInterpolant(Mlp phi, std::size_t dim, std::vector<double> marginal_times)
    : phi_(std::move(phi)), dim_(dim), times_(std::move(marginal_times)) {
  if (phi_.input_dim() != 2 * dim_ + 1 || phi_.output_dim() != dim_)
    throw DimensionError("interpolant network must map 2d + 1 inputs to d outputs");
  if (times_.size() < 2) throw ConfigError("interpolant needs at least two marginal times");
  for (std::size_t i = 0; i + 1 < times_.size(); ++i)
    if (!(times_[i] < times_[i + 1])) throw ConfigError("marginal times must be strictly increasing");
}

PathInterpolant PathInterpolant::straight(std::size_t dim, std::vector<double> marginal_times) {
  PathInterpolant p(Mlp({2 * dim + 1, dim}, Activation::Silu), dim, std::move(marginal_times));
  p.straight_ = true;
  return p;
}

double PathInterpolant::segment_length(std::size_t segment) const {
  if (segment >= segments()) throw DomainError("segment index " + std::to_string(segment) + " out of range");
  return times_[segment + 1] - times_[segment];
}

double global_time(const PathInterpolant& interp, std::size_t segment, double t_local) {
  check_local_time(t_local);
  const auto& ts = interp.marginal_times();
  if (segment >= interp.segments()) throw DomainError("segment index " + std::to_string(segment) + " out of range");
  return ts[segment] + t_local * (ts[segment + 1] - ts[segment]);
}

PathBatch evaluate_paths(const PathInterpolant& interp, const Matrix& x0, const Matrix& x1,
                         std::span<const double> t, std::size_t segment) {
  check_pairs(interp, x0, x1, t);
  const auto c = coefficients(interp, t, segment);
  const std::size_t n = x0.rows(), d = interp.dim();
  DualBatch phi;
  if (interp.is_straight()) {
    phi.value = Matrix(n, d);
    phi.tangent = Matrix(n, d);
  } else {
    phi = mlp_forward_dual(interp.phi(), phi_input(x0, x1, c.t_global));
  }
  PathBatch out{Matrix(n, d), Matrix(n, d)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < d; ++k) {
      const double a = x0(r, k), b = x1(r, k);
      out.mu(r, k) = (t[r] * b + (1.0 - t[r]) * a) + c.bridge[r] * phi.value(r, k);
      out.mu_dot(r, k) = (((b - a) + c.bridge_dt[r] * phi.tangent(r, k)) + c.slope[r] * phi.value(r, k)) * c.inv_length;
    }
  return out;
}

std::vector<double> mu(const PathInterpolant& interp, std::span<const double> x0, std::span<const double> x1,
                       double t_local, std::size_t segment) {
  const Matrix a(1, x0.size(), {x0.begin(), x0.end()});
  const Matrix b(1, x1.size(), {x1.begin(), x1.end()});
  const double t[] = {t_local};
  return evaluate_paths(interp, a, b, t, segment).mu.values();
}

std::vector<double> mu_dot(const PathInterpolant& interp, std::span<const double> x0, std::span<const double> x1,
                           double t_local, std::size_t segment) {
  const Matrix a(1, x0.size(), {x0.begin(), x0.end()});
  const Matrix b(1, x1.size(), {x1.begin(), x1.end()});
  const double t[] = {t_local};
  return evaluate_paths(interp, a, b, t, segment).mu_dot.values();
}

TapePath record_paths(GradTape& tape, const PathInterpolant& interp, const Matrix& x0, const Matrix& x1,
                      std::span<const double> t, std::size_t segment, bool trainable) {
  check_pairs(interp, x0, x1, t);
  const auto c = coefficients(interp, t, segment);
  const std::size_t n = x0.rows(), d = interp.dim();
  TapePath out;
  Var phi, phi_dot;
  if (interp.is_straight()) {
    phi = tape.constant(Matrix(n, d));
    phi_dot = tape.constant(Matrix(n, d));
  } else {
    out.phi = bind(tape, interp.phi(), trainable);
    const DualVars dv = forward_dual(tape, out.phi, tape.constant(phi_input(x0, x1, c.t_global)));
    phi = dv.value;
    phi_dot = dv.tangent;
  }
  Matrix base(n, d), chord(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < d; ++k) {
      base(r, k) = t[r] * x1(r, k) + (1.0 - t[r]) * x0(r, k);
      chord(r, k) = x1(r, k) - x0(r, k);
    }
  out.mu = tape.add(tape.constant(std::move(base)), tape.scale_rows(phi, c.bridge));
  Var vel = tape.add(tape.constant(std::move(chord)), tape.scale_rows(phi_dot, c.bridge_dt));
  vel = tape.add(vel, tape.scale_rows(phi, c.slope));
  out.mu_dot = tape.scale(vel, c.inv_length);
  return out;
}

LossAndGrad interpolant_loss(const PathInterpolant& interp, const Matrix& x0, const Matrix& x1,
                             std::span<const double> t, const ReferenceField& field, std::size_t segment) {
  if (field.dim() != interp.dim()) throw DimensionError("field and interpolant dimensions differ");
  GradTape tape;
  const TapePath path = record_paths(tape, interp, x0, x1, t, segment, true);
  std::vector<double> tg;
  for (double tl : t) tg.push_back(global_time(interp, segment, tl));

  const Matrix& mu_value = tape.value(path.mu);
  Matrix f = field.eval_batch(mu_value, tg);
  Var fv;
  if (field.differentiable()) {
    fv = tape.custom(path.mu, std::move(f), [&tape, &field, mu_id = path.mu, tg](const Matrix& g) {
      return field.vjp_batch(tape.value(mu_id), tg, g);
    });
  } else {
    fv = tape.constant(std::move(f));
  }
  const Var residual = tape.sub(path.mu_dot, fv);
  const double w = 1.0 / static_cast<double>(x0.rows());
  const Var loss = tape.weighted_sqnorm(residual, std::vector<double>(x0.rows(), w));
  LossAndGrad out;
  out.loss = tape.value(loss)(0, 0);
  if (!std::isfinite(out.loss)) throw TrainingError("interpolant loss is not finite");
  if (interp.is_straight()) return out;
  backward(tape, loss);
  out.grad = flat_gradient(tape, path.phi);
  return out;
}

namespace {

struct TripleBatch {
  Matrix x0, x1;
  std::vector<double> t;
  std::size_t segment = 0;
};

TripleBatch draw_triples(std::span<const Snapshot> marginals, std::size_t batch, Rng& rng) {
  TripleBatch b;
  b.segment = marginals.size() > 2 ? rng.index(marginals.size() - 1) : 0;
  const Matrix& p0 = marginals[b.segment].positions;
  const Matrix& p1 = marginals[b.segment + 1].positions;
  std::vector<std::size_t> i0(batch), i1(batch);
  for (auto& i : i0) i = rng.index(p0.rows());
  for (auto& i : i1) i = rng.index(p1.rows());
  b.t.resize(batch);
  for (double& v : b.t) v = rng.uniform();
  b.x0 = p0.select_rows(i0);
  b.x1 = p1.select_rows(i1);
  return b;
}

double eval_loss(const PathInterpolant& interp, std::span<const TripleBatch> batches, const ReferenceField& field) {
  double total = 0.0;
  for (const auto& b : batches) total += interpolant_loss(interp, b.x0, b.x1, b.t, field, b.segment).loss;
  return total / static_cast<double>(batches.size());
}

}  // namespace

InterpolantTrainResult train_interpolant(const InterpolantTrainConfig& config, std::span<const Snapshot> marginals,
                                         const ReferenceField& field) {
  if (marginals.size() < 2) throw ConfigError("interpolant training needs at least two marginals");
  if (config.batch_size == 0) throw ConfigError("interpolant batch size must be positive");
  const std::size_t d = marginals.front().dim();
  std::vector<double> times;
  for (const auto& m : marginals) {
    if (m.dim() != d) throw DimensionError("marginals differ in dimension");
    if (m.size() == 0) throw ConfigError("empty marginal");
    times.push_back(m.time);
  }

  std::vector<std::size_t> widths{2 * d + 1};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(d);
  Mlp phi = Mlp::random(widths, config.activation, derive_seed(config.seed, {1, 0}));
  if (config.zero_init_output) {
    auto& last = phi.layers().back();
    last.weight = Matrix(last.weight.rows(), last.weight.cols());
    last.bias = Matrix(1, last.bias.cols());
  }
  InterpolantTrainResult result;
  result.interp = PathInterpolant(std::move(phi), d, times);

  // Fixed evaluation triples, one batch per segment.
  std::vector<TripleBatch> eval;
  {
    Rng rng(derive_seed(config.seed, {1, 1}));
    for (std::size_t s = 0; s + 1 < marginals.size(); ++s) {
      auto pair = marginals.subspan(s, 2);
      eval.push_back(draw_triples(pair, config.eval_batch, rng));
      eval.back().segment = s;
    }
  }
  result.straight_loss = eval_loss(PathInterpolant::straight(d, times), eval, field);

  const std::size_t steps_per_epoch = (marginals.front().size() + config.batch_size - 1) / config.batch_size;
  const std::size_t steps = config.epochs * steps_per_epoch;
  AdamState adam(result.interp.phi().parameter_count(), config.adam);
  result.loss_curve.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    Rng rng(derive_seed(config.seed, {1, 2, step}));
    const TripleBatch b = draw_triples(marginals, config.batch_size, rng);
    const LossAndGrad lg = interpolant_loss(result.interp, b.x0, b.x1, b.t, field, b.segment);
    adam_step(adam, result.interp.phi(), lg.grad);
    result.loss_curve.push_back(lg.loss);
  }
  result.interp.mark_trained();
  result.final_loss = eval_loss(result.interp, eval, field);
  return result;
}

}  // namespace curlyfm
