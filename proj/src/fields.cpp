#include "curlyfm/fields.hpp"

#include <algorithm>
#include <cmath>

#include "curlyfm/errors.hpp"
#include "curlyfm/rng.hpp"

namespace curlyfm {

namespace {

constexpr double kDistanceGuard = 1e-9;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

KernelWeighting weighting_from_string(const std::string& name) {
  if (name == "inverse-distance") return KernelWeighting::InverseDistance;
  if (name == "literal") return KernelWeighting::Literal;
  throw ConfigError("unknown kernel weighting '" + name + "'");
}

KnnIndex::KnnIndex(Matrix points, Matrix velocities, std::size_t k)
    : points_(std::move(points)), velocities_(std::move(velocities)), k_(k) {
  if (points_.rows() == 0) throw ConfigError("knn index needs at least one point");
  if (!velocities_.same_shape(points_)) throw ConfigError("knn index needs one velocity per point");
  if (k_ < 1 || k_ > points_.rows())
    throw ConfigError("knn k = " + std::to_string(k_) + " must lie in [1, " + std::to_string(points_.rows()) + "]");
}

std::vector<KnnIndex::Neighbor> KnnIndex::query(std::span<const double> x) const {
  if (x.size() != dim()) throw DimensionError("knn query dimension mismatch");
  std::vector<Neighbor> all(points_.rows());
  for (std::size_t i = 0; i < points_.rows(); ++i) all[i] = {i, std::sqrt(squared_distance(points_.row(i), x))};
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k_), all.end(), less);
  all.resize(k_);
  return all;
}

std::vector<double> kernel_weights(std::span<const KnnIndex::Neighbor> nbrs, KernelWeighting weighting) {
  std::vector<double> w(nbrs.size(), 0.0);
  std::size_t hits = 0;
  for (const auto& n : nbrs) hits += n.distance == 0.0;
  if (hits > 0) {
    for (std::size_t i = 0; i < nbrs.size(); ++i) w[i] = nbrs[i].distance == 0.0 ? 1.0 / static_cast<double>(hits) : 0.0;
    return w;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    w[i] = weighting == KernelWeighting::InverseDistance ? 1.0 / (nbrs[i].distance + kDistanceGuard)
                                                         : nbrs[i].distance;
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> knn_estimate(const KnnIndex& index, std::span<const double> query, KernelWeighting weighting) {
  const auto nbrs = index.query(query);
  const auto w = kernel_weights(nbrs, weighting);
  std::vector<double> out(index.dim(), 0.0);
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    const auto v = index.velocities().row(nbrs[i].index);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += w[i] * v[c];
  }
  return out;
}

ReferenceField ReferenceField::zero(std::size_t dim) { return ReferenceField(ZeroField{dim}); }
ReferenceField ReferenceField::rotational(double omega) { return ReferenceField(RotationalField{omega}); }

ReferenceField ReferenceField::spiral(std::size_t dim, double speed, double omega) {
  if (dim < 3) throw ConfigError("spiral field needs d >= 3, got d = " + std::to_string(dim));
  return ReferenceField(SpiralField{dim, speed, omega});
}

ReferenceField ReferenceField::knn(const Matrix& points, const Matrix& velocities, std::size_t k,
                                   KernelWeighting weighting) {
  if (velocities.empty()) throw ConfigError("knn field needs a snapshot with velocities");
  return ReferenceField(KnnField{std::make_shared<const KnnIndex>(points, velocities, k), weighting});
}

std::size_t ReferenceField::dim() const {
  return std::visit(overloaded{[](const ZeroField& f) { return f.dim; },
                               [](const RotationalField&) { return std::size_t{2}; },
                               [](const SpiralField& f) { return f.dim; },
                               [](const KnnField& f) { return f.index->dim(); },
                               [](const FilteredField& f) { return f.inner->dim(); },
                               [](const CorruptedField& f) { return f.inner->dim(); }},
                    v_);
}

std::string ReferenceField::name() const {
  return std::visit(overloaded{[](const ZeroField&) { return std::string("zero"); },
                               [](const RotationalField&) { return std::string("rotational"); },
                               [](const SpiralField&) { return std::string("spiral"); },
                               [](const KnnField&) { return std::string("knn"); },
                               [](const FilteredField& f) { return "filtered(" + f.inner->name() + ")"; },
                               [](const CorruptedField& f) { return "corrupted(" + f.inner->name() + ")"; }},
                    v_);
}

bool ReferenceField::differentiable() const {
  return std::visit(overloaded{[](const KnnField&) { return false; }, [](const FilteredField&) { return false; },
                               [](const CorruptedField& f) { return f.inner->differentiable(); },
                               [](const auto&) { return true; }},
                    v_);
}

double ReferenceField::filter_gate(std::span<const double> x) const {
  const auto* f = std::get_if<FilteredField>(&v_);
  if (!f) throw ConfigError("filter_gate needs a filtered field");
  const auto& knn = std::get<KnnField>(f->inner->v_);
  const auto nbrs = knn.index->query(x);
  double mean = 0.0;
  for (const auto& n : nbrs) mean += n.distance;
  mean /= static_cast<double>(nbrs.size());
  return sigmoid(mean - f->gamma);
}

void ReferenceField::eval_into(std::span<const double> x, double t, std::span<double> out) const {
  std::visit(overloaded{
                 [&](const ZeroField&) { std::fill(out.begin(), out.end(), 0.0); },
                 [&](const RotationalField& f) {
                   out[0] = -f.omega * x[1];
                   out[1] = f.omega * x[0];
                 },
                 [&](const SpiralField& f) {
                   std::fill(out.begin(), out.end(), 0.0);
                   out[0] = f.speed;
                   out[1] = f.omega * x[2];
                   out[2] = -f.omega * x[1];
                 },
                 [&](const KnnField& f) {
                   const auto v = knn_estimate(*f.index, x, f.weighting);
                   std::copy(v.begin(), v.end(), out.begin());
                 },
                 [&](const FilteredField& f) {
                   f.inner->eval_into(x, t, out);
                   const double w = filter_gate(x);
                   const std::uint64_t key = derive_seed(f.seed, {hash_point(x, t)});
                   for (std::size_t c = 0; c < out.size(); ++c)
                     out[c] = (1.0 - w) * out[c] + w * f.noise_scale * keyed_normal(key, c);
                 },
                 [&](const CorruptedField& f) {
                   f.inner->eval_into(x, t, out);
                   const std::uint64_t key = derive_seed(f.seed, {hash_point(x, t)});
                   for (std::size_t c = 0; c < out.size(); ++c)
                     out[c] = (1.0 - f.beta) * out[c] + f.beta * keyed_normal(key, c);
                 }},
             v_);
}

std::vector<double> ReferenceField::eval(std::span<const double> x, double t) const {
  if (x.size() != dim()) throw DimensionError("field dimension " + std::to_string(dim()) + ", point has " +
                                              std::to_string(x.size()));
  std::vector<double> out(dim());
  eval_into(x, t, out);
  return out;
}

Matrix ReferenceField::eval_batch(const Matrix& x, std::span<const double> t) const {
  if (x.cols() != dim()) throw DimensionError("field dimension mismatch in batch evaluation");
  if (t.size() != x.rows()) throw DimensionError("one time value per row expected");
  Matrix out(x.rows(), x.cols());
  const std::size_t n = x.rows();
  const bool heavy = std::holds_alternative<KnnField>(v_) || std::holds_alternative<FilteredField>(v_) ||
                     std::holds_alternative<CorruptedField>(v_);
#pragma omp parallel for schedule(static) if (heavy && n >= 16)
  for (std::size_t r = 0; r < n; ++r) eval_into(x.row(r), t[r], out.row(r));
  return out;
}

Matrix ReferenceField::vjp_batch(const Matrix& x, std::span<const double> t, const Matrix& cot) const {
  if (!cot.same_shape(x)) throw DimensionError("vjp cotangent shape mismatch");
  Matrix out(x.rows(), x.cols());
  std::visit(overloaded{
                 [&](const RotationalField& f) {
                   for (std::size_t r = 0; r < x.rows(); ++r) {
                     out(r, 0) = f.omega * cot(r, 1);
                     out(r, 1) = -f.omega * cot(r, 0);
                   }
                 },
                 [&](const SpiralField& f) {
                   for (std::size_t r = 0; r < x.rows(); ++r) {
                     out(r, 1) = -f.omega * cot(r, 2);
                     out(r, 2) = f.omega * cot(r, 1);
                   }
                 },
                 [&](const CorruptedField& f) {
                   out = f.inner->vjp_batch(x, t, cot);
                   for (double& v : out.values()) v *= 1.0 - f.beta;
                 },
                 [&](const auto&) {}},
             v_);
  return out;
}

std::vector<double> eval_field(const ReferenceField& field, std::span<const double> x, double t) {
  return field.eval(x, t);
}

ReferenceField filter_velocities(const ReferenceField& field, double gamma, double noise_scale, std::uint64_t seed) {
  if (!std::holds_alternative<KnnField>(field.variant()))
    throw ConfigError("velocity filtering needs a knn field");
  if (!(noise_scale >= 0.0)) throw ConfigError("filter noise scale must be nonnegative");
  return ReferenceField(FilteredField{std::make_shared<const ReferenceField>(field), gamma, noise_scale, seed});
}

ReferenceField corrupt_field(const ReferenceField& field, double beta, std::uint64_t seed) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("noise level beta must lie in [0, 1]");
  return ReferenceField(CorruptedField{std::make_shared<const ReferenceField>(field), beta, seed});
}

}  // namespace curlyfm
