#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "curlyfm/matrix.hpp"

namespace curlyfm {

enum class KernelWeighting {
  InverseDistance,  // w_i proportional to 1 / (d_i + 1e-9)
  Literal,          // w_i = d_i / sum_j d_j (weights far neighbours more)
};

KernelWeighting weighting_from_string(const std::string& name);

/// Brute-force k-nearest-neighbour lookup over points carrying velocities.
class KnnIndex {
 public:
  KnnIndex(Matrix points, Matrix velocities, std::size_t k);

  struct Neighbor {
    std::size_t index;
    double distance;
  };

  /// The k nearest points, ordered by (distance, index).
  std::vector<Neighbor> query(std::span<const double> x) const;

  const Matrix& points() const { return points_; }
  const Matrix& velocities() const { return velocities_; }
  std::size_t k() const { return k_; }
  std::size_t dim() const { return points_.cols(); }

 private:
  Matrix points_;
  Matrix velocities_;
  std::size_t k_;
};

/// Kernel weights over the k neighbours: nonnegative and summing to one.
/// An exact hit (distance 0) takes all the weight.
std::vector<double> kernel_weights(std::span<const KnnIndex::Neighbor> nbrs, KernelWeighting weighting);

std::vector<double> knn_estimate(const KnnIndex& index, std::span<const double> query,
                                 KernelWeighting weighting = KernelWeighting::InverseDistance);

class ReferenceField;

struct ZeroField {
  std::size_t dim;
};
/// omega * (-x2, x1) in the plane.
struct RotationalField {
  double omega;
};
/// (speed, omega * x3, -omega * x2, 0, ..., 0).
struct SpiralField {
  std::size_t dim;
  double speed;
  double omega;
};
struct KnnField {
  std::shared_ptr<const KnnIndex> index;
  KernelWeighting weighting;
};
/// (1 - w) f + w n with w = sigmoid(mean kNN distance - gamma), n ~ N(0, noise_scale^2).
struct FilteredField {
  std::shared_ptr<const ReferenceField> inner;
  double gamma;
  double noise_scale;
  std::uint64_t seed;
};
/// (1 - beta) f + beta n with n ~ N(0, I).
struct CorruptedField {
  std::shared_ptr<const ReferenceField> inner;
  double beta;
  std::uint64_t seed;
};

/// The reference drift f_t. Immutable; evaluation is safe from several
/// threads. Noisy variants key their draws on (seed, query point, t), so a
/// given query always sees the same noise.
class ReferenceField {
 public:
  using Variant = std::variant<ZeroField, RotationalField, SpiralField, KnnField, FilteredField, CorruptedField>;

  static ReferenceField zero(std::size_t dim);
  static ReferenceField rotational(double omega);
  static ReferenceField spiral(std::size_t dim, double speed, double omega);
  /// Throws ConfigError when velocities are missing or k is out of range.
  static ReferenceField knn(const Matrix& points, const Matrix& velocities, std::size_t k,
                            KernelWeighting weighting = KernelWeighting::InverseDistance);

  std::size_t dim() const;
  const Variant& variant() const { return v_; }
  std::string name() const;
  /// True when the field is analytic and its pullback is exact. kNN-based
  /// fields treat their kernel weights as constants (zero pullback).
  bool differentiable() const;

  std::vector<double> eval(std::span<const double> x, double t) const;
  Matrix eval_batch(const Matrix& x, std::span<const double> t) const;
  /// Rows of J(x_r)^T cot_r.
  Matrix vjp_batch(const Matrix& x, std::span<const double> t, const Matrix& cot) const;

  /// Gate w_gamma(x) of a filtered field (for inspection and tests).
  double filter_gate(std::span<const double> x) const;

 private:
  explicit ReferenceField(Variant v) : v_(std::move(v)) {}
  friend ReferenceField filter_velocities(const ReferenceField&, double, double, std::uint64_t);
  friend ReferenceField corrupt_field(const ReferenceField&, double, std::uint64_t);

  void eval_into(std::span<const double> x, double t, std::span<double> out) const;
  Variant v_;
};

std::vector<double> eval_field(const ReferenceField& field, std::span<const double> x, double t);

/// Blends a kNN field with seeded Gaussian noise gated by distance to the data.
ReferenceField filter_velocities(const ReferenceField& field, double gamma, double noise_scale = 0.1,
                                 std::uint64_t seed = 0);

/// (1 - beta) f + beta * standard normal noise. beta must lie in [0, 1].
ReferenceField corrupt_field(const ReferenceField& field, double beta, std::uint64_t seed);

}  // namespace curlyfm
