#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "curlyfm/adam.hpp"
#include "curlyfm/fields.hpp"
#include "curlyfm/mlp.hpp"
#include "curlyfm/snapshot.hpp"
#include "curlyfm/tape.hpp"

namespace curlyfm {

/// Endpoint-pinned neural path
///
///   mu(t) = t x1 + (1 - t) x0 + t (1 - t) phi(x0, x1, t_global)
///
/// between consecutive marginals. phi sees the global time
/// t_global = t_i + t (t_{i+1} - t_i) of segment i, so one network serves a
/// chain of marginals. Velocities are reported per unit of global time.
class PathInterpolant {
 public:
  PathInterpolant() = default;
  /// phi must have widths {2d + 1, ..., d}.
  PathInterpolant(Mlp phi, std::size_t dim, std::vector<double> marginal_times = {0.0, 1.0});
  /// phi pinned to zero: straight-line paths.
  static PathInterpolant straight(std::size_t dim, std::vector<double> marginal_times = {0.0, 1.0});

  std::size_t dim() const { return dim_; }
  bool is_straight() const { return straight_; }
  const Mlp& phi() const { return phi_; }
  Mlp& phi() { return phi_; }
  const std::vector<double>& marginal_times() const { return times_; }
  std::size_t segments() const { return times_.size() - 1; }
  double segment_length(std::size_t segment) const;

  bool trained() const { return trained_ || straight_; }
  void mark_trained() { trained_ = true; }

 private:
  Mlp phi_;
  std::size_t dim_ = 0;
  std::vector<double> times_{0.0, 1.0};
  bool straight_ = false;
  bool trained_ = false;
};

/// t_i + t_local (t_{i+1} - t_i).
double global_time(const PathInterpolant& interp, std::size_t segment, double t_local);

struct PathBatch {
  Matrix mu;
  Matrix mu_dot;
};

/// mu and d(mu)/d(global time) for row pairs (x0_r, x1_r) at local times t_r
/// on one segment.
PathBatch evaluate_paths(const PathInterpolant& interp, const Matrix& x0, const Matrix& x1,
                         std::span<const double> t_local, std::size_t segment = 0);

std::vector<double> mu(const PathInterpolant& interp, std::span<const double> x0, std::span<const double> x1,
                       double t_local, std::size_t segment = 0);
std::vector<double> mu_dot(const PathInterpolant& interp, std::span<const double> x0, std::span<const double> x1,
                           double t_local, std::size_t segment = 0);

/// The same quantities recorded on a tape with phi's parameters as leaves.
struct TapePath {
  BoundMlp phi;
  Var mu;
  Var mu_dot;
};

TapePath record_paths(GradTape& tape, const PathInterpolant& interp, const Matrix& x0, const Matrix& x1,
                      std::span<const double> t_local, std::size_t segment, bool trainable);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // flat, Mlp::flat_parameters() order
};

/// Mean over rows of ||d(mu)/dt - f(mu)||^2 and its gradient in phi's
/// parameters. Analytic fields are differentiated through mu; kNN-based
/// fields are held constant for the step.
LossAndGrad interpolant_loss(const PathInterpolant& interp, const Matrix& x0, const Matrix& x1,
                             std::span<const double> t_local, const ReferenceField& field, std::size_t segment = 0);

struct InterpolantTrainConfig {
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::Silu;
  std::size_t epochs = 500;
  std::size_t batch_size = 256;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  /// Start phi's output layer at zero, i.e. from straight paths.
  bool zero_init_output = true;
  std::size_t eval_batch = 1024;
};

struct InterpolantTrainResult {
  PathInterpolant interp;
  std::vector<double> loss_curve;  // one entry per optimizer step
  double straight_loss = 0.0;      // phi = 0 on the fixed evaluation batch
  double final_loss = 0.0;         // trained phi on the same batch
};

/// Trains phi on independently drawn (x0, x1, t) triples. Each step picks a
/// segment uniformly and draws the pair from its two marginals. An epoch is
/// ceil(n / batch_size) steps, n the size of the first marginal.
InterpolantTrainResult train_interpolant(const InterpolantTrainConfig& config, std::span<const Snapshot> marginals,
                                         const ReferenceField& field);

}  // namespace curlyfm
