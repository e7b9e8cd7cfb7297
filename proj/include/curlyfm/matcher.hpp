#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curlyfm/adam.hpp"
#include "curlyfm/coupling.hpp"
#include "curlyfm/fields.hpp"
#include "curlyfm/interpolant.hpp"
#include "curlyfm/mlp.hpp"
#include "curlyfm/snapshot.hpp"

namespace curlyfm {

/// Learned drift v(x, t) and, when sigma > 0, score s(x, t). Both networks
/// take x with global time appended.
struct BridgeModel {
  Mlp drift;
  std::optional<Mlp> score;
  double sigma = 0.0;
  bool trained = false;

  std::size_t dim() const { return drift.output_dim(); }
  /// Throws ConfigError unless sigma >= 0 and the score net exists iff sigma > 0.
  void validate() const;
};

BridgeModel make_bridge_model(std::size_t dim, double sigma, const std::vector<std::size_t>& hidden,
                              Activation activation, std::uint64_t seed);

enum class Method { CurlyFM, CFM, OTCFM };

Method method_from_string(const std::string& name);
std::string to_string(Method m);

struct MethodConfig {
  Method method = Method::CurlyFM;
  /// Only consulted for CurlyFM; CFM is always independent and OT-CFM always exact.
  CouplingMode coupling = CouplingMode::ExactAssignment;
  std::size_t cost_samples = 1;
  TimeSampling cost_sampling = TimeSampling::Uniform;
  double sinkhorn_reg = 0.0;  // 0 means 2 sigma^2 (clamped below by 1e-3)

  /// Throws ConfigError for inconsistent combinations.
  void validate() const;
  CouplingMode effective_coupling() const;
};

/// 2 sqrt(t (1 - t)) / sigma. Zero at t in {0, 1}; sigma must be positive.
double lambda_t(double t, double sigma);

struct BridgeSample {
  Matrix x;    // mu + sigma sqrt(t (1 - t)) eps
  Matrix eps;  // standard normal draws, recorded even when sigma = 0
};

BridgeSample noisy_bridge_sample(const Matrix& mu, std::span<const double> t, double sigma, std::uint64_t seed);

/// Coupled pairs with their loss-time draws.
struct BridgeBatch {
  Matrix x0;
  Matrix x1;
  std::vector<double> t;  // local times in [0, 1]
  Matrix eps;
  std::size_t segment = 0;
};

struct BridgeLoss {
  double flow = 0.0;
  double score = 0.0;
  double total = 0.0;
  std::vector<double> drift_grad;
  std::vector<double> score_grad;
  /// Gradient reaching the interpolant's parameters; all zero by construction.
  std::vector<double> interp_grad;
};

/// L_flow = mean 1/2 ||v(x_t) - stop_grad(d mu / dt)||^2 at the noisy bridge
/// sample, plus, when sigma > 0, L_score = mean 1/2 ||lambda_t s(x_t) + eps||^2.
/// Rows with t (1 - t) sigma^2 < 1e-12 contribute no score term.
BridgeLoss combined_loss(const BridgeModel& model, const PathInterpolant& interp, const BridgeBatch& batch);

/// Flow term only.
BridgeLoss flow_loss(const BridgeModel& model, const PathInterpolant& interp, const BridgeBatch& batch);

/// Score term only, for given bridge means mu at local times t (global time
/// equals local time here).
BridgeLoss score_loss(const BridgeModel& model, const Matrix& mu, std::span<const double> t, double sigma,
                      const Matrix& eps);

struct BridgeTrainConfig {
  MethodConfig method;
  double sigma = 0.0;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::Silu;
  std::size_t epochs = 500;
  std::size_t batch_size = 256;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  /// Keep the coupling permutation of every step in the result.
  bool record_couplings = false;
};

struct BridgeStepLog {
  std::size_t step = 0;
  double flow = 0.0;
  double score = 0.0;
  double coupling_cost = 0.0;
};

struct BridgeTrainResult {
  BridgeModel model;
  std::vector<BridgeStepLog> log;
  std::vector<std::vector<std::size_t>> couplings;  // when recorded
  std::vector<Matrix> coupled_sources;              // when recorded: x0 batch per step
  std::vector<Matrix> coupled_targets;              // when recorded: x1 batch before coupling
};

/// Marginal flow (and score) matching under minibatch couplings. CurlyFM
/// couples by the interpolant's path cost against `field`; CFM and OT-CFM use
/// straight paths regardless of `interp`.
BridgeTrainResult train_bridge(const BridgeTrainConfig& config, const PathInterpolant& interp,
                               std::span<const Snapshot> marginals, const ReferenceField& field);

}  // namespace curlyfm
