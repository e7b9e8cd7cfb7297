#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curlyfm/config.hpp"
#include "curlyfm/datasets.hpp"
#include "curlyfm/interpolant.hpp"
#include "curlyfm/matcher.hpp"
#include "curlyfm/metrics.hpp"
#include "curlyfm/simulate.hpp"

namespace curlyfm {

/// Everything a run needs from the dataset side.
struct PreparedData {
  MultiMarginalDataset data;
  /// Marginals used for evaluation: a fresh sample for synthetic pairs, the
  /// dataset itself otherwise.
  std::vector<Snapshot> eval;
  /// Field the interpolant and the path costs see (possibly kNN, filtered or corrupted).
  ReferenceField train_field = ReferenceField::zero(1);
  /// Field the cosine and L2 metrics compare against.
  ReferenceField truth_field = ReferenceField::zero(1);
  std::string label;
};

PreparedData prepare_data(const ExperimentConfig& config);

/// Marginal times the trainers see.
std::vector<double> training_times(const PreparedData& prepared);

InterpolantTrainResult train_stage_one(const ExperimentConfig& config, const PreparedData& prepared,
                                       std::uint64_t seed);

struct StageClock {
  std::string stage;
  double seconds = 0.0;
};

struct MethodRun {
  std::string label;
  Method method = Method::CurlyFM;
  std::uint64_t seed = 0;
  BridgeModel model;
  std::vector<BridgeStepLog> log;
  std::vector<std::size_t> evaluated_marginals;
  std::vector<Trajectory> trajectories;  // one per evaluated marginal
  std::vector<MetricRecord> metrics;
  std::vector<StageClock> clock;
};

/// Pairs (start, end) of evaluation marginals: each held-out marginal from its
/// predecessor, or every consecutive pair when nothing is held out.
std::vector<std::pair<std::size_t, std::size_t>> evaluation_pairs(const PreparedData& prepared);

/// Integrates from each evaluation start marginal and scores the result.
std::vector<MetricRecord> evaluate_model(const ExperimentConfig& config, const PreparedData& prepared,
                                         const BridgeModel& model, const std::string& label, std::uint64_t seed,
                                         std::vector<Trajectory>* trajectories = nullptr);

/// Stage two plus evaluation. `interp` must be trained for CurlyFM and is ignored otherwise.
MethodRun run_method(const ExperimentConfig& config, const PreparedData& prepared, Method method,
                     std::uint64_t seed, const PathInterpolant* interp, std::string label = "");

}  // namespace curlyfm
