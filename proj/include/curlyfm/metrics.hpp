#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "curlyfm/fields.hpp"
#include "curlyfm/matcher.hpp"
#include "curlyfm/matrix.hpp"
#include "curlyfm/simulate.hpp"

namespace curlyfm {

/// Options shared by the assignment-based distances. Unequal sets are
/// subsampled (without replacement, seeded) to the smaller size, and both to
/// max_points when that is non-zero.
struct TransportOptions {
  std::uint64_t seed = 0;
  std::size_t max_points = 0;
};

/// sqrt of the minimum over pairings of the mean squared distance.
double wasserstein2(const Matrix& a, const Matrix& b, const TransportOptions& options = {});
/// Minimum over pairings of the mean Euclidean distance.
double emd(const Matrix& a, const Matrix& b, const TransportOptions& options = {});

struct MmdResult {
  double raw = 0.0;       // unbiased estimate, may be negative
  double reported = 0.0;  // max(raw, 0)
  double bandwidth = 0.0;
};

/// Median pairwise distance over the pooled set.
double median_heuristic(const Matrix& a, const Matrix& b);
/// Unbiased squared MMD with k(x, y) = exp(-||x - y||^2 / (2 h^2)); h from the
/// median heuristic when bandwidth is empty.
MmdResult mmd(const Matrix& a, const Matrix& b, std::optional<double> bandwidth = std::nullopt);

/// A mean over (particle, step) pairs that may have skipped degenerate pairs.
struct AlongResult {
  double value = 0.0;
  std::size_t pairs = 0;
  std::size_t skipped = 0;
  bool defined() const { return pairs > 0; }
};

/// Mean 1 - cos(v_r, f_r) over rows; rows where either norm is below 1e-9 are skipped.
AlongResult cosine_distance(const Matrix& v, const Matrix& f);
/// Mean ||v_r - f_r||^2 (or ||v_r - f_r|| when squared is false).
AlongResult l2_cost(const Matrix& v, const Matrix& f, bool squared = true);

/// Learned drift against the reference field at the trajectory states of
/// every step before the last. Uses recorded velocities when present.
AlongResult cosine_distance_along(const BridgeModel& model, const ReferenceField& field, const Trajectory& traj);
AlongResult l2_cost_along(const BridgeModel& model, const ReferenceField& field, const Trajectory& traj,
                          bool squared = true);

/// Mean squared error between index-aligned predictions and ground truth.
double mse_known_coupling(const Matrix& predicted, const Matrix& truth);

/// Fraction of rows i whose true partner truth_i is among the k ground-truth
/// points nearest to predicted_i (distance ties broken by index).
double precision_at_k(const Matrix& predicted, const Matrix& truth, std::size_t k);

/// One measured value.
struct MetricRecord {
  std::string method;
  std::string dataset;
  std::size_t marginal = 0;
  std::string metric;
  std::uint64_t seed = 0;
  double value = 0.0;
};

/// Mean and sample standard deviation over seeds of one (method, dataset, marginal, metric).
struct MetricSummary {
  std::string method;
  std::string dataset;
  std::size_t marginal = 0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::vector<std::uint64_t> seeds;
};

std::vector<MetricSummary> summarize(const std::vector<MetricRecord>& records);

void write_metric_records_csv(std::ostream& out, const std::vector<MetricRecord>& records);
void write_metric_summary_csv(std::ostream& out, const std::vector<MetricSummary>& summary);

}  // namespace curlyfm
