#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "curlyfm/fields.hpp"
#include "curlyfm/interpolant.hpp"
#include "curlyfm/matrix.hpp"
#include "curlyfm/rng.hpp"

namespace curlyfm {

enum class TimeSampling {
  Uniform,     // K times drawn from U(0, 1)
  Equispaced,  // midpoints (k + 1/2) / K
};

TimeSampling time_sampling_from_string(const std::string& name);

/// Monte-Carlo path costs between two batches.
struct CostMatrix {
  Matrix values;  // n x m, entries >= 0
  std::size_t samples = 1;
  TimeSampling sampling = TimeSampling::Uniform;
};

/// The K local times used by one cost evaluation; a pure function of the seed.
std::vector<double> cost_times(std::size_t K, TimeSampling sampling, std::uint64_t seed);

/// (1/K) sum_k ||d(mu)/dt - f(mu)||^2 at the sampled times.
double path_cost(const PathInterpolant& interp, const ReferenceField& field, std::span<const double> x0,
                 std::span<const double> x1, std::size_t K, TimeSampling sampling, std::uint64_t seed,
                 std::size_t segment = 0);

/// Entry (i, j) is path_cost(x0_i, x1_j); every entry uses the same time draws.
CostMatrix cost_matrix(const PathInterpolant& interp, const ReferenceField& field, const Matrix& batch0,
                       const Matrix& batch1, std::size_t K, TimeSampling sampling, std::uint64_t seed,
                       std::size_t segment = 0);

/// Squared Euclidean cost, the straight-path special case.
CostMatrix squared_euclidean_cost(const Matrix& batch0, const Matrix& batch1);

enum class CouplingMode { ExactAssignment, Sinkhorn, Independent };

CouplingMode coupling_mode_from_string(const std::string& name);
std::string to_string(CouplingMode mode);

struct Coupling {
  CouplingMode mode = CouplingMode::ExactAssignment;
  /// (source, target) pairs; for assignments pairs[i].first == i.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  /// Dense plan, only for Sinkhorn.
  Matrix plan;
  double total_cost = 0.0;
  bool converged = true;
  double marginal_violation = 0.0;
  std::size_t iterations = 0;

  /// target index per source row (assignment and independent modes).
  std::vector<std::size_t> permutation() const;
};

/// Sum of C(i, perm[i]) accumulated in row order.
double assignment_cost(const Matrix& cost, std::span<const std::size_t> perm);

/// Minimum-cost permutation of a square matrix (Hungarian / shortest
/// augmenting path). Among optimal permutations the lexicographically smallest
/// is returned.
Coupling solve_assignment(const CostMatrix& cost);
Coupling solve_assignment(const Matrix& cost);

/// Entropic plan with uniform marginals by log-domain Sinkhorn scaling. Stops
/// when the row-marginal L1 violation drops below tol or after max_iter
/// iterations; `converged` reports which.
Coupling solve_sinkhorn(const CostMatrix& cost, double reg, double tol = 1e-6, std::size_t max_iter = 10000);
Coupling solve_sinkhorn(const Matrix& cost, double reg, double tol = 1e-6, std::size_t max_iter = 10000);

/// Pairs (i, i): the minibatch order already carries the randomness.
Coupling independent_coupling(const Matrix& batch0, const Matrix& batch1, const CostMatrix* cost = nullptr);

/// n pairs drawn from a Sinkhorn plan (multinomial over entries).
std::vector<std::pair<std::size_t, std::size_t>> sample_plan(const Coupling& coupling, std::size_t n, Rng& rng);

}  // namespace curlyfm
