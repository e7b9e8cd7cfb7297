#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "curlyfm/fields.hpp"
#include "curlyfm/rng.hpp"
#include "curlyfm/snapshot.hpp"

namespace curlyfm {

/// Source and target populations at t = 0 and t = 1 with the field that links them.
struct SyntheticPair {
  Snapshot source;
  Snapshot target;
  ReferenceField field = ReferenceField::zero(1);
};

struct CirclesConfig {
  std::size_t n = 1000;
  double source_radius = 1.0;
  double target_radius = 2.0;
  /// von Mises concentration of the angular density; 0 is uniform.
  double skew = 2.0;
  double noise = 0.05;
  /// Angular speed of the rotational field. The target's dense side sits this far
  /// counter-clockwise from the source's.
  double omega = 1.0;
  std::uint64_t seed = 0;
};

/// Two concentric rings, each denser on one side, under a rotational field.
SyntheticPair gen_asymmetric_circles(const CirclesConfig& config);

/// von Mises(mu, kappa) angle in [-pi, pi) + mu wrapped to [0, 2 pi).
double sample_von_mises(double mu, double kappa, Rng& rng);

/// Standard-normal clouds centred at -0.1 e1 and +0.1 e1 under the spiral
/// field with speed 0.2 and angular rate pi. Needs d >= 3.
SyntheticPair gen_gaussian_spiral(std::size_t dim, std::size_t n, std::uint64_t seed, double spread = 1.0);

/// Ordered marginals, some held out from training.
class MultiMarginalDataset {
 public:
  MultiMarginalDataset() = default;
  /// Times must increase strictly; held-out indices must be interior.
  MultiMarginalDataset(std::vector<Snapshot> marginals, std::vector<std::size_t> held_out, std::string source,
                       bool aligned_rows);

  std::size_t size() const { return marginals_.size(); }
  const Snapshot& marginal(std::size_t i) const { return marginals_.at(i); }
  const std::vector<Snapshot>& all_marginals() const { return marginals_; }
  const std::vector<std::size_t>& held_out() const { return held_out_; }
  bool is_held_out(std::size_t i) const;
  /// Only the marginals a trainer may see, in time order.
  std::vector<Snapshot> training_marginals() const;
  /// Indices into all_marginals() of the training marginals.
  std::vector<std::size_t> training_indices() const;
  const std::string& source() const { return source_; }
  /// Row r of every marginal is the same particle (known coupling).
  bool aligned_rows() const { return aligned_; }

 private:
  std::vector<Snapshot> marginals_;
  std::vector<std::size_t> held_out_;
  std::string source_;
  bool aligned_ = false;
};

struct RolloutConfig {
  std::size_t n = 1000;
  std::vector<double> times{0.0, 1.0};
  double solver_dt = 1e-3;
  std::uint64_t seed = 0;
  /// Initial positions are uniform in the ball of this radius around center
  /// (origin when empty).
  std::vector<double> center;
  double radius = 0.05;
  /// Horizon of the forward-difference velocities; 0 uses the spacing to the
  /// next marginal (backward difference for the last one).
  double fd_step = 0.0;
  std::vector<std::size_t> held_out;
};

/// Integrates particles under the field with fine explicit Euler and records
/// them at the marginal times with finite-difference velocities.
MultiMarginalDataset rollout_dataset(const ReferenceField& field, std::size_t dim, const RolloutConfig& config);

/// Header t,x1..xd[,v1..vd]; one row per particle.
void write_snapshot_csv(std::ostream& out, const Snapshot& snapshot);
void export_csv(const std::filesystem::path& path, const Snapshot& snapshot);

/// Reads one snapshot; every row must carry the same time label.
Snapshot read_snapshot_csv(std::istream& in);
Snapshot ingest_csv(const std::filesystem::path& path);
/// Reads rows with several time labels, grouped into snapshots in order of
/// first appearance (times must increase).
std::vector<Snapshot> read_marginals_csv(std::istream& in);
std::vector<Snapshot> ingest_marginals_csv(const std::filesystem::path& path);
void export_marginals_csv(const std::filesystem::path& path, const std::vector<Snapshot>& marginals);

struct SplitResult {
  Snapshot snapshot;
  std::vector<std::size_t> counts;
  /// Set when some split ended up empty.
  bool has_empty_split = false;
};

/// Seeded shuffle, then largest-remainder partition into train / val [/ test].
SplitResult split(const Snapshot& snapshot, const std::vector<double>& fractions, std::uint64_t seed);

}  // namespace curlyfm
