#pragma once

#include <optional>
#include <vector>

#include "curlyfm/matrix.hpp"

namespace curlyfm {

enum class SplitTag { Train, Val, Test };

/// A population observed at one time, optionally with per-particle velocities.
struct Snapshot {
  double time = 0.0;
  Matrix positions;
  std::optional<Matrix> velocities;
  /// One tag per row; empty means every row is training data.
  std::vector<SplitTag> tags;

  std::size_t size() const { return positions.rows(); }
  std::size_t dim() const { return positions.cols(); }
  bool has_velocities() const { return velocities.has_value(); }

  /// Rows carrying the given tag (all rows when untagged and tag == Train).
  std::vector<std::size_t> rows_with(SplitTag tag) const;
  /// Sub-snapshot restricted to one split, preserving row order.
  Snapshot subset(SplitTag tag) const;
};

}  // namespace curlyfm
