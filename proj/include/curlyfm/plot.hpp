#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "curlyfm/fields.hpp"
#include "curlyfm/simulate.hpp"
#include "curlyfm/snapshot.hpp"

namespace curlyfm {

struct SvgOptions {
  int width = 640;
  int height = 640;
  /// At most this many paths are drawn, spread evenly over the particles.
  std::size_t max_paths = 200;
  std::string title;
};

/// Paths projected onto the first two coordinates, with optional marginal
/// point clouds underneath.
void write_trajectory_svg(std::ostream& out, const Trajectory& traj, const std::vector<Snapshot>& marginals = {},
                          const SvgOptions& options = {});

struct PlotBounds {
  double x0 = -1.0, x1 = 1.0, y0 = -1.0, y1 = 1.0;
};

/// Bounding box of the first two coordinates of every state, padded by 5%.
PlotBounds bounds_of(const Trajectory& traj);

/// Quiver plot of the field's first two components on a grid x grid lattice at
/// time t (remaining coordinates zero). Arrows are scaled to the cell size.
void write_field_svg(std::ostream& out, const ReferenceField& field, double t, const PlotBounds& bounds,
                     std::size_t grid = 20, const SvgOptions& options = {});

/// Reads the "particle,step,t,x1..xd" layout written by write_trajectory_csv.
Trajectory read_trajectory_csv(std::istream& in);

}  // namespace curlyfm
