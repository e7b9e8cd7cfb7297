#include "curlyfm/snapshot.hpp"

namespace curlyfm {

std::vector<std::size_t> Snapshot::rows_with(SplitTag tag) const {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < size(); ++r) {
    const SplitTag t = tags.empty() ? SplitTag::Train : tags[r];
    if (t == tag) rows.push_back(r);
  }
  return rows;
}

Snapshot Snapshot::subset(SplitTag tag) const {
  const auto rows = rows_with(tag);
  Snapshot out;
  out.time = time;
  out.positions = positions.select_rows(rows);
  if (velocities) out.velocities = velocities->select_rows(rows);
  return out;
}

}  // namespace curlyfm
