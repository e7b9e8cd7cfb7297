#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "curlyfm/matcher.hpp"
#include "curlyfm/mlp.hpp"

namespace curlyfm {

struct Checkpoint {
  Mlp net;
  std::uint64_t seed = 0;
};

// JSON container: {"format": "curlyfm-mlp", "version": 1, "widths": [...],
// "activation": "...", "seed": n, "parameters": [...]}. Doubles are written
// in shortest round-trip form, so save/load is lossless.
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// A trained drift/score pair: {"format": "curlyfm-bridge", "version": 1,
/// "method", "sigma", "seed", "times", "drift": <mlp>, "score": <mlp> | null}.
struct BridgeCheckpoint {
  BridgeModel model;
  Method method = Method::CurlyFM;
  std::uint64_t seed = 0;
  std::vector<double> times{0.0, 1.0};
};

std::string bridge_to_json(const BridgeCheckpoint& ckpt);
BridgeCheckpoint bridge_from_json(const std::string& text);

void save_bridge(const std::filesystem::path& path, const BridgeCheckpoint& ckpt);
BridgeCheckpoint load_bridge(const std::filesystem::path& path);

}  // namespace curlyfm
