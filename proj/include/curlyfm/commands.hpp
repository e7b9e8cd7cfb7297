#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "curlyfm/config.hpp"
#include "curlyfm/experiment.hpp"

namespace curlyfm {

/// Overrides the config's output_dir; --out overrides both.
inline constexpr const char* kOutputRootEnv = "CURLYFM_OUTPUT_ROOT";

struct RunOptions {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;    // replaces the seed list
  std::optional<Method> method;         // replaces the method list
  /// Prebuilt phi (curlyfm-mlp checkpoint); skips interpolant training.
  std::optional<std::filesystem::path> interpolant_checkpoint;
  /// Checkpoints, trajectory CSVs and SVGs; metrics and manifest are always written.
  bool write_artifacts = true;
};

struct RunOutputs {
  std::filesystem::path dir;
  std::filesystem::path metrics_csv;
  std::filesystem::path summary_csv;
  std::filesystem::path manifest;
  std::vector<MetricRecord> records;
};

ExperimentConfig apply_overrides(ExperimentConfig config, const RunOptions& options);
std::filesystem::path output_root(const ExperimentConfig& config, const RunOptions& options);

/// Stage one (CurlyFM only), stage two, simulation and evaluation for every
/// method and seed. Errors surface as StageError naming the stage.
RunOutputs cmd_run(const ExperimentConfig& config, const RunOptions& options = {});

/// One run per ablation value per seed, plus a mean/std summary.
RunOutputs cmd_ablate(const ExperimentConfig& config, const RunOptions& options = {});

/// Trajectory SVG from a trajectory CSV, and a quiver plot next to it when a field is given.
void cmd_plot(const std::filesystem::path& trajectory_csv, const std::filesystem::path& out_svg,
              const ReferenceField* field = nullptr, double field_time = 0.0);

struct SimulateOptions {
  std::size_t steps = 100;
  double t0 = 0.0;
  double t1 = 1.0;
  bool sde = false;
  ScoreComposition composition = ScoreComposition::Scaled;
  std::uint64_t seed = 0;
};

/// Integrates the snapshot's positions with a saved bridge model.
Trajectory cmd_simulate(const std::filesystem::path& bridge_checkpoint, const Snapshot& start,
                        const SimulateOptions& options);

/// Scores a saved bridge model on the config's evaluation marginals.
std::vector<MetricRecord> cmd_evaluate(const ExperimentConfig& config, const std::filesystem::path& bridge_checkpoint);

/// Writes to a sibling temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace curlyfm
