#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "curlyfm/commands.hpp"
#include "curlyfm/errors.hpp"

namespace fs = std::filesystem;
using namespace curlyfm;

namespace {

void print_summary(const RunOutputs& out) {
  std::cout << "metrics:  " << out.metrics_csv.string() << '\n'
            << "summary:  " << out.summary_csv.string() << '\n'
            << "manifest: " << out.manifest.string() << '\n';
  for (const auto& s : summarize(out.records))
    std::cout << "  " << s.method << "  m" << s.marginal << "  " << s.metric << " = " << s.mean << " +- " << s.std
              << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curlyfm: trajectory inference with reference-drift bridge matching"};
  app.require_subcommand(1);

  std::string config_path, out, method, checkpoint, input;
  std::uint64_t seed = 0;

  RunOptions opts;
  const auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON) or run manifest")->required();
    sub->add_option("--seed", seed, "run a single seed instead of the config's list");
    sub->add_option("--out", out, "output root (overrides $" + std::string(kOutputRootEnv) + " and output_dir)");
    sub->add_option("--method", method, "run a single method: curly, cfm or otcfm");
  };

  auto* run = app.add_subcommand("run", "train, simulate and evaluate every configured method and seed");
  add_run_flags(run);
  run->add_option("--checkpoint", checkpoint, "prebuilt interpolant checkpoint; skips stage one");

  auto* ablate = app.add_subcommand("ablate", "sweep the config's ablation axis");
  add_run_flags(ablate);

  auto* plot = app.add_subcommand("plot", "SVG plot of a trajectory CSV (plus a field quiver with --config)");
  double field_time = 0.0;
  plot->add_option("--input", input, "trajectory CSV")->required();
  plot->add_option("--out", out, "output SVG")->required();
  plot->add_option("--config", config_path, "config whose reference field is drawn as a quiver plot");
  plot->add_option("--time", field_time, "time at which the field is drawn");

  auto* simulate = app.add_subcommand("simulate", "integrate a snapshot CSV with a saved bridge model");
  SimulateOptions sim;
  std::string composition = "scaled";
  simulate->add_option("--checkpoint", checkpoint, "bridge checkpoint")->required();
  simulate->add_option("--input", input, "snapshot CSV with header t,x1..xd")->required();
  simulate->add_option("--out", out, "trajectory CSV")->required();
  simulate->add_option("--steps", sim.steps, "Euler steps")->check(CLI::PositiveNumber);
  simulate->add_option("--t0", sim.t0, "start time");
  simulate->add_option("--t1", sim.t1, "end time");
  simulate->add_flag("--sde", sim.sde, "Euler-Maruyama with the score network");
  simulate->add_option("--composition", composition, "score composition: scaled or raw");
  simulate->add_option("--seed", sim.seed, "noise seed");

  auto* evaluate = app.add_subcommand("evaluate", "score a saved bridge model on a config's evaluation data");
  evaluate->add_option("--config", config_path, "experiment config")->required();
  evaluate->add_option("--checkpoint", checkpoint, "bridge checkpoint")->required();
  evaluate->add_option("--out", out, "metrics CSV (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run || *ablate) {
      const ExperimentConfig config = load_config(config_path);
      if (!out.empty()) opts.out = out;
      if ((*run && run->count("--seed")) || (*ablate && ablate->count("--seed"))) opts.seed = seed;
      if (!method.empty()) opts.method = method_from_string(method);
      if (!checkpoint.empty()) opts.interpolant_checkpoint = checkpoint;
      print_summary(*run ? cmd_run(config, opts) : cmd_ablate(config, opts));
    } else if (*plot) {
      std::optional<ExperimentConfig> config;
      std::optional<PreparedData> prepared;
      if (!config_path.empty()) {
        config = load_config(config_path);
        prepared = prepare_data(*config);
      }
      cmd_plot(input, out, prepared ? &prepared->truth_field : nullptr, field_time);
    } else if (*simulate) {
      sim.composition = score_composition_from_string(composition);
      const Snapshot start = ingest_csv(input);
      if (!simulate->count("--t0")) sim.t0 = start.time;
      const Trajectory traj = cmd_simulate(checkpoint, start, sim);
      std::ostringstream csv;
      write_trajectory_csv(csv, traj);
      write_text_atomic(out, csv.str());
    } else if (*evaluate) {
      const auto records = cmd_evaluate(load_config(config_path), checkpoint);
      std::ostringstream csv;
      write_metric_records_csv(csv, records);
      if (out.empty())
        std::cout << csv.str();
      else
        write_text_atomic(out, csv.str());
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
