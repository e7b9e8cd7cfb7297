#include "curlyfm/commands.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "curlyfm/checkpoint.hpp"
#include "curlyfm/errors.hpp"
#include "curlyfm/plot.hpp"

namespace curlyfm {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <class F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError& e) {
    if (name == "validate-config") throw;
    throw StageError(name, e.what());
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string sanitize(const std::string& label) {
  std::string out;
  for (char c : label) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') ? c : '_';
  return out;
}

std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json file_entry(const fs::path& path, const fs::path& base) {
  return {{"path", fs::relative(path, base).generic_string()}, {"fnv1a", fnv1a_hex(read_text(path))}};
}

/// One configuration variant inside a run or an ablation sweep.
struct Variant {
  ExperimentConfig config;
  std::string suffix;  // appended to method labels
  bool own_data = false;
};

struct Session {
  fs::path dir;
  RunOptions options;
  std::vector<MetricRecord> records;
  json runs = json::array();
};

void write_run_artifacts(Session& s, const PreparedData& prepared, const MethodRun& run, json& entry) {
  const fs::path run_dir = s.dir / (sanitize(run.label) + "_seed" + std::to_string(run.seed));
  fs::create_directories(run_dir);
  const fs::path bridge = run_dir / "bridge.json";
  save_bridge(bridge, {run.model, run.method, run.seed, training_times(prepared)});
  entry["checkpoints"]["bridge"] = file_entry(bridge, s.dir);
  for (std::size_t i = 0; i < run.trajectories.size(); ++i) {
    const std::size_t m = run.evaluated_marginals[i];
    std::ostringstream csv;
    write_trajectory_csv(csv, run.trajectories[i]);
    write_text_atomic(run_dir / ("traj_m" + std::to_string(m) + ".csv"), csv.str());
    std::ostringstream svg;
    SvgOptions opt;
    opt.title = run.label + " seed " + std::to_string(run.seed) + " -> marginal " + std::to_string(m);
    write_trajectory_svg(svg, run.trajectories[i], {prepared.eval[m]}, opt);
    write_text_atomic(run_dir / ("traj_m" + std::to_string(m) + ".svg"), svg.str());
  }
}

void run_variant(Session& s, const Variant& v, const PreparedData& prepared, std::uint64_t seed,
                 std::optional<PathInterpolant>& interp, double& interp_seconds, json& interp_entry) {
  const ExperimentConfig& c = v.config;
  for (Method method : c.methods) {
    if (method == Method::CurlyFM && !interp) {
      const auto start = std::chrono::steady_clock::now();
      interp = stage("train-interpolant", [&]() -> PathInterpolant {
        const auto times = training_times(prepared);
        const std::size_t dim = prepared.data.marginal(0).dim();
        if (s.options.interpolant_checkpoint) {
          Checkpoint ck = load_checkpoint(*s.options.interpolant_checkpoint);
          PathInterpolant p(std::move(ck.net), dim, times);
          p.mark_trained();
          return p;
        }
        return train_stage_one(c, prepared, seed).interp;
      });
      interp_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      interp_entry = {{"source", s.options.interpolant_checkpoint ? "checkpoint" : "trained"}};
      if (s.options.write_artifacts) {
        const fs::path path = s.dir / ("interpolant" + v.suffix + "_seed" + std::to_string(seed) + ".json");
        save_checkpoint(path, {interp->phi(), seed});
        interp_entry["checkpoint"] = file_entry(path, s.dir);
      }
    }
    const std::string label = to_string(method) + v.suffix;
    MethodRun run = stage("train-bridge", [&] {
      return run_method(c, prepared, method, seed, method == Method::CurlyFM ? &*interp : nullptr, label);
    });
    json entry = {{"label", label}, {"method", to_string(method)}, {"seed", seed}};
    json clock = json::object();
    if (method == Method::CurlyFM) {
      clock["train-interpolant"] = interp_seconds;
      entry["interpolant"] = interp_entry;
    }
    for (const auto& sc : run.clock) clock[sc.stage] = sc.seconds;
    entry["wall_clock_seconds"] = clock;
    if (s.options.write_artifacts) stage("write-artifacts", [&] { write_run_artifacts(s, prepared, run, entry); });
    s.records.insert(s.records.end(), run.metrics.begin(), run.metrics.end());
    s.runs.push_back(std::move(entry));
  }
}

RunOutputs finish(Session& s, const ExperimentConfig& config, const std::string& kind) {
  RunOutputs out;
  out.dir = s.dir;
  out.metrics_csv = s.dir / "metrics.csv";
  out.summary_csv = s.dir / "summary.csv";
  out.manifest = s.dir / "manifest.json";
  std::ostringstream m, sum;
  write_metric_records_csv(m, s.records);
  write_metric_summary_csv(sum, summarize(s.records));
  write_text_atomic(out.metrics_csv, m.str());
  write_text_atomic(out.summary_csv, sum.str());
  json manifest = {{"format", "curlyfm-manifest"},
                   {"version", 1},
                   {"command", kind},
                   {"config_hash", config_hash(config)},
                   {"config", config_to_json(config)},
                   {"seeds", config.seeds},
                   {"runs", s.runs},
                   {"metrics_csv", file_entry(out.metrics_csv, s.dir)},
                   {"summary_csv", file_entry(out.summary_csv, s.dir)}};
  write_text_atomic(out.manifest, manifest.dump(2) + "\n");
  out.records = std::move(s.records);
  return out;
}

Session open_session(const ExperimentConfig& config, const RunOptions& options, const std::string& sub) {
  Session s;
  s.options = options;
  s.dir = output_root(config, options) / config.name;
  if (!sub.empty()) s.dir /= sub;
  fs::create_directories(s.dir);
  return s;
}

}  // namespace

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

ExperimentConfig apply_overrides(ExperimentConfig config, const RunOptions& options) {
  if (options.seed) config.seeds = {*options.seed};
  if (options.method) config.methods = {*options.method};
  config.validate();
  return config;
}

fs::path output_root(const ExperimentConfig& config, const RunOptions& options) {
  if (options.out) return *options.out;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return config.output_dir;
}

RunOutputs cmd_run(const ExperimentConfig& base, const RunOptions& options) {
  const ExperimentConfig config = stage("validate-config", [&] { return apply_overrides(base, options); });
  Session s = open_session(config, options, "");
  const PreparedData prepared = stage("prepare-data", [&] { return prepare_data(config); });
  for (std::uint64_t seed : config.seeds) {
    std::optional<PathInterpolant> interp;
    double seconds = 0.0;
    json entry;
    run_variant(s, {config, "", false}, prepared, seed, interp, seconds, entry);
  }
  return finish(s, config, "run");
}

RunOutputs cmd_ablate(const ExperimentConfig& base, const RunOptions& options) {
  const ExperimentConfig config = stage("validate-config", [&] { return apply_overrides(base, options); });
  if (config.ablation.axis.empty()) throw StageError("validate-config", "ablation.axis: no ablation axis configured");
  const std::string& axis = config.ablation.axis;
  std::vector<Variant> variants;
  for (const auto& value : config.ablation.values) {
    Variant v{config, "[" + axis + "=" + value_text(value) + "]", false};
    if (axis == "sigma") {
      v.config.bridge.sigma = value.get<double>();
      if (v.config.bridge.sigma == 0.0) v.config.simulate.sde = false;
    } else if (axis == "beta-noise") {
      v.config.field.corrupt_beta = value.get<double>();
      v.own_data = true;
    } else if (axis == "filter-gamma") {
      v.config.field.filter_gamma = value.get<double>();
      v.own_data = true;
    } else if (axis == "n-times") {
      v.config.bridge.method.cost_samples = value.get<std::size_t>();
    } else {
      const std::string c = value.get<std::string>();
      v.config.bridge.method.coupling = c == "with" ? CouplingMode::ExactAssignment : coupling_mode_from_string(c);
    }
    stage("validate-config", [&] { v.config.validate(); });
    variants.push_back(std::move(v));
  }
  Session s = open_session(config, options, "ablate-" + axis);
  const PreparedData shared = stage("prepare-data", [&] { return prepare_data(config); });
  for (std::uint64_t seed : config.seeds) {
    std::optional<PathInterpolant> shared_interp;
    double shared_seconds = 0.0;
    json shared_entry;
    for (const auto& v : variants) {
      if (!v.own_data) {
        run_variant(s, v, shared, seed, shared_interp, shared_seconds, shared_entry);
        continue;
      }
      const PreparedData own = stage("prepare-data", [&] { return prepare_data(v.config); });
      std::optional<PathInterpolant> interp;
      double seconds = 0.0;
      json entry;
      run_variant(s, v, own, seed, interp, seconds, entry);
    }
  }
  return finish(s, config, "ablate");
}

void cmd_plot(const fs::path& trajectory_csv, const fs::path& out_svg, const ReferenceField* field,
              double field_time) {
  std::ifstream in(trajectory_csv, std::ios::binary);
  if (!in) throw DataError("cannot read " + trajectory_csv.string());
  const Trajectory traj = read_trajectory_csv(in);
  if (traj.states.empty() || traj.particles() == 0) throw DataError("trajectory file is empty");
  std::ostringstream svg;
  SvgOptions opt;
  opt.title = trajectory_csv.filename().string();
  write_trajectory_svg(svg, traj, {}, opt);
  write_text_atomic(out_svg, svg.str());
  if (field) {
    std::ostringstream q;
    opt.title = field->name() + " at t = " + std::to_string(field_time);
    write_field_svg(q, *field, field_time, bounds_of(traj), 20, opt);
    fs::path quiver = out_svg;
    quiver.replace_extension();
    quiver += "_field.svg";
    write_text_atomic(quiver, q.str());
  }
}

Trajectory cmd_simulate(const fs::path& bridge_checkpoint, const Snapshot& start, const SimulateOptions& options) {
  const BridgeCheckpoint ck = load_bridge(bridge_checkpoint);
  SimulationConfig sc;
  sc.steps = options.steps;
  sc.t0 = options.t0;
  sc.t1 = options.t1;
  if (options.sde) return integrate_sde(ck.model, start.positions, ck.model.sigma, options.seed, sc, options.composition);
  return integrate_ode(ck.model, start.positions, sc);
}

std::vector<MetricRecord> cmd_evaluate(const ExperimentConfig& config, const fs::path& bridge_checkpoint) {
  const BridgeCheckpoint ck = stage("load-checkpoint", [&] { return load_bridge(bridge_checkpoint); });
  const PreparedData prepared = stage("prepare-data", [&] { return prepare_data(config); });
  return stage("evaluate", [&] { return evaluate_model(config, prepared, ck.model, to_string(ck.method), ck.seed); });
}

}  // namespace curlyfm
