#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "curlyfm/checkpoint.hpp"
#include "curlyfm/commands.hpp"
#include "curlyfm/config.hpp"
#include "curlyfm/errors.hpp"
#include "curlyfm/plot.hpp"
#include "support.hpp"

using namespace curlyfm;
namespace fs = std::filesystem;
using nlohmann::json;
using testing::max_rel_err;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("curlyfm_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_spiral(const fs::path& root) {
  ExperimentConfig c;
  c.name = "tiny";
  c.output_dir = root.string();
  c.dataset.kind = "gaussian_spiral";
  c.dataset.dim = 3;
  c.dataset.n = 64;
  c.dataset.eval_n = 64;
  c.interpolant.hidden = {8};
  c.interpolant.epochs = 2;
  c.interpolant.batch_size = 32;
  c.interpolant.eval_batch = 64;
  c.bridge.hidden = {8};
  c.bridge.epochs = 2;
  c.bridge.batch_size = 32;
  c.methods = {Method::CurlyFM, Method::OTCFM, Method::CFM};
  c.seeds = {0};
  c.simulate.steps = 20;
  c.metrics.w2_max_points = 64;
  return c;
}

std::string error_of(const ExperimentConfig& c) {
  try {
    c.validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

struct EnvGuard {
  std::string old;
  bool had;
  EnvGuard() : had(std::getenv(kOutputRootEnv) != nullptr) {
    if (had) old = std::getenv(kOutputRootEnv);
  }
  ~EnvGuard() {
    if (had)
      setenv(kOutputRootEnv, old.c_str(), 1);
    else
      unsetenv(kOutputRootEnv);
  }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + CURLYFM_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("default config is valid and survives a json round trip") {
  const ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  const json j = config_to_json(c);
  const ExperimentConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(config_hash(back) == config_hash(c));

  ExperimentConfig other = c;
  other.bridge.sigma = 0.25;
  CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("unknown keys and wrong types name the field") {
  json j = config_to_json(ExperimentConfig{});
  j["bridge"]["sigmaa"] = 1.0;
  try {
    config_from_json(j);
    FAIL("accepted an unknown key");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("bridge.sigmaa", 0) == 0);
  }

  j = config_to_json(ExperimentConfig{});
  j["dataset"]["n"] = "many";
  try {
    config_from_json(j);
    FAIL("accepted a string for an integer");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("dataset.n", 0) == 0);
  }

  j = config_to_json(ExperimentConfig{});
  j["methods"] = json::array({"curly", "sb"});
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
}

TEST_CASE("every invalid single-field mutation is reported under that field") {
  using Mut = std::pair<std::string, void (*)(ExperimentConfig&, double)>;
  const std::vector<Mut> muts{
      {"bridge.sigma", [](ExperimentConfig& c, double u) { c.bridge.sigma = -1e-6 - u; }},
      {"dataset.n", [](ExperimentConfig& c, double) { c.dataset.n = 0; }},
      {"dataset.spread", [](ExperimentConfig& c, double u) { c.dataset.spread = -u; }},
      {"field.corrupt_beta", [](ExperimentConfig& c, double u) { c.field.corrupt_beta = 1.0 + 1e-9 + u; }},
      {"interpolant.lr", [](ExperimentConfig& c, double u) { c.interpolant.adam.lr = -u; }},
      {"bridge.beta1", [](ExperimentConfig& c, double u) { c.bridge.adam.beta1 = 1.0 + u; }},
      {"interpolant.hidden", [](ExperimentConfig& c, double) { c.interpolant.hidden.clear(); }},
      {"bridge.epochs", [](ExperimentConfig& c, double) { c.bridge.epochs = 0; }},
      {"simulate.sde", [](ExperimentConfig& c, double) {
         c.simulate.sde = true;
         c.bridge.sigma = 0.0;
       }},
      {"simulate.steps", [](ExperimentConfig& c, double) { c.simulate.steps = 0; }},
      {"dataset.dim", [](ExperimentConfig& c, double) { c.dataset.dim = 2; }},
      {"field.kind", [](ExperimentConfig& c, double) { c.field.kind = "knn"; }},
      {"seeds", [](ExperimentConfig& c, double) { c.seeds.clear(); }},
      {"ablation.axis", [](ExperimentConfig& c, double) {
         c.ablation.axis = "depth";
         c.ablation.values = {1};
       }},
  };
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 5.0);
  for (int trial = 0; trial < 60; ++trial) {
    const Mut& m = muts[rng() % muts.size()];
    ExperimentConfig c;
    m.second(c, unit(rng));
    const std::string msg = error_of(c);
    INFO(m.first << " -> " << msg);
    CHECK(msg.rfind(m.first + ":", 0) == 0);
  }
}

TEST_CASE("invalid config is rejected before anything is written") {
  TempDir tmp("badcfg");
  ExperimentConfig c = tiny_spiral(tmp.path);
  c.bridge.sigma = -0.5;
  CHECK_THROWS_AS(cmd_run(c), ConfigError);
  CHECK(fs::is_empty(tmp.path));
}

TEST_CASE("a failing stage is named in the error") {
  TempDir tmp("stage");
  ExperimentConfig c = tiny_spiral(tmp.path);
  c.dataset.kind = "csv";
  c.dataset.path = (tmp.path / "missing.csv").string();
  c.field.kind = "knn";
  try {
    cmd_run(c);
    FAIL("missing data file accepted");
  } catch (const StageError& e) {
    CHECK(e.stage() == "prepare-data");
  }
}

TEST_CASE("output root priority is flag, then environment, then config") {
  EnvGuard guard;
  ExperimentConfig c;
  c.output_dir = "from_config";
  unsetenv(kOutputRootEnv);
  CHECK(output_root(c, {}) == fs::path("from_config"));
  setenv(kOutputRootEnv, "from_env", 1);
  CHECK(output_root(c, {}) == fs::path("from_env"));
  RunOptions o;
  o.out = "from_flag";
  CHECK(output_root(c, o) == fs::path("from_flag"));
}

TEST_CASE("run writes artifacts and replays bit for bit") {
  TempDir tmp("run");
  const ExperimentConfig c = tiny_spiral(tmp.path / "a");
  const RunOutputs first = cmd_run(c);

  for (const char* m : {"curly", "otcfm", "cfm"}) {
    bool cos = false, w2 = false;
    for (const auto& r : first.records)
      if (r.method == m) {
        cos |= r.metric == "cos_dist";
        w2 |= r.metric == "w2";
        CHECK(std::isfinite(r.value));
      }
    CHECK_MESSAGE(cos, m);
    CHECK_MESSAGE(w2, m);
  }
  CHECK(first.dir == tmp.path / "a" / "tiny");
  CHECK(fs::exists(first.dir / "interpolant_seed0.json"));
  for (const char* run : {"curly_seed0", "otcfm_seed0", "cfm_seed0"}) {
    CHECK(fs::exists(first.dir / run / "bridge.json"));
    CHECK(fs::exists(first.dir / run / "traj_m1.csv"));
    CHECK(fs::exists(first.dir / run / "traj_m1.svg"));
  }

  const json manifest = json::parse(slurp(first.manifest));
  CHECK(manifest["format"] == "curlyfm-manifest");
  CHECK(manifest["config_hash"] == config_hash(c));
  CHECK(manifest["metrics_csv"]["fnv1a"] == fnv1a_hex(slurp(first.metrics_csv)));
  for (const auto& run : manifest["runs"]) {
    const auto& b = run["checkpoints"]["bridge"];
    CHECK(b["fnv1a"] == fnv1a_hex(slurp(first.dir / b["path"].get<std::string>())));
    CHECK(run["wall_clock_seconds"].contains("train-bridge"));
  }

  const RunOutputs second = cmd_run(c);
  CHECK(slurp(second.metrics_csv) == slurp(first.metrics_csv));

  // The manifest alone reproduces the run.
  RunOptions o;
  o.out = tmp.path / "replay";
  const RunOutputs replay = cmd_run(load_config(first.manifest), o);
  CHECK(slurp(replay.metrics_csv) == slurp(first.metrics_csv));

  SUBCASE("a saved interpolant skips stage one with identical results") {
    RunOptions ck;
    ck.out = tmp.path / "ck";
    ck.method = Method::CurlyFM;
    ck.interpolant_checkpoint = first.dir / "interpolant_seed0.json";
    const RunOutputs r = cmd_run(c, ck);
    const json m = json::parse(slurp(r.manifest));
    CHECK(m["runs"][0]["interpolant"]["source"] == "checkpoint");
    std::vector<MetricRecord> expect;
    for (const auto& rec : first.records)
      if (rec.method == "curly") expect.push_back(rec);
    REQUIRE(r.records.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(r.records[i].metric == expect[i].metric);
      CHECK(r.records[i].value == expect[i].value);
    }
  }

  SUBCASE("evaluate and simulate reproduce the run from its checkpoint") {
    const fs::path bridge = first.dir / "otcfm_seed0" / "bridge.json";
    const auto records = cmd_evaluate(c, bridge);
    std::vector<MetricRecord> expect;
    for (const auto& rec : first.records)
      if (rec.method == "otcfm") expect.push_back(rec);
    REQUIRE(records.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(records[i].value == expect[i].value);

    const PreparedData prepared = prepare_data(c);
    SimulateOptions so;
    so.steps = c.simulate.steps;
    const Trajectory traj = cmd_simulate(bridge, prepared.eval[0], so);
    std::ifstream in(first.dir / "otcfm_seed0" / "traj_m1.csv");
    const Trajectory saved = read_trajectory_csv(in);
    REQUIRE(saved.states.size() == traj.states.size());
    CHECK(max_rel_err(traj.states.back(), saved.states.back()) < 1e-12);
  }

  SUBCASE("plot is deterministic and draws a quiver next to it") {
    const fs::path csv = first.dir / "curly_seed0" / "traj_m1.csv";
    const PreparedData prepared = prepare_data(c);
    cmd_plot(csv, tmp.path / "p1.svg", &prepared.truth_field, 0.3);
    cmd_plot(csv, tmp.path / "p2.svg", &prepared.truth_field, 0.3);
    CHECK(slurp(tmp.path / "p1.svg") == slurp(tmp.path / "p2.svg"));
    CHECK(slurp(tmp.path / "p1_field.svg") == slurp(tmp.path / "p2_field.svg"));
    CHECK(slurp(tmp.path / "p1.svg").find("<svg") != std::string::npos);
  }
}

TEST_CASE("quiver arrows of a rotation are tangent to circles about the origin") {
  std::ostringstream out;
  SvgOptions opt;
  opt.width = opt.height = 400;
  write_field_svg(out, ReferenceField::rotational(1.0), 0.0, {-1.0, 1.0, -1.0, 1.0}, 9, opt);
  const std::string svg = out.str();
  const double c = 200.0;  // origin in pixels for a symmetric frame
  std::size_t lines = 0, pos = 0;
  while ((pos = svg.find("<line ", pos)) != std::string::npos) {
    double v[4];
    std::size_t at = pos;
    for (int k = 0; k < 4; ++k) {
      at = svg.find("=\"", at) + 2;
      v[k] = std::stod(svg.substr(at));
    }
    const double rx = v[0] - c, ry = v[1] - c, dx = v[2] - v[0], dy = v[3] - v[1];
    const double len = std::hypot(dx, dy), r = std::hypot(rx, ry);
    if (len > 1e-9 && r > 1e-9) CHECK(std::abs(rx * dx + ry * dy) / (len * r) < 1e-4);
    // Counter-clockwise in data space turns clockwise on screen, where y points down.
    if (len > 1e-9 && r > 1e-9) CHECK(rx * dy - ry * dx < 0.0);
    ++lines;
    ++pos;
  }
  CHECK(lines == 81);
}

TEST_CASE("ablation over sigma labels every variant") {
  TempDir tmp("ablate");
  ExperimentConfig c = tiny_spiral(tmp.path);
  c.methods = {Method::OTCFM};
  c.ablation.axis = "sigma";
  c.ablation.values = {0.0, 0.5};
  const RunOutputs out = cmd_ablate(c);
  CHECK(out.dir == tmp.path / "tiny" / "ablate-sigma");
  std::size_t a = 0, b = 0;
  for (const auto& r : out.records) {
    a += r.method == "otcfm[sigma=0.0]";
    b += r.method == "otcfm[sigma=0.5]";
  }
  CHECK(a > 0);
  CHECK(a == b);
  CHECK(a + b == out.records.size());
  ExperimentConfig none = tiny_spiral(tmp.path);
  CHECK_THROWS_AS(cmd_ablate(none), StageError);
}

TEST_CASE("command line exit codes separate config and stage failures") {
  TempDir tmp("exit");
  std::ofstream(tmp.path / "bad.json") << R"({"bridge": {"sigma": -1}})";
  CHECK(run_cli("run --config \"" + (tmp.path / "bad.json").string() + "\"") == 2);

  json j = config_to_json(tiny_spiral(tmp.path));
  j["dataset"]["kind"] = "csv";
  j["dataset"]["path"] = (tmp.path / "nope.csv").string();
  j["field"]["kind"] = "knn";
  std::ofstream(tmp.path / "stage.json") << j.dump();
  CHECK(run_cli("run --config \"" + (tmp.path / "stage.json").string() + "\"") == 3);

  CHECK(run_cli("--help") == 0);
}

}  // TEST_SUITE
