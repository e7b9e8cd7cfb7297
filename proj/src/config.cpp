#include "curlyfm/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "curlyfm/errors.hpp"

namespace curlyfm {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
  }
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    const json& v = raw(key);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_unsigned()) throw ConfigError(name(key) + ": expected a nonnegative integer");
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>> || std::is_same_v<T, std::vector<std::uint64_t>>) {
      if (!v.is_array()) throw ConfigError(name(key) + ": expected an array of nonnegative integers");
      for (const auto& e : v)
        if (!e.is_number_unsigned()) throw ConfigError(name(key) + ": expected an array of nonnegative integers");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(name(key) + ": expected a number");
    }
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name(key) + ": wrong type");
    }
  }

  template <class F>
  void get_parsed(const std::string& key, F parse) {
    if (!j_.contains(key)) return;
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(name(key) + ": expected a string");
    try {
      parse(v.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(name(key) + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError(name(item.key()) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError(field + ": " + why);
}

void check_adam(const AdamConfig& a, const std::string& p) {
  require(a.lr > 0.0 && std::isfinite(a.lr), p + ".lr", "must be positive");
  require(a.beta1 >= 0.0 && a.beta1 < 1.0, p + ".beta1", "must lie in [0, 1)");
  require(a.beta2 >= 0.0 && a.beta2 < 1.0, p + ".beta2", "must lie in [0, 1)");
  require(a.eps > 0.0, p + ".eps", "must be positive");
}

void check_hidden(const std::vector<std::size_t>& h, const std::string& p) {
  require(!h.empty(), p + ".hidden", "needs at least one hidden layer");
  for (std::size_t w : h) require(w > 0, p + ".hidden", "widths must be positive");
}

void read_adam(Section& s, AdamConfig& a) {
  s.get("lr", a.lr);
  s.get("beta1", a.beta1);
  s.get("beta2", a.beta2);
  s.get("eps", a.eps);
}

json adam_json(const AdamConfig& a) { return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}}; }

std::string weighting_name(KernelWeighting w) {
  return w == KernelWeighting::InverseDistance ? "inverse-distance" : "literal";
}

std::string sampling_name(TimeSampling s) { return s == TimeSampling::Uniform ? "uniform" : "equispaced"; }

TimeSampling sampling_from(const std::string& s) {
  if (s == "uniform") return TimeSampling::Uniform;
  if (s == "equispaced") return TimeSampling::Equispaced;
  throw ConfigError("unknown time sampling '" + s + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  require(!name.empty() && name.find('/') == std::string::npos, "name", "must be a nonempty plain name");
  const DatasetSpec& d = dataset;
  const std::set<std::string> kinds{"gaussian_spiral", "circles", "rollout", "csv"};
  require(kinds.count(d.kind) > 0, "dataset.kind", "must be one of gaussian_spiral, circles, rollout, csv");
  require(d.n >= 1, "dataset.n", "must be at least 1");
  require(d.eval_n >= 2, "dataset.eval_n", "must be at least 2");
  require(d.spread > 0.0, "dataset.spread", "must be positive");
  if (d.kind == "gaussian_spiral") require(d.dim >= 3, "dataset.dim", "the spiral benchmark needs d >= 3");
  if (d.kind == "circles") {
    require(d.dim == 2, "dataset.dim", "circles are two-dimensional");
    require(d.source_radius > 0.0, "dataset.source_radius", "must be positive");
    require(d.target_radius > 0.0, "dataset.target_radius", "must be positive");
    require(d.skew >= 0.0, "dataset.skew", "must be nonnegative");
    require(d.noise >= 0.0, "dataset.noise", "must be nonnegative");
  }
  if (d.kind == "rollout") {
    require(d.dim == 2, "dataset.dim", "the rotational rollout is two-dimensional");
    require(d.times.size() >= 2, "dataset.times", "needs at least two marginal times");
    for (std::size_t i = 1; i < d.times.size(); ++i)
      require(d.times[i] > d.times[i - 1], "dataset.times", "must increase strictly");
    require(d.solver_dt > 0.0, "dataset.solver_dt", "must be positive");
    require(d.radius >= 0.0, "dataset.radius", "must be nonnegative");
    require(d.center.empty() || d.center.size() == d.dim, "dataset.center", "must have dim entries");
    require(d.fd_step >= 0.0, "dataset.fd_step", "must be nonnegative");
  }
  if (d.kind == "rollout" || d.kind == "csv")
    for (std::size_t h : d.held_out)
      require(h > 0 && (d.kind == "csv" || h + 1 < d.times.size()), "dataset.held_out", "indices must be interior");
  if (d.kind == "csv") require(!d.path.empty(), "dataset.path", "is required for csv datasets");

  const std::set<std::string> fields{"dataset", "knn", "zero"};
  require(fields.count(field.kind) > 0, "field.kind", "must be one of dataset, knn, zero");
  if (field.kind == "dataset") require(d.kind != "csv", "field.kind", "csv data has no analytic field; use knn");
  if (field.kind == "knn") require(d.kind == "rollout" || d.kind == "csv", "field.kind", "knn needs observed velocities");
  require(field.k >= 1, "field.k", "must be at least 1");
  require(field.filter_noise >= 0.0, "field.filter_noise", "must be nonnegative");
  if (field.filter_gamma >= 0.0) require(field.kind == "knn", "field.filter_gamma", "filtering needs a knn field");
  require(field.corrupt_beta >= 0.0 && field.corrupt_beta <= 1.0, "field.corrupt_beta", "must lie in [0, 1]");

  check_hidden(interpolant.hidden, "interpolant");
  require(is_smooth(interpolant.activation), "interpolant.activation", "needs a smooth activation (silu or tanh)");
  require(interpolant.epochs >= 1, "interpolant.epochs", "must be at least 1");
  require(interpolant.batch_size >= 1, "interpolant.batch_size", "must be at least 1");
  require(interpolant.eval_batch >= 1, "interpolant.eval_batch", "must be at least 1");
  check_adam(interpolant.adam, "interpolant");

  require(bridge.sigma >= 0.0 && std::isfinite(bridge.sigma), "bridge.sigma", "must be >= 0");
  check_hidden(bridge.hidden, "bridge");
  require(bridge.epochs >= 1, "bridge.epochs", "must be at least 1");
  require(bridge.batch_size >= 1, "bridge.batch_size", "must be at least 1");
  require(bridge.method.cost_samples >= 1, "bridge.cost_samples", "must be at least 1");
  require(bridge.method.sinkhorn_reg >= 0.0, "bridge.sinkhorn_reg", "must be nonnegative");
  check_adam(bridge.adam, "bridge");

  require(!methods.empty(), "methods", "needs at least one method");
  require(!seeds.empty(), "seeds", "needs at least one seed");
  require(simulate.steps >= 1, "simulate.steps", "must be at least 1");
  if (simulate.sde) require(bridge.sigma > 0.0, "simulate.sde", "SDE inference needs bridge.sigma > 0");
  require(metrics.precision_k >= 1, "metrics.precision_k", "must be at least 1");
  require(!output_dir.empty(), "output_dir", "must be nonempty");

  if (!ablation.axis.empty()) {
    const std::set<std::string> axes{"sigma", "beta-noise", "coupling", "n-times", "filter-gamma"};
    require(axes.count(ablation.axis) > 0, "ablation.axis",
            "must be one of sigma, beta-noise, coupling, n-times, filter-gamma");
    require(!ablation.values.empty(), "ablation.values", "needs at least one value");
    for (const auto& v : ablation.values) {
      if (ablation.axis == "coupling") {
        require(v.is_string() && (v == "with" || v == "independent" || v == "exact" || v == "sinkhorn"),
                "ablation.values", "coupling values are with, independent, exact or sinkhorn");
      } else if (ablation.axis == "n-times") {
        require(v.is_number_unsigned() && v.get<std::size_t>() >= 1, "ablation.values", "n-times values are integers >= 1");
      } else {
        require(v.is_number(), "ablation.values", "must be numbers");
        const double x = v.get<double>();
        if (ablation.axis == "sigma") require(x >= 0.0, "ablation.values", "sigma values must be >= 0");
        if (ablation.axis == "beta-noise") require(x >= 0.0 && x <= 1.0, "ablation.values", "beta values lie in [0, 1]");
        if (ablation.axis == "filter-gamma")
          require(field.kind == "knn", "ablation.values", "filter-gamma needs a knn field");
      }
    }
  }
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  {
    Section s(j, "");
    s.get("name", c.name);
    s.get("output_dir", c.output_dir);
    s.get("seeds", c.seeds);
    if (s.has("methods")) {
      const json& m = s.raw("methods");
      if (!m.is_array()) throw ConfigError("methods: expected an array");
      c.methods.clear();
      for (const auto& e : m) {
        if (!e.is_string()) throw ConfigError("methods: expected method names");
        try {
          c.methods.push_back(method_from_string(e.get<std::string>()));
        } catch (const ConfigError& err) {
          throw ConfigError(std::string("methods: ") + err.what());
        }
      }
    }
    if (s.has("dataset")) {
      Section d(s.raw("dataset"), "dataset");
      DatasetSpec& ds = c.dataset;
      d.get("kind", ds.kind);
      d.get("dim", ds.dim);
      d.get("n", ds.n);
      d.get("eval_n", ds.eval_n);
      d.get("seed", ds.seed);
      d.get("spread", ds.spread);
      d.get("source_radius", ds.source_radius);
      d.get("target_radius", ds.target_radius);
      d.get("skew", ds.skew);
      d.get("noise", ds.noise);
      d.get("omega", ds.omega);
      d.get("times", ds.times);
      d.get("held_out", ds.held_out);
      d.get("solver_dt", ds.solver_dt);
      d.get("center", ds.center);
      d.get("radius", ds.radius);
      d.get("fd_step", ds.fd_step);
      d.get("path", ds.path);
      if (ds.kind == "circles" && !d.has("dim")) ds.dim = 2;
      d.finish();
    }
    if (s.has("field")) {
      Section f(s.raw("field"), "field");
      f.get("kind", c.field.kind);
      f.get("k", c.field.k);
      f.get_parsed("weighting", [&](const std::string& v) { c.field.weighting = weighting_from_string(v); });
      f.get("filter_gamma", c.field.filter_gamma);
      f.get("filter_noise", c.field.filter_noise);
      f.get("corrupt_beta", c.field.corrupt_beta);
      f.finish();
    }
    if (s.has("interpolant")) {
      Section p(s.raw("interpolant"), "interpolant");
      auto& ic = c.interpolant;
      p.get("hidden", ic.hidden);
      p.get_parsed("activation", [&](const std::string& v) { ic.activation = activation_from_string(v); });
      p.get("epochs", ic.epochs);
      p.get("batch_size", ic.batch_size);
      p.get("zero_init_output", ic.zero_init_output);
      p.get("eval_batch", ic.eval_batch);
      read_adam(p, ic.adam);
      p.finish();
    }
    if (s.has("bridge")) {
      Section b(s.raw("bridge"), "bridge");
      auto& bc = c.bridge;
      b.get("sigma", bc.sigma);
      b.get("hidden", bc.hidden);
      b.get_parsed("activation", [&](const std::string& v) { bc.activation = activation_from_string(v); });
      b.get("epochs", bc.epochs);
      b.get("batch_size", bc.batch_size);
      b.get_parsed("coupling", [&](const std::string& v) { bc.method.coupling = coupling_mode_from_string(v); });
      b.get("cost_samples", bc.method.cost_samples);
      b.get_parsed("cost_sampling", [&](const std::string& v) { bc.method.cost_sampling = sampling_from(v); });
      b.get("sinkhorn_reg", bc.method.sinkhorn_reg);
      read_adam(b, bc.adam);
      b.finish();
    }
    if (s.has("simulate")) {
      Section m(s.raw("simulate"), "simulate");
      m.get("steps", c.simulate.steps);
      m.get("sde", c.simulate.sde);
      m.get_parsed("score_composition",
                   [&](const std::string& v) { c.simulate.composition = score_composition_from_string(v); });
      m.finish();
    }
    if (s.has("metrics")) {
      Section m(s.raw("metrics"), "metrics");
      m.get("w2_max_points", c.metrics.w2_max_points);
      m.get("emd", c.metrics.emd);
      m.get("mmd", c.metrics.mmd);
      m.get("l2_squared", c.metrics.l2_squared);
      m.get("precision_k", c.metrics.precision_k);
      m.finish();
    }
    if (s.has("ablation")) {
      Section a(s.raw("ablation"), "ablation");
      a.get("axis", c.ablation.axis);
      if (a.has("values")) {
        const json& v = a.raw("values");
        if (!v.is_array()) throw ConfigError("ablation.values: expected an array");
        c.ablation.values.assign(v.begin(), v.end());
      }
      a.finish();
    }
    s.finish();
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  const DatasetSpec& d = c.dataset;
  const auto& ic = c.interpolant;
  const auto& bc = c.bridge;
  json interp = {{"hidden", ic.hidden},       {"activation", to_string(ic.activation)},
                 {"epochs", ic.epochs},       {"batch_size", ic.batch_size},
                 {"zero_init_output", ic.zero_init_output}, {"eval_batch", ic.eval_batch}};
  interp.update(adam_json(ic.adam));
  json bridge = {{"sigma", bc.sigma},
                 {"hidden", bc.hidden},
                 {"activation", to_string(bc.activation)},
                 {"epochs", bc.epochs},
                 {"batch_size", bc.batch_size},
                 {"coupling", to_string(bc.method.coupling)},
                 {"cost_samples", bc.method.cost_samples},
                 {"cost_sampling", sampling_name(bc.method.cost_sampling)},
                 {"sinkhorn_reg", bc.method.sinkhorn_reg}};
  bridge.update(adam_json(bc.adam));
  json out = {
      {"name", c.name},
      {"output_dir", c.output_dir},
      {"seeds", c.seeds},
      {"methods", methods},
      {"dataset",
       {{"kind", d.kind},
        {"dim", d.dim},
        {"n", d.n},
        {"eval_n", d.eval_n},
        {"seed", d.seed},
        {"spread", d.spread},
        {"source_radius", d.source_radius},
        {"target_radius", d.target_radius},
        {"skew", d.skew},
        {"noise", d.noise},
        {"omega", d.omega},
        {"times", d.times},
        {"held_out", d.held_out},
        {"solver_dt", d.solver_dt},
        {"center", d.center},
        {"radius", d.radius},
        {"fd_step", d.fd_step},
        {"path", d.path}}},
      {"field",
       {{"kind", c.field.kind},
        {"k", c.field.k},
        {"weighting", weighting_name(c.field.weighting)},
        {"filter_gamma", c.field.filter_gamma},
        {"filter_noise", c.field.filter_noise},
        {"corrupt_beta", c.field.corrupt_beta}}},
      {"interpolant", interp},
      {"bridge", bridge},
      {"simulate",
       {{"steps", c.simulate.steps}, {"sde", c.simulate.sde}, {"score_composition", to_string(c.simulate.composition)}}},
      {"metrics",
       {{"w2_max_points", c.metrics.w2_max_points},
        {"emd", c.metrics.emd},
        {"mmd", c.metrics.mmd},
        {"l2_squared", c.metrics.l2_squared},
        {"precision_k", c.metrics.precision_k}}},
      {"ablation", {{"axis", c.ablation.axis}, {"values", c.ablation.values}}}};
  return out;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": not valid JSON: " + e.what());
  }
  if (j.is_object() && j.value("format", "") == "curlyfm-manifest") {
    if (!j.contains("config")) throw ConfigError(path.string() + ": manifest has no embedded config");
    return config_from_json(j.at("config"));
  }
  return config_from_json(j);
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& config) { return fnv1a_hex(config_to_json(config).dump()); }

}  // namespace curlyfm
