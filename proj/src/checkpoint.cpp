#include "curlyfm/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "curlyfm/errors.hpp"

namespace curlyfm {

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json mlp_json(const Mlp& net) {
  return {{"widths", net.widths()}, {"activation", to_string(net.activation())}, {"parameters", net.flat_parameters()}};
}

Mlp mlp_from(const nlohmann::json& j) {
  Mlp net(j.at("widths").get<std::vector<std::size_t>>(), activation_from_string(j.at("activation").get<std::string>()));
  net.set_flat_parameters(j.at("parameters").get<std::vector<double>>());
  return net;
}

nlohmann::json parse_versioned(const std::string& text, const std::string& format) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != format) throw DataError("not a " + format + " checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  return j;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << text << '\n';
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = "curlyfm-mlp";
  j["version"] = kCheckpointVersion;
  j["widths"] = ckpt.net.widths();
  j["activation"] = to_string(ckpt.net.activation());
  j["seed"] = ckpt.seed;
  j["parameters"] = ckpt.net.flat_parameters();
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const nlohmann::json j = parse_versioned(text, "curlyfm-mlp");
  try {
    return {mlp_from(j), j.at("seed").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_file(path)); }

std::string bridge_to_json(const BridgeCheckpoint& ckpt) {
  nlohmann::json j;
  j["format"] = "curlyfm-bridge";
  j["version"] = kCheckpointVersion;
  j["method"] = to_string(ckpt.method);
  j["sigma"] = ckpt.model.sigma;
  j["seed"] = ckpt.seed;
  j["times"] = ckpt.times;
  j["drift"] = mlp_json(ckpt.model.drift);
  j["score"] = ckpt.model.score ? mlp_json(*ckpt.model.score) : nlohmann::json(nullptr);
  return j.dump();
}

BridgeCheckpoint bridge_from_json(const std::string& text) {
  const nlohmann::json j = parse_versioned(text, "curlyfm-bridge");
  BridgeCheckpoint ckpt;
  try {
    ckpt.method = method_from_string(j.at("method").get<std::string>());
    ckpt.model.sigma = j.at("sigma").get<double>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.times = j.at("times").get<std::vector<double>>();
    ckpt.model.drift = mlp_from(j.at("drift"));
    if (!j.at("score").is_null()) ckpt.model.score = mlp_from(j.at("score"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bridge checkpoint: ") + e.what());
  }
  ckpt.model.validate();
  ckpt.model.trained = true;
  return ckpt;
}

void save_bridge(const std::filesystem::path& path, const BridgeCheckpoint& ckpt) {
  write_file(path, bridge_to_json(ckpt));
}

BridgeCheckpoint load_bridge(const std::filesystem::path& path) { return bridge_from_json(read_file(path)); }

}  // namespace curlyfm
