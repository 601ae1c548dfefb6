#include "tppo/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "tppo/policy.hpp"
#include "tppo/reward_model.hpp"

namespace tppo {

using nlohmann::json;

namespace {
constexpr const char* kFormatTag = "tppo-checkpoint";
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json j;
  j["format"] = kFormatTag;
  j["version"] = ckpt.version;
  j["kind"] = ckpt.kind;
  j["config"] = ckpt.config;
  j["dims"] = {{"vocab", ckpt.dims.vocab},
               {"k_ctx", ckpt.dims.k_ctx},
               {"d_embed", ckpt.dims.d_embed},
               {"hidden", ckpt.dims.hidden}};
  j["params"] = ckpt.params;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormatTag)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  Checkpoint c;
  c.version = j.at("version").get<int>();
  if (c.version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(c.version));
  c.kind = j.at("kind").get<std::string>();
  c.config = j.at("config").get<std::map<std::string, std::string>>();
  const auto& d = j.at("dims");
  c.dims = {d.at("vocab").get<int>(), d.at("k_ctx").get<int>(), d.at("d_embed").get<int>(),
            d.at("hidden").get<int>()};
  c.params = j.at("params").get<std::vector<double>>();
  return c;
}

namespace {

Checkpoint expect_kind(const std::filesystem::path& path, const std::string& kind,
                       std::size_t (*expected_size)(const nn::MlpDims&)) {
  Checkpoint c = load_checkpoint(path);
  if (c.kind != kind)
    throw std::runtime_error(path.string() + " holds a '" + c.kind + "' checkpoint, expected '" +
                             kind + "'");
  if (c.params.size() != expected_size(c.dims))
    throw std::runtime_error("checkpoint parameter count does not match its dims: " +
                             path.string());
  return c;
}

}  // namespace

void save_reward_model(const std::filesystem::path& path, const RMParams& params,
                       const std::map<std::string, std::string>& config) {
  save_checkpoint(path, {"reward_model", kCheckpointVersion, config, params.dims, params.theta});
}

RMParams load_reward_model(const std::filesystem::path& path) {
  Checkpoint c = expect_kind(path, "reward_model", [](const nn::MlpDims& d) {
    return RMParams::layout_for(d).total();
  });
  RMParams p = RMParams::zeros(c.dims);
  p.theta = std::move(c.params);
  return p;
}

void save_policy(const std::filesystem::path& path, const PolicyParams& params,
                 const std::map<std::string, std::string>& config) {
  save_checkpoint(path, {"policy", kCheckpointVersion, config, params.dims, params.theta});
}

PolicyParams load_policy(const std::filesystem::path& path) {
  Checkpoint c = expect_kind(path, "policy", [](const nn::MlpDims& d) {
    return PolicyParams::layout_for(d).total();
  });
  PolicyParams p = PolicyParams::zeros(c.dims);
  p.theta = std::move(c.params);
  return p;
}

}  // namespace tppo
