#pragma once

// Versioned JSON checkpoint envelope shared by reward-model and policy
// parameters: format tag, version, kind, config echo, dims, flat params.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tppo/window_mlp.hpp"

namespace tppo {

struct RMParams;
struct PolicyParams;

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  int version = kCheckpointVersion;
  std::map<std::string, std::string> config;
  nn::MlpDims dims;
  std::vector<double> params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_reward_model(const std::filesystem::path& path, const RMParams& params,
                       const std::map<std::string, std::string>& config);
RMParams load_reward_model(const std::filesystem::path& path);

void save_policy(const std::filesystem::path& path, const PolicyParams& params,
                 const std::map<std::string, std::string>& config);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace tppo
