#pragma once

// Flat key = value configuration covering every pipeline stage. The resolved
// map is echoed into each artifact so a run can be reproduced from it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "tppo/datagen.hpp"
#include "tppo/policy.hpp"
#include "tppo/reward_model.hpp"
#include "tppo/trainer.hpp"
#include "tppo/window_mlp.hpp"

namespace tppo {

/// The relevance task needs longer training than the module defaults.
inline RMTrainConfig pipeline_rm_defaults() {
  RMTrainConfig c;
  c.steps = 16000;
  c.batch_size = 32;
  c.eval_every = 1000;
  return c;
}

struct PipelineConfig {
  std::uint64_t seed = 0;
  CorpusConfig corpus;
  int chunk_len = 2;
  int vocab_size = 64;
  int train_episodes = 20000;
  int eval_episodes = 200;
  nn::MlpDims dims;
  RMTrainConfig rm = pipeline_rm_defaults();
  PretrainConfig sft;
  TPPOConfig ppo;

  /// Sets the run seed and every stage seed derived from it.
  void set_seed(std::uint64_t s);
  /// Throws InvalidInput for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_kv() const;
};

std::string format_double(double v);

/// Parses "key = value" lines; '#' starts a comment. A `seed` key is applied
/// first so explicit per-stage seeds in the same file win.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_kv(const std::map<std::string, std::string>& kv);

}  // namespace tppo
