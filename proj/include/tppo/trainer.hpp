#pragma once

// Token-level PPO. Rollouts are scored token by token by the reward model
// (category -> signed reward, scaled by the length penalty), a per-token KL
// penalty against the frozen starting policy is subtracted, and the policy
// is updated with the clipped surrogate. The sentence-level baseline puts a
// single reward on the final token instead.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tppo/gradcheck.hpp"
#include "tppo/policy.hpp"
#include "tppo/reward_model.hpp"

namespace tppo {

enum class AdvantageMode { monte_carlo, gae };
enum class RewardMode { token, sentence };

std::string_view to_string(AdvantageMode m);
std::string_view to_string(RewardMode m);
AdvantageMode advantage_mode_from_string(std::string_view s);
RewardMode reward_mode_from_string(std::string_view s);

struct TPPOConfig {
  double clip_eps = 0.2;
  double beta = 0.5;
  double gamma = 1.0;
  double lambda_gae = 0.95;
  AdvantageMode advantage_mode = AdvantageMode::monte_carlo;
  bool center_advantages = true;
  RewardMode reward_mode = RewardMode::token;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int epochs = 4;
  double learning_rate = 1e-3;
  int iterations = 200;
  int batch_episodes = 32;
  int max_len = 24;
  double temperature = 1.0;
  /// Scalar reward for predicted categories {0, 1, 2}.
  std::array<double, 3> category_reward{0.0, -1.0, 1.0};
  LengthPenaltyConfig length;
  /// Relevant-fraction threshold used to form the baseline's sentence label.
  double sentence_tau = 0.5;
  /// Mean per-episode KL (nats) above which training stops early.
  double kl_stop = 50.0;
  /// Iterations between policy snapshots handed to the iteration hook (0: none).
  int checkpoint_every = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RolloutEpisode {
  std::size_t task = 0;
  std::vector<int> prompt;
  std::vector<int> actions;
  std::vector<double> behavior_logp;
  std::vector<double> reference_logp;
  /// Reward-model reward after the length penalty (no KL term).
  std::vector<double> model_rewards;
  /// model_rewards minus the KL penalty; drives returns.
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> returns;
  std::vector<double> advantages;
  bool done = false;
};

struct Rollout {
  std::vector<RolloutEpisode> episodes;
  std::size_t token_count() const;
};

/// Fills returns (discounted, zero beyond the end) and advantages.
void compute_advantages(Rollout& rollout, const TPPOConfig& cfg);

/// exp(logp_new - logp_ref) with the exponent clamped to +-50; `clamped`
/// reports whether the clamp was hit.
double ppo_ratio(double logp_new, double logp_ref, bool* clamped = nullptr);

double clipped_objective(double ratio, double advantage, double eps);

struct PPOLoss {
  double total = 0.0;
  double policy = 0.0;  // -mean clipped objective
  double value = 0.0;   // mean squared value error
  double entropy = 0.0; // mean entropy
  std::vector<double> grad;
};

/// (1/N) sum_t [ -clip_obj_t + c_v (V_t - G_t)^2 - c_ent H_t ] over all tokens.
PPOLoss ppo_loss_and_grad(const PolicyParams& params, const Rollout& rollout,
                          const TPPOConfig& cfg, bool with_grad = true);

/// Finite-difference check of the PPO loss gradient on `coords`.
GradCheckReport check_gradients(const PolicyParams& params, const Rollout& rollout,
                                const TPPOConfig& cfg, std::span<const std::size_t> coords,
                                double step = 1e-5, double tolerance = 1e-4);

/// Per-token rewards of one response (actions after the prompt) scored by
/// the reward model under the configured reward mode, before any KL term.
std::vector<double> score_response(const RMParams& rm, std::span<const int> prompt,
                                   std::span<const int> actions, const TPPOConfig& cfg);

/// Returns 1 if the response for task `task` is judged relevant, else 0.
using RelevanceJudge = std::function<int(std::size_t task, const std::vector<int>& response)>;

struct IterationStats {
  int iteration = 0;
  double mean_reward = 0.0;  // mean per-episode sum of model_rewards
  double reward_std = 0.0;
  double mean_kl = 0.0;      // mean per-episode sum of sampled log-ratio to the start policy
  double mean_len = 0.0;
  double relevance = 0.0;    // judged relevance of the batch (0 without a judge)
  std::uint64_t seed = 0;
  RewardMode mode = RewardMode::token;
};

struct TPPOResult {
  PolicyParams policy;
  std::vector<IterationStats> curve;
  bool early_stopped = false;
  std::string diagnostic;
};

Rollout collect_rollout(const PolicyParams& policy, const PolicyParams& reference,
                        const RMParams& rm, const std::vector<std::vector<int>>& prompts,
                        std::span<const std::size_t> tasks, const TPPOConfig& cfg,
                        std::uint64_t stream_base);

/// Called with the iteration number and current policy every
/// cfg.checkpoint_every iterations.
using CheckpointHook = std::function<void(int iteration, const PolicyParams& policy)>;

TPPOResult train_tppo(const PolicyParams& init, const RMParams& rm,
                      const std::vector<std::vector<int>>& prompts, const TPPOConfig& cfg,
                      const RelevanceJudge& judge = {}, const CheckpointHook& on_checkpoint = {});

/// Mean over states of sum_a pi(a|s) log(pi(a|s)/ref(a|s)) along greedy
/// responses of `policy` to `prompts`.
double mean_state_kl(const PolicyParams& policy, const PolicyParams& reference,
                     const std::vector<std::vector<int>>& prompts, int max_len);

}  // namespace tppo
