#include "tppo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tppo/optim.hpp"
#include "tppo/random.hpp"

namespace tppo {

std::string_view to_string(AdvantageMode m) {
  return m == AdvantageMode::gae ? "gae" : "monte_carlo";
}

std::string_view to_string(RewardMode m) { return m == RewardMode::sentence ? "sentence" : "token"; }

AdvantageMode advantage_mode_from_string(std::string_view s) {
  if (s == "monte_carlo") return AdvantageMode::monte_carlo;
  if (s == "gae") return AdvantageMode::gae;
  throw InvalidInput("unknown advantage mode '" + std::string(s) + "'");
}

RewardMode reward_mode_from_string(std::string_view s) {
  if (s == "token") return RewardMode::token;
  if (s == "sentence") return RewardMode::sentence;
  throw InvalidInput("unknown reward mode '" + std::string(s) + "'");
}

void TPPOConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw InvalidInput("clip epsilon must be in (0,1)");
  if (!(beta > 0.0)) throw InvalidInput("beta must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidInput("gamma must be in (0,1]");
  if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0)) throw InvalidInput("lambda_gae must be in [0,1]");
  if (epochs < 1 || iterations < 0 || batch_episodes < 1 || max_len < 1)
    throw InvalidInput("PPO loop sizes must be positive");
  if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
  if (!(length.alpha > 0.0) || length.suggested_length < 1)
    throw InvalidInput("length penalty needs alpha > 0 and sl >= 1");
  if (checkpoint_every < 0) throw InvalidInput("checkpoint_every must be >= 0");
}

std::size_t Rollout::token_count() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.actions.size();
  return n;
}

void compute_advantages(Rollout& rollout, const TPPOConfig& cfg) {
  std::size_t n = 0;
  double sum = 0.0;
  for (auto& ep : rollout.episodes) {
    const std::size_t len = ep.rewards.size();
    ep.returns.assign(len, 0.0);
    ep.advantages.assign(len, 0.0);
    double g = 0.0;
    for (std::size_t t = len; t-- > 0;) {
      g = ep.rewards[t] + cfg.gamma * g;
      ep.returns[t] = g;
    }
    if (cfg.advantage_mode == AdvantageMode::monte_carlo) {
      for (std::size_t t = 0; t < len; ++t) ep.advantages[t] = ep.returns[t] - ep.values[t];
    } else {
      double gae = 0.0;
      for (std::size_t t = len; t-- > 0;) {
        const double next_v = t + 1 < len ? ep.values[t + 1] : 0.0;
        const double delta = ep.rewards[t] + cfg.gamma * next_v - ep.values[t];
        gae = delta + cfg.gamma * cfg.lambda_gae * gae;
        ep.advantages[t] = gae;
      }
    }
    for (double a : ep.advantages) sum += a;
    n += len;
  }
  if (cfg.center_advantages && n > 0) {
    const double mean = sum / static_cast<double>(n);
    for (auto& ep : rollout.episodes)
      for (auto& a : ep.advantages) a -= mean;
  }
}

double ppo_ratio(double logp_new, double logp_ref, bool* clamped) {
  constexpr double kMaxExponent = 50.0;
  const double d = logp_new - logp_ref;
  const double c = std::clamp(d, -kMaxExponent, kMaxExponent);
  if (clamped) *clamped = c != d;
  return std::exp(c);
}

double clipped_objective(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

PPOLoss ppo_loss_and_grad(const PolicyParams& params, const Rollout& rollout,
                          const TPPOConfig& cfg, bool with_grad) {
  PPOLoss res;
  if (with_grad) res.grad.assign(params.theta.size(), 0.0);
  const std::size_t n = rollout.token_count();
  if (n == 0) return res;
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<double> d_logits(static_cast<std::size_t>(params.dims.vocab));

  for (const auto& ep : rollout.episodes) {
    std::vector<int> seq = ep.prompt;
    seq.insert(seq.end(), ep.actions.begin(), ep.actions.end());
    for (std::size_t t = 0; t < ep.actions.size(); ++t) {
      const PolicyStep s = policy_step(params, seq, ep.prompt.size() + t);
      const auto a = static_cast<std::size_t>(ep.actions[t]);
      bool clamped = false;
      const double r = ppo_ratio(s.log_probs[a], ep.behavior_logp[t], &clamped);
      const double adv = ep.advantages[t];
      const double obj = clipped_objective(r, adv, cfg.clip_eps);
      double entropy = 0.0;
      for (std::size_t j = 0; j < s.probs.size(); ++j) entropy -= s.probs[j] * s.log_probs[j];
      const double v_err = s.value - ep.returns[t];

      res.policy -= obj * inv;
      res.value += v_err * v_err * inv;
      res.entropy += entropy * inv;
      if (!with_grad) continue;

      const double unclipped = r * adv;
      const double d_obj_d_logp =
          (!clamped && unclipped <= std::clamp(r, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv)
              ? unclipped
              : 0.0;
      // loss = -obj/N - c_ent H/N + c_v v_err^2/N
      for (std::size_t j = 0; j < d_logits.size(); ++j) {
        const double d_logp = (j == a ? 1.0 : 0.0) - s.probs[j];
        const double d_entropy = -s.probs[j] * (s.log_probs[j] + entropy);
        d_logits[j] = inv * (-d_obj_d_logp * d_logp - cfg.entropy_coef * d_entropy);
      }
      const double d_value = inv * cfg.value_coef * 2.0 * v_err;
      policy_step_backward(params, s, d_logits, d_value, res.grad);
    }
  }
  res.total = res.policy + cfg.value_coef * res.value - cfg.entropy_coef * res.entropy;
  return res;
}

GradCheckReport check_gradients(const PolicyParams& params, const Rollout& rollout,
                                const TPPOConfig& cfg, std::span<const std::size_t> coords,
                                double step, double tolerance) {
  const PPOLoss analytic = ppo_loss_and_grad(params, rollout, cfg, true);
  PolicyParams probe = params;
  auto loss = [&](std::span<const double> theta) {
    std::copy(theta.begin(), theta.end(), probe.theta.begin());
    return ppo_loss_and_grad(probe, rollout, cfg, false).total;
  };
  return check_gradient(loss, params.theta, analytic.grad, params.layout, coords, step, tolerance);
}

std::vector<double> score_response(const RMParams& rm, std::span<const int> prompt,
                                   std::span<const int> actions, const TPPOConfig& cfg) {
  std::vector<double> rewards(actions.size(), 0.0);
  if (actions.empty()) return rewards;
  TokenRow row;
  row.ids.assign(prompt.begin(), prompt.end());
  row.response_begin = row.ids.size();
  row.ids.insert(row.ids.end(), actions.begin(), actions.end());
  row.categories.assign(row.ids.size(), RewardCategory::masked);
  const TokenBatch batch = make_token_batch({row});
  const auto cats = predict_token_rewards(rm, batch);

  if (cfg.reward_mode == RewardMode::token) {
    for (std::size_t t = 0; t < actions.size(); ++t) {
      if (actions[t] < kFirstWordId) continue;
      const auto c = static_cast<std::size_t>(cats[row.response_begin + t]);
      rewards[t] = cfg.category_reward[c] * lwp(static_cast<int>(t) + 1, cfg.length);
    }
  } else {
    std::size_t content = 0, relevant = 0;
    for (std::size_t t = 0; t < actions.size(); ++t) {
      const auto c = cats[row.response_begin + t];
      if (actions[t] < kFirstWordId || c == RewardCategory::masked) continue;
      ++content;
      relevant += c == RewardCategory::relevant;
    }
    const bool good = content > 0 && static_cast<double>(relevant) >=
                                         cfg.sentence_tau * static_cast<double>(content);
    rewards.back() = cfg.category_reward[good ? 2 : 1];
  }
  return rewards;
}

Rollout collect_rollout(const PolicyParams& policy, const PolicyParams& reference,
                        const RMParams& rm, const std::vector<std::vector<int>>& prompts,
                        std::span<const std::size_t> tasks, const TPPOConfig& cfg,
                        std::uint64_t stream_base) {
  Rollout out;
  out.episodes.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    RolloutEpisode ep;
    ep.task = tasks[i];
    ep.prompt = prompts[ep.task];
    Rng rng = Rng::stream(cfg.seed, stream_base + i);
    ep.actions = sample_response(policy, ep.prompt, cfg.max_len, cfg.temperature, rng);
    ep.done = !ep.actions.empty() && ep.actions.back() == kEosId;

    std::vector<int> seq = ep.prompt;
    seq.insert(seq.end(), ep.actions.begin(), ep.actions.end());
    for (std::size_t t = 0; t < ep.actions.size(); ++t) {
      const PolicyStep s = policy_step(policy, seq, ep.prompt.size() + t);
      const auto a = static_cast<std::size_t>(ep.actions[t]);
      ep.behavior_logp.push_back(s.log_probs[a]);
      ep.values.push_back(s.value);
    }
    ep.reference_logp = sequence_log_probs(reference, ep.prompt, ep.actions);
    ep.model_rewards = score_response(rm, ep.prompt, ep.actions, cfg);
    ep.rewards.resize(ep.actions.size());
    for (std::size_t t = 0; t < ep.actions.size(); ++t)
      ep.rewards[t] =
          ep.model_rewards[t] - cfg.beta * (ep.behavior_logp[t] - ep.reference_logp[t]);
    out.episodes.push_back(std::move(ep));
  }
  compute_advantages(out, cfg);
  return out;
}

namespace {

constexpr std::uint64_t kTaskStream = 0x7461736bULL;

}  // namespace

TPPOResult train_tppo(const PolicyParams& init, const RMParams& rm,
                      const std::vector<std::vector<int>>& prompts, const TPPOConfig& cfg,
                      const RelevanceJudge& judge, const CheckpointHook& on_checkpoint) {
  cfg.validate();
  if (prompts.empty()) throw InvalidInput("PPO needs at least one prompt");
  TPPOResult result{init, {}, false, {}};
  PolicyParams& policy = result.policy;
  const PolicyParams reference = init;
  Adam adam(policy.theta.size(), cfg.learning_rate);
  const auto batch = static_cast<std::size_t>(cfg.batch_episodes);

  for (int it = 1; it <= cfg.iterations; ++it) {
    Rng task_rng = Rng::stream(cfg.seed ^ kTaskStream, static_cast<std::uint64_t>(it));
    std::vector<std::size_t> tasks(batch);
    for (auto& t : tasks)
      t = static_cast<std::size_t>(task_rng.next_u64() % prompts.size());
    const Rollout rollout =
        collect_rollout(policy, reference, rm, prompts, tasks, cfg,
                        static_cast<std::uint64_t>(it) * batch);

    IterationStats st;
    st.iteration = it;
    st.seed = cfg.seed;
    st.mode = cfg.reward_mode;
    std::vector<double> ep_reward;
    double kl = 0.0, len = 0.0, rel = 0.0;
    for (const auto& ep : rollout.episodes) {
      ep_reward.push_back(std::accumulate(ep.model_rewards.begin(), ep.model_rewards.end(), 0.0));
      for (std::size_t t = 0; t < ep.actions.size(); ++t)
        kl += ep.behavior_logp[t] - ep.reference_logp[t];
      len += static_cast<double>(ep.actions.size());
      if (judge) rel += judge(ep.task, ep.actions);
    }
    const double nb = static_cast<double>(rollout.episodes.size());
    st.mean_reward = std::accumulate(ep_reward.begin(), ep_reward.end(), 0.0) / nb;
    double var = 0.0;
    for (double r : ep_reward) var += (r - st.mean_reward) * (r - st.mean_reward);
    st.reward_std = std::sqrt(var / nb);
    st.mean_kl = kl / nb;
    st.mean_len = len / nb;
    st.relevance = rel / nb;
    result.curve.push_back(st);

    if (!std::isfinite(st.mean_kl) || st.mean_kl > cfg.kl_stop) {
      result.early_stopped = true;
      result.diagnostic = "KL to the starting policy reached " + std::to_string(st.mean_kl) +
                          " at iteration " + std::to_string(it) + " (limit " +
                          std::to_string(cfg.kl_stop) + ")";
      break;
    }

    for (int e = 0; e < cfg.epochs; ++e) {
      const PPOLoss loss = ppo_loss_and_grad(policy, rollout, cfg, true);
      if (!std::isfinite(loss.total) || !nn::all_finite(loss.grad)) {
        result.early_stopped = true;
        result.diagnostic = "non-finite PPO loss at iteration " + std::to_string(it);
        return result;
      }
      adam.step(policy.theta, loss.grad);
    }
    if (on_checkpoint && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0)
      on_checkpoint(it, policy);
  }
  return result;
}

double mean_state_kl(const PolicyParams& policy, const PolicyParams& reference,
                     const std::vector<std::vector<int>>& prompts, int max_len) {
  double total = 0.0;
  std::size_t states = 0;
  for (const auto& prompt : prompts) {
    const auto actions = sample_response(policy, prompt, max_len, 0.0, std::uint64_t{0});
    std::vector<int> seq = prompt;
    seq.insert(seq.end(), actions.begin(), actions.end());
    for (std::size_t t = 0; t < actions.size(); ++t) {
      const auto p = policy_step(policy, seq, prompt.size() + t);
      const auto q = policy_step(reference, seq, prompt.size() + t);
      for (std::size_t j = 0; j < p.probs.size(); ++j)
        total += p.probs[j] * (p.log_probs[j] - q.log_probs[j]);
      ++states;
    }
  }
  return states == 0 ? 0.0 : total / static_cast<double>(states);
}

}  // namespace tppo
