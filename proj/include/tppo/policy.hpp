#pragma once

// Tiny autoregressive policy-and-value network. The state is the prompt
// followed by the generated prefix; only its trailing k_ctx tokens are seen.

#include <cstdint>
#include <span>
#include <vector>

#include "tppo/window_mlp.hpp"

namespace tppo {

class Rng;

struct PolicyParams {
  nn::MlpDims dims;
  nn::ParamLayout layout;
  std::vector<double> theta;

  static nn::ParamLayout layout_for(const nn::MlpDims& dims);
  /// Zero everywhere: uniform next-token distribution, zero values.
  static PolicyParams zeros(const nn::MlpDims& dims);
  /// Trunk drawn from `seed`; policy and value heads zero.
  static PolicyParams init(const nn::MlpDims& dims, std::uint64_t seed);
};

struct PolicyStep {
  nn::TrunkCache trunk;
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<double> log_probs;
  double value = 0.0;
};

/// Forward pass for the state seq[0, end).
PolicyStep policy_step(const PolicyParams& params, std::span<const int> seq, std::size_t end);

/// Accumulates parameter gradients given d(loss)/d(logits) and d(loss)/d(value).
void policy_step_backward(const PolicyParams& params, const PolicyStep& step,
                          std::span<const double> d_logits, double d_value,
                          std::span<double> grad);

std::vector<double> policy_logits(const PolicyParams& params, std::span<const int> state);

/// Samples until the end-of-sequence id (included) or max_len tokens.
/// temperature <= 0 selects greedy decoding.
std::vector<int> sample_response(const PolicyParams& params, std::span<const int> prompt,
                                 int max_len, double temperature, Rng& rng);
std::vector<int> sample_response(const PolicyParams& params, std::span<const int> prompt,
                                 int max_len, double temperature, std::uint64_t seed);

/// Entry t is log pi(actions[t] | prompt + actions[0, t)).
std::vector<double> sequence_log_probs(const PolicyParams& params, std::span<const int> prompt,
                                       std::span<const int> actions);

std::vector<double> value_estimates(const PolicyParams& params,
                                    const std::vector<std::vector<int>>& states);

struct PretrainExample {
  std::vector<int> prompt;
  std::vector<int> response;  // ends with the end-of-sequence id
};

struct PretrainConfig {
  int steps = 1500;
  int batch_size = 32;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
};

/// Mean per-token negative log-likelihood and its gradient.
double nll_and_grad(const PolicyParams& params, std::span<const PretrainExample> batch,
                    std::vector<double>* grad);

/// Maximum-likelihood fit (Adam) on prompt/response pairs; stands in for
/// supervised fine-tuning before RL.
PolicyParams pretrain_policy(const std::vector<PretrainExample>& data, const PretrainConfig& cfg,
                             const nn::MlpDims& dims = nn::MlpDims{});

}  // namespace tppo
