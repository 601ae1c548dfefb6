#include "tppo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tppo/datagen.hpp"
#include "tppo/optim.hpp"
#include "tppo/random.hpp"

namespace tppo {

nn::ParamLayout PolicyParams::layout_for(const nn::MlpDims& dims) {
  nn::ParamLayout layout;
  nn::add_trunk(layout, dims);
  const auto h = static_cast<std::size_t>(dims.hidden);
  layout.add("policy_w", static_cast<std::size_t>(dims.vocab), h);
  layout.add("policy_b", static_cast<std::size_t>(dims.vocab), 1);
  layout.add("value_w", 1, h);
  layout.add("value_b", 1, 1);
  return layout;
}

PolicyParams PolicyParams::zeros(const nn::MlpDims& dims) {
  PolicyParams p{dims, layout_for(dims), {}};
  p.theta.assign(p.layout.total(), 0.0);
  return p;
}

PolicyParams PolicyParams::init(const nn::MlpDims& dims, std::uint64_t seed) {
  PolicyParams p = zeros(dims);
  Rng rng(seed);
  nn::init_trunk(p.theta, p.layout, dims, rng);
  return p;
}

PolicyStep policy_step(const PolicyParams& params, std::span<const int> seq, std::size_t end) {
  PolicyStep s;
  s.trunk = nn::trunk_forward(params.theta, params.layout, params.dims,
                              nn::trailing_window(seq, end, params.dims.k_ctx));
  s.logits.assign(static_cast<std::size_t>(params.dims.vocab), 0.0);
  nn::head_forward(params.theta, params.layout.at("policy_w"), params.layout.at("policy_b"),
                   s.trunk.hidden, s.logits);
  double v = 0.0;
  nn::head_forward(params.theta, params.layout.at("value_w"), params.layout.at("value_b"),
                   s.trunk.hidden, std::span<double>(&v, 1));
  s.value = v;
  const double lse = nn::log_sum_exp(s.logits);
  s.log_probs.resize(s.logits.size());
  s.probs.resize(s.logits.size());
  for (std::size_t i = 0; i < s.logits.size(); ++i) {
    s.log_probs[i] = s.logits[i] - lse;
    s.probs[i] = std::exp(s.log_probs[i]);
  }
  return s;
}

void policy_step_backward(const PolicyParams& params, const PolicyStep& step,
                          std::span<const double> d_logits, double d_value,
                          std::span<double> grad) {
  std::vector<double> d_hidden(step.trunk.hidden.size(), 0.0);
  nn::head_backward(params.theta, params.layout.at("policy_w"), params.layout.at("policy_b"),
                    step.trunk.hidden, d_logits, grad, d_hidden);
  if (d_value != 0.0)
    nn::head_backward(params.theta, params.layout.at("value_w"), params.layout.at("value_b"),
                      step.trunk.hidden, std::span<const double>(&d_value, 1), grad, d_hidden);
  nn::trunk_backward(params.theta, params.layout, params.dims, step.trunk, d_hidden, grad);
}

std::vector<double> policy_logits(const PolicyParams& params, std::span<const int> state) {
  return policy_step(params, state, state.size()).logits;
}

std::vector<int> sample_response(const PolicyParams& params, std::span<const int> prompt,
                                 int max_len, double temperature, Rng& rng) {
  if (max_len < 1) throw InvalidInput("max_len must be >= 1");
  std::vector<int> seq(prompt.begin(), prompt.end());
  std::vector<int> out;
  for (int t = 0; t < max_len; ++t) {
    auto logits = policy_logits(params, seq);
    int tok = 0;
    if (temperature <= 0.0) {
      tok = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    } else {
      for (auto& l : logits) l /= temperature;
      nn::softmax_inplace(logits);
      tok = static_cast<int>(rng.categorical(logits));
    }
    out.push_back(tok);
    seq.push_back(tok);
    if (tok == kEosId) break;
  }
  return out;
}

std::vector<int> sample_response(const PolicyParams& params, std::span<const int> prompt,
                                 int max_len, double temperature, std::uint64_t seed) {
  Rng rng(seed);
  return sample_response(params, prompt, max_len, temperature, rng);
}

std::vector<double> sequence_log_probs(const PolicyParams& params, std::span<const int> prompt,
                                       std::span<const int> actions) {
  std::vector<int> seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), actions.begin(), actions.end());
  std::vector<double> out;
  out.reserve(actions.size());
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const int a = actions[t];
    if (a < 0 || a >= params.dims.vocab) throw InvalidInput("action outside vocabulary");
    out.push_back(policy_step(params, seq, prompt.size() + t).log_probs[static_cast<std::size_t>(a)]);
  }
  return out;
}

std::vector<double> value_estimates(const PolicyParams& params,
                                    const std::vector<std::vector<int>>& states) {
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(policy_step(params, s, s.size()).value);
  return out;
}

double nll_and_grad(const PolicyParams& params, std::span<const PretrainExample> batch,
                    std::vector<double>* grad) {
  if (grad) grad->assign(params.theta.size(), 0.0);
  std::size_t tokens = 0;
  for (const auto& ex : batch) tokens += ex.response.size();
  if (tokens == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(tokens);
  double loss = 0.0;
  std::vector<double> d_logits(static_cast<std::size_t>(params.dims.vocab));
  for (const auto& ex : batch) {
    std::vector<int> seq = ex.prompt;
    seq.insert(seq.end(), ex.response.begin(), ex.response.end());
    for (std::size_t t = 0; t < ex.response.size(); ++t) {
      const PolicyStep s = policy_step(params, seq, ex.prompt.size() + t);
      const auto a = static_cast<std::size_t>(ex.response[t]);
      loss -= s.log_probs[a] * inv;
      if (!grad) continue;
      for (std::size_t j = 0; j < d_logits.size(); ++j)
        d_logits[j] = inv * (s.probs[j] - (j == a ? 1.0 : 0.0));
      policy_step_backward(params, s, d_logits, 0.0, *grad);
    }
  }
  return loss;
}

PolicyParams pretrain_policy(const std::vector<PretrainExample>& data, const PretrainConfig& cfg,
                             const nn::MlpDims& dims) {
  if (data.empty()) throw InvalidInput("pretraining data is empty");
  PolicyParams params = PolicyParams::init(dims, cfg.seed);
  Adam adam(params.theta.size(), cfg.learning_rate);
  Rng rng = Rng::stream(cfg.seed, 0x736674ULL);
  const auto bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), data.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = data.size();
  std::vector<double> grad;
  std::vector<PretrainExample> mb;
  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor + bs > data.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    mb.clear();
    for (std::size_t i = 0; i < bs; ++i) mb.push_back(data[order[cursor + i]]);
    cursor += bs;
    nll_and_grad(params, mb, &grad);
    adam.step(params.theta, grad);
  }
  return params;
}

}  // namespace tppo
