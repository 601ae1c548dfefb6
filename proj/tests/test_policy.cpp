#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tppo/datagen.hpp"
#include "tppo/gradcheck.hpp"
#include "tppo/policy.hpp"
#include "tppo/random.hpp"

using namespace tppo;

namespace {

PolicyParams noisy_policy(std::uint64_t seed, double scale = 0.3, nn::MlpDims dims = {}) {
  auto p = PolicyParams::init(dims, seed);
  Rng rng(seed + 100);
  for (auto& v : p.theta) v += scale * rng.normal();
  // Keep the pad embedding row at zero.
  const auto& emb = p.layout.at("embedding");
  for (std::size_t j = 0; j < emb.cols; ++j) p.theta[emb.offset + j] = 0.0;
  return p;
}

std::vector<double> softmax(std::vector<double> v) {
  nn::softmax_inplace(v);
  return v;
}

}  // namespace

TEST_CASE("zero heads give a uniform next-token distribution") {
  const auto p = PolicyParams::init(nn::MlpDims{}, 0);
  const std::vector<int> state{5, 6, kSepId};
  for (double q : softmax(policy_logits(p, state))) CHECK(q == doctest::Approx(1.0 / 64));
}

TEST_CASE("logits are finite, normalized and deterministic") {
  const auto p = noisy_policy(1);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    std::vector<int> state(static_cast<std::size_t>(rng.uniform_int(1, 12)));
    for (auto& t : state) t = rng.uniform_int(1, 63);
    const auto a = policy_logits(p, state);
    CHECK(nn::all_finite(a));
    CHECK(a == policy_logits(p, state));
    const auto q = softmax(a);
    double s = 0.0;
    for (double x : q) s += x;
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("left padding never influences logits") {
  const auto p = noisy_policy(2);
  const std::vector<int> short_state{9, 10, kSepId};
  const std::vector<int> padded{kPadId, kPadId, 9, 10, kSepId};
  CHECK(policy_logits(p, short_state) == policy_logits(p, padded));
}

TEST_CASE("tokens beyond the context window are invisible") {
  const auto p = noisy_policy(3);
  std::vector<int> a{11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
  std::vector<int> b = a;
  b[0] = 40;
  b[1] = 41;
  CHECK(policy_logits(p, a) == policy_logits(p, b));
  CHECK(value_estimates(p, {a}) == value_estimates(p, {b}));
  b[2] = 42;
  CHECK(policy_logits(p, a) != policy_logits(p, b));
}

TEST_CASE("value head") {
  const auto zero = PolicyParams::init(nn::MlpDims{}, 4);
  const std::vector<std::vector<int>> states{{3, 4}, {5, kSepId, 9}};
  for (double v : value_estimates(zero, states)) CHECK(v == 0.0);
  const auto p = noisy_policy(4);
  const auto v = value_estimates(p, states);
  CHECK(v == value_estimates(p, states));
  CHECK(nn::all_finite(v));
}

TEST_CASE("sampling contract") {
  const auto p = noisy_policy(5, 0.5);
  const std::vector<int> prompt{7, 8, kSepId};
  CHECK(sample_response(p, prompt, 1, 1.0, 0).size() == 1);
  CHECK_THROWS_AS(sample_response(p, prompt, 0, 1.0, 0), InvalidInput);

  const auto greedy = sample_response(p, prompt, 12, 0.0, 1);
  CHECK(greedy == sample_response(p, prompt, 12, 0.0, 2));

  bool differ = false;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = sample_response(p, prompt, 12, 1.0, s);
    CHECK(a == sample_response(p, prompt, 12, 1.0, s));
    CHECK(a.size() <= 12);
    for (std::size_t i = 0; i + 1 < a.size(); ++i) CHECK(a[i] != kEosId);
    differ = differ || a != sample_response(p, prompt, 12, 1.0, s + 100);
  }
  CHECK(differ);
}

TEST_CASE("greedy decoding follows the argmax") {
  const auto p = noisy_policy(6, 0.5);
  const std::vector<int> prompt{12, kSepId};
  const auto seq = sample_response(p, prompt, 8, 0.0, 0);
  std::vector<int> state = prompt;
  for (int tok : seq) {
    const auto logits = policy_logits(p, state);
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j)
      if (logits[j] > logits[best]) best = j;
    CHECK(tok == static_cast<int>(best));
    state.push_back(tok);
  }
}

TEST_CASE("sequence log-probs") {
  nn::MlpDims small;
  small.vocab = 4;
  const auto uniform = PolicyParams::init(small, 0);
  const std::vector<int> prompt{2};
  const std::vector<int> actions{3, 1, 2};
  const auto lp = sequence_log_probs(uniform, prompt, actions);
  REQUIRE(lp.size() == 3);
  double sum = 0.0;
  for (double x : lp) {
    CHECK(x == doctest::Approx(std::log(0.25)));
    sum += x;
  }
  CHECK(sum == doctest::Approx(3 * std::log(0.25)));

  const auto p = noisy_policy(7);
  const std::vector<int> pr{9, 10, kSepId};
  const std::vector<int> act{20, 21, 22, kEosId};
  const auto l = sequence_log_probs(p, pr, act);
  std::vector<int> state = pr;
  for (std::size_t t = 0; t < act.size(); ++t) {
    CHECK(l[t] <= 0.0);
    const auto q = softmax(policy_logits(p, state));
    CHECK(std::abs(std::exp(l[t]) - q[static_cast<std::size_t>(act[t])]) < 1e-9);
    state.push_back(act[t]);
  }
}

TEST_CASE("step backward matches finite differences") {
  auto p = noisy_policy(8);
  const std::vector<int> seq{5, 6, 7, kSepId, 30, 31};
  Rng rng(8);
  std::vector<double> c_logits(64);
  for (auto& c : c_logits) c = rng.normal();
  const double c_value = 0.7;
  // Scalar probe: sum_j c_j * log_softmax_j + c_value * value.
  auto probe = [&](std::span<const double> theta) {
    PolicyParams q = p;
    q.theta.assign(theta.begin(), theta.end());
    const auto step = policy_step(q, seq, seq.size());
    double s = c_value * step.value;
    for (std::size_t j = 0; j < 64; ++j) s += c_logits[j] * step.log_probs[j];
    return s;
  };
  const auto step = policy_step(p, seq, seq.size());
  double csum = 0.0;
  for (double c : c_logits) csum += c;
  std::vector<double> d_logits(64);
  for (std::size_t j = 0; j < 64; ++j) d_logits[j] = c_logits[j] - csum * step.probs[j];
  std::vector<double> grad(p.theta.size(), 0.0);
  policy_step_backward(p, step, d_logits, c_value, grad);

  std::vector<std::size_t> coords;
  for (const auto& seg : p.layout.segments())
    for (int i = 0; i < 10; ++i)
      coords.push_back(seg.offset +
                       static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(seg.size()) - 1)));
  // The probe sums 64 log-probs, so a wider step keeps roundoff below the floor.
  const auto rep = check_gradient(probe, p.theta, grad, p.layout, coords, 1e-4);
  INFO(rep.worst_param);
  CHECK(rep.passed);
}

TEST_CASE("pretraining nll gradient matches finite differences") {
  const auto p = noisy_policy(9);
  const std::vector<PretrainExample> batch{{{5, 6, kSepId}, {20, 21, kEosId}},
                                           {{7, kSepId}, {22, kEosId}}};
  std::vector<double> grad;
  nll_and_grad(p, batch, &grad);
  auto loss = [&](std::span<const double> theta) {
    PolicyParams q = p;
    q.theta.assign(theta.begin(), theta.end());
    return nll_and_grad(q, batch, nullptr);
  };
  Rng rng(9);
  std::vector<std::size_t> coords;
  for (int i = 0; i < 60; ++i)
    coords.push_back(static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(p.theta.size()) - 1)));
  CHECK(check_gradient(loss, p.theta, grad, p.layout, coords).passed);
}

TEST_CASE("gradient check flags a corrupted gradient") {
  const auto p = noisy_policy(10);
  const std::vector<PretrainExample> batch{{{5, kSepId}, {20, kEosId}}};
  std::vector<double> grad;
  nll_and_grad(p, batch, &grad);
  const auto& head = p.layout.at("policy_b");
  grad[head.offset + 20] *= 1.5;
  auto loss = [&](std::span<const double> theta) {
    PolicyParams q = p;
    q.theta.assign(theta.begin(), theta.end());
    return nll_and_grad(q, batch, nullptr);
  };
  const std::vector<std::size_t> coords{head.offset + 20, head.offset + 21};
  const auto rep = check_gradient(loss, p.theta, grad, p.layout, coords);
  CHECK(!rep.passed);
  CHECK(rep.worst_param == "policy_b[20,0]");
}

TEST_CASE("pretraining fits a tiny dataset deterministically") {
  std::vector<PretrainExample> data;
  for (int i = 0; i < 6; ++i) data.push_back({{3 + i, kSepId}, {20 + i, 30 + i, kEosId}});
  PretrainConfig cfg;
  cfg.steps = 300;
  cfg.batch_size = 6;
  const auto a = pretrain_policy(data, cfg);
  CHECK(a.theta == pretrain_policy(data, cfg).theta);
  CHECK(nll_and_grad(a, data, nullptr) < 0.1);
  for (const auto& ex : data) CHECK(sample_response(a, ex.prompt, 8, 0.0, 0) == ex.response);
}
