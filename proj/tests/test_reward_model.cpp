#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "tppo/gradcheck.hpp"
#include "tppo/random.hpp"
#include "tppo/reward_model.hpp"

using namespace tppo;

namespace {

using RC = RewardCategory;

TokenRow row_of(const std::vector<int>& cats, RC sentence = RC::relevant) {
  TokenRow row;
  row.ids = {10, kSepId};
  row.categories = {RC::masked, RC::masked};
  row.response_begin = row.ids.size();
  for (std::size_t i = 0; i < cats.size(); ++i) {
    row.ids.push_back(20 + static_cast<int>(i % 30));
    row.categories.push_back(category_from_int(cats[i]));
  }
  row.sentence_reward = sentence;
  return row;
}

/// Output whose every position carries `probs`.
RMOutput constant_output(const TokenBatch& batch, ClassProbs probs) {
  RMOutput out;
  out.rows = batch.rows;
  out.cols = batch.cols;
  out.class_probs.assign(batch.rows * batch.cols, probs);
  out.predicted_category.assign(batch.rows * batch.cols, argmax_category(probs));
  out.expected_reward.assign(batch.rows * batch.cols, probs[1] + 2.0 * probs[2]);
  return out;
}

RMTrainConfig weights(double w0, double w1, double w2) {
  RMTrainConfig cfg;
  cfg.class_weights = {w0, w1, w2};
  return cfg;
}

double pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / static_cast<double>(pos.size() * neg.size());
}

}  // namespace

TEST_CASE("zero output layer gives uniform triples") {
  const auto params = RMParams::init(nn::MlpDims{}, 3);
  const auto batch = make_parity_batch(1, 20, 64);
  const auto out = rm_forward(params, batch);
  for (std::size_t r = 0; r < batch.rows; ++r)
    for (std::size_t c = 0; c < batch.cols; ++c) {
      if (!batch.attended(r, c)) continue;
      for (double p : out.class_probs[batch.index(r, c)]) CHECK(p == doctest::Approx(1.0 / 3.0));
    }
}

TEST_CASE("forward pass yields distributions and is deterministic") {
  auto params = RMParams::init(nn::MlpDims{}, 5);
  Rng rng(2);
  for (auto& v : params.theta) v += 0.3 * rng.normal();
  const auto batch = make_parity_batch(2, 30, 64);
  const auto a = rm_forward(params, batch);
  const auto b = rm_forward(params, batch);
  for (std::size_t k = 0; k < a.class_probs.size(); ++k) {
    const auto& p = a.class_probs[k];
    CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) < 1e-9);
    for (double x : p) CHECK(x >= 0.0);
    CHECK(a.predicted_category[k] == argmax_category(p));
    CHECK(a.class_probs[k] == b.class_probs[k]);
  }

  auto bad = batch;
  bad.token_ids[bad.index(0, 0)] = 64;
  CHECK_THROWS_AS(rm_forward(params, bad), InvalidInput);
}

TEST_CASE("argmax ties resolve to the lowest class") {
  CHECK(argmax_category({0.1, 0.2, 0.7}) == RC::relevant);
  CHECK(argmax_category({0.4, 0.4, 0.2}) == RC::masked);
  CHECK(argmax_category({0.2, 0.4, 0.4}) == RC::irrelevant);
}

TEST_CASE("predicted categories are masked outside the activation mask") {
  const auto batch = make_token_batch({row_of({2, 2, 1}), row_of({1})});
  auto out = constant_output(batch, {0.1, 0.2, 0.7});
  const auto cats = predict_token_rewards(out, batch);
  for (std::size_t k = 0; k < cats.size(); ++k)
    CHECK(cats[k] == (batch.activation_mask[k] ? RC::relevant : RC::masked));
}

TEST_CASE("valid set examples") {
  {
    const auto batch = make_token_batch({row_of({0, 1, 1, 1, 1, 1, 1, 2, 2})});
    const auto vs = build_valid_set(batch, 0);
    CHECK(vs.kept_counts == std::array<std::size_t, 3>{1, 6, 2});
  }
  {
    std::vector<int> cats(10, 1);
    cats.push_back(2);
    cats.push_back(2);
    cats.push_back(0);
    const auto batch = make_token_batch({row_of(cats)});
    const auto vs = build_valid_set(batch, 42);
    // Recount membership directly.
    std::array<std::size_t, 3> counted{};
    for (std::size_t k = 0; k < vs.membership.size(); ++k)
      if (vs.membership[k]) ++counted[static_cast<std::size_t>(batch.token_categories[k])];
    CHECK(counted == std::array<std::size_t, 3>{1, 6, 2});
    CHECK(vs.kept_counts == counted);
  }
  {
    TokenBatch pad;
    pad.rows = 2;
    pad.cols = 4;
    pad.token_ids.assign(8, kPadId);
    pad.attention_mask.assign(8, 0);
    pad.activation_mask.assign(8, 0);
    pad.token_categories.assign(8, RC::masked);
    pad.sentence_rewards = {RC::relevant, RC::irrelevant};
    const auto vs = build_valid_set(pad, 0);
    CHECK(vs.empty());
  }
}

TEST_CASE("valid set properties over random batches") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TokenRow> rows;
    const int n_rows = rng.uniform_int(1, 4);
    for (int r = 0; r < n_rows; ++r) {
      std::vector<int> cats(static_cast<std::size_t>(rng.uniform_int(1, 12)));
      const double p2 = rng.uniform();
      for (auto& c : cats) c = rng.bernoulli(0.15) ? 0 : (rng.bernoulli(p2) ? 2 : 1);
      rows.push_back(row_of(cats));
    }
    const auto batch = make_token_batch(rows);
    const auto vs = build_valid_set(batch, static_cast<std::uint64_t>(trial));
    std::array<std::size_t, 3> before{};
    for (std::size_t k = 0; k < batch.token_ids.size(); ++k) {
      if (vs.membership[k]) {
        CHECK(batch.activation_mask[k]);
        CHECK(batch.attention_mask[k]);
      }
      if (batch.activation_mask[k]) {
        ++before[static_cast<std::size_t>(batch.token_categories[k])];
        if (batch.token_categories[k] == RC::masked) CHECK(vs.membership[k]);
      }
    }
    for (std::size_t c = 0; c < 3; ++c) CHECK(vs.kept_counts[c] <= before[c]);
    if (before[1] > 0 && before[2] > 0) {
      const double ratio =
          static_cast<double>(vs.kept_counts[2]) / static_cast<double>(vs.kept_counts[1]);
      CHECK(ratio >= 1.0 / 3.0 - 1e-12);
      CHECK(ratio <= 3.0 + 1e-12);
    }
    CHECK(build_valid_set(batch, static_cast<std::uint64_t>(trial)).membership == vs.membership);
  }
}

TEST_CASE("local loss examples") {
  {
    const auto batch = make_token_batch({row_of({2})});
    const auto vs = build_valid_set(batch, 0);
    CHECK(local_loss(constant_output(batch, {0.0, 0.0, 1.0}), batch, vs, weights(0.2, 1, 1)) ==
          doctest::Approx(0.0));
  }
  {
    const auto batch = make_token_batch({row_of({1})});
    const auto vs = build_valid_set(batch, 0);
    const auto uniform = constant_output(batch, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    CHECK(local_loss(uniform, batch, vs, weights(0.2, 1, 1)) == doctest::Approx(std::log(3.0)));
    CHECK(local_loss(uniform, batch, vs, weights(0.2, 2, 1)) ==
          doctest::Approx(2.0 * std::log(3.0)));
  }
  {
    // Probability floor keeps the loss finite.
    const auto batch = make_token_batch({row_of({1})});
    const auto vs = build_valid_set(batch, 0);
    const double l = local_loss(constant_output(batch, {0.0, 0.0, 1.0}), batch, vs,
                                weights(0.2, 1, 1));
    CHECK(l == doctest::Approx(-std::log(kProbFloor)));
  }
}

TEST_CASE("local loss is nonnegative and zero only at perfect prediction") {
  Rng rng(5);
  const auto batch = make_token_batch({row_of({2, 1, 0, 2}), row_of({1, 1, 2})});
  const auto vs = build_valid_set(batch, 0);
  const auto cfg = weights(1, 1, 1);
  for (int i = 0; i < 100; ++i) {
    auto out = constant_output(batch, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    for (auto& p : out.class_probs) {
      const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
      p = {a / (a + b + c), b / (a + b + c), c / (a + b + c)};
    }
    CHECK(local_loss(out, batch, vs, cfg) > 0.0);
  }
  auto perfect = constant_output(batch, {0, 0, 0});
  for (std::size_t k = 0; k < perfect.class_probs.size(); ++k) {
    perfect.class_probs[k] = {0, 0, 0};
    perfect.class_probs[k][static_cast<std::size_t>(batch.token_categories[k])] = 1.0;
  }
  CHECK(local_loss(perfect, batch, vs, cfg) == 0.0);
}

TEST_CASE("global loss examples") {
  {
    const auto batch = make_token_batch({row_of({2, 2, 1}, RC::relevant)});
    const auto vs = build_valid_set(batch, 0);
    CHECK(global_loss(constant_output(batch, {0.1, 0.1, 0.8}), batch, vs, GlobalVariant::eval) ==
          0.0);
  }
  {
    const auto batch = make_token_batch({row_of({1, 2}, RC::relevant)});
    const auto vs = build_valid_set(batch, 0);
    CHECK(global_loss(constant_output(batch, {0.0, 0.5, 0.5}), batch, vs,
                      GlobalVariant::training) == doctest::Approx(0.25));
  }
  {
    // Mean token reward (1 + 2 + 0) / 3 = 1 equals the sentence reward 1.
    const auto batch = make_token_batch({row_of({1, 2, 0}, RC::irrelevant)});
    const auto vs = build_valid_set(batch, 0);
    auto out = constant_output(batch, {1, 0, 0});
    const std::size_t b = batch.index(0, 2);
    out.predicted_category[b] = RC::irrelevant;
    out.predicted_category[b + 1] = RC::relevant;
    out.predicted_category[b + 2] = RC::masked;
    CHECK(global_loss(out, batch, vs, GlobalVariant::eval) == 0.0);
  }
  {
    TokenRow empty = row_of({});
    const auto batch = make_token_batch({empty, row_of({2})});
    auto vs = build_valid_set(batch, 0);
    vs.membership[batch.index(0, 2)] = 0;  // drop the lone eos of row 0
    std::size_t excluded = 0;
    global_loss(constant_output(batch, {0, 0, 1}), batch, vs, GlobalVariant::eval, &excluded);
    CHECK(excluded == 1);
  }
}

TEST_CASE("eval global loss ignores changes that keep the argmax") {
  Rng rng(8);
  const auto batch = make_token_batch({row_of({2, 1, 2, 0}), row_of({1, 1})});
  const auto vs = build_valid_set(batch, 0);
  auto out = constant_output(batch, {0.2, 0.3, 0.5});
  const double base = global_loss(out, batch, vs, GlobalVariant::eval);
  for (int i = 0; i < 50; ++i) {
    for (auto& p : out.class_probs) {
      const double top = rng.uniform(0.5, 1.0);
      const double mid = rng.uniform(0.0, 1.0 - top);
      p = {(1.0 - top - mid), mid, top};
    }
    CHECK(global_loss(out, batch, vs, GlobalVariant::eval) == base);
  }
}

TEST_CASE("total loss combination") {
  RMTrainConfig cfg;
  cfg.lambda_local = 0.5;
  cfg.lambda_global = 0.5;
  CHECK(total_loss(2.0, 0.25, cfg) == doctest::Approx(1.125));
  cfg.lambda_local = 1.0;
  cfg.lambda_global = 0.0;
  CHECK(total_loss(2.0, 0.25, cfg) == 2.0);
  cfg.lambda_local = 0.0;
  cfg.lambda_global = 1.0;
  CHECK(total_loss(2.0, 0.25, cfg) == 0.25);
  cfg.lambda_local = 0.7;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("auc examples and midrank agreement with a pairwise oracle") {
  const std::vector<double> pos{0.9, 0.8}, neg{0.1, 0.2};
  CHECK(*auc_from_scores(pos, neg) == 1.0);
  CHECK(*auc_from_scores(neg, pos) == 0.0);
  const std::vector<double> same{0.5, 0.5, 0.5};
  CHECK(*auc_from_scores(same, same) == 0.5);
  CHECK(!auc_from_scores(pos, {}).has_value());

  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> p(static_cast<std::size_t>(rng.uniform_int(1, 30)));
    std::vector<double> n(static_cast<std::size_t>(rng.uniform_int(1, 30)));
    for (auto& v : p) v = rng.uniform_int(0, 6) / 6.0;  // many ties
    for (auto& v : n) v = rng.uniform_int(0, 6) / 6.0;
    CHECK(*auc_from_scores(p, n) == doctest::Approx(pairwise_auc(p, n)).epsilon(1e-12));
  }
}

TEST_CASE("rm auc is absent for a single-class valid set") {
  const auto batch = make_token_batch({row_of({2, 2, 0})});
  const auto vs = build_valid_set(batch, 0);
  CHECK(!rm_auc(constant_output(batch, {0.2, 0.3, 0.5}), batch, vs).has_value());
}

TEST_CASE("reward-model gradient matches finite differences") {
  Rng rng(17);
  const auto batch = make_parity_batch(3, 6, 64, 6);
  const auto vs = build_valid_set(batch, 3);
  RMTrainConfig cfg;
  cfg.lambda_local = 0.3;
  cfg.lambda_global = 0.7;
  for (int point = 0; point < 3; ++point) {
    auto params = RMParams::init(nn::MlpDims{}, static_cast<std::uint64_t>(point));
    for (auto& v : params.theta) v += 0.2 * rng.normal();
    const auto lg = rm_loss_and_grad(params, batch, vs, cfg);
    auto loss = [&](std::span<const double> theta) {
      RMParams p = params;
      p.theta.assign(theta.begin(), theta.end());
      return rm_loss_and_grad(p, batch, vs, cfg).total;
    };
    std::vector<std::size_t> coords;
    for (const auto& seg : params.layout.segments())
      for (int i = 0; i < 12; ++i)
        coords.push_back(seg.offset + static_cast<std::size_t>(
                                          rng.uniform_int(0, static_cast<int>(seg.size()) - 1)));
    const auto rep = check_gradient(loss, params.theta, lg.grad, params.layout, coords);
    INFO(rep.worst_param, " analytic ", rep.worst_analytic, " numeric ", rep.worst_numeric);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("loss-and-grad agrees with the standalone loss functions") {
  auto params = RMParams::init(nn::MlpDims{}, 1);
  Rng rng(1);
  for (auto& v : params.theta) v += 0.1 * rng.normal();
  const auto batch = make_parity_batch(5, 8, 64);
  const auto vs = build_valid_set(batch, 0);
  RMTrainConfig cfg;
  const auto lg = rm_loss_and_grad(params, batch, vs, cfg);
  const auto out = rm_forward(params, batch);
  CHECK(lg.local == doctest::Approx(local_loss(out, batch, vs, cfg)).epsilon(1e-12));
  CHECK(lg.global ==
        doctest::Approx(global_loss(out, batch, vs, GlobalVariant::training)).epsilon(1e-12));
  CHECK(lg.total == doctest::Approx(total_loss(lg.local, lg.global, cfg)).epsilon(1e-12));
}

TEST_CASE("training is deterministic and improves the loss") {
  const auto train = make_parity_batch(0, 200, 64);
  const auto eval = make_parity_batch(1000, 50, 64);
  RMTrainConfig cfg;
  cfg.steps = 200;
  cfg.eval_every = 50;
  const auto a = train_reward_model(train, eval, cfg);
  const auto b = train_reward_model(train, eval, cfg);
  CHECK(a.params.theta == b.params.theta);
  REQUIRE(a.curve.size() == 4);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].eval_loss == b.curve[i].eval_loss);
    CHECK(a.curve[i].step == static_cast<int>(50 * (i + 1)));
  }
  CHECK(a.curve.back().eval_loss < a.curve.front().eval_loss);

  RMTrainConfig other = cfg;
  other.seed = 1;
  CHECK(train_reward_model(train, eval, other).params.theta != a.params.theta);
}

TEST_CASE("divergence aborts with a diagnostic") {
  const auto train = make_parity_batch(0, 50, 64);
  RMTrainConfig cfg;
  cfg.steps = 50;
  cfg.learning_rate = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(train_reward_model(train, train, cfg), TrainingDiverged);
}

TEST_CASE("length-weighted penalty values") {
  LengthPenaltyConfig cfg{1.0, 4};
  const double at_sl = 1.0 / (1.0 + std::exp(-6.0));
  CHECK(lwp(4, cfg) == doctest::Approx(0.99753).epsilon(1e-5));
  CHECK(lwp(4, cfg) == at_sl);
  CHECK(lwp(10, cfg) == doctest::Approx(0.5));
  CHECK(lwp(4 + 24, {0.5, 4}) == doctest::Approx(1.0 / (1.0 + std::exp(6.0))));
  CHECK(lwp(4 + 24, {0.5, 4}) == doctest::Approx(0.00247).epsilon(1e-3));
  CHECK_THROWS_AS(lwp(0, cfg), InvalidInput);
  CHECK_THROWS_AS(lwp(1, {0.0, 4}), InvalidInput);
  CHECK_THROWS_AS(lwp(1, {1.0, 0}), InvalidInput);
}

TEST_CASE("length penalty applied to rewards") {
  const LengthPenaltyConfig cfg{1.0, 4};
  const std::vector<double> zeros(6, 0.0);
  for (double r : apply_length_penalty(zeros, cfg)) CHECK(r == 0.0);
  const std::vector<double> two{0.0, 0.0, 0.0, 2.0};
  CHECK(apply_length_penalty(two, cfg)[3] == doctest::Approx(1.99506).epsilon(1e-5));
  const std::vector<double> flat(30, 1.0);
  const auto pen = apply_length_penalty(flat, cfg);
  for (std::size_t i = 1; i < pen.size(); ++i) CHECK(pen[i] <= pen[i - 1]);
}

TEST_CASE("lwp is in (0,1) and decreasing in l and in alpha past sl + 6/alpha") {
  for (double alpha : {0.25, 0.5, 1.0, 2.0}) {
    for (int sl : {1, 4, 9}) {
      const LengthPenaltyConfig cfg{alpha, sl};
      for (int l = 1; l < 4 * sl + 20; ++l) {
        const double v = lwp(l, cfg);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        CHECK(lwp(l + 1, cfg) < v);
        if (l > sl + 6.0 / alpha) CHECK(lwp(l, {alpha * 1.5, sl}) < v);
      }
    }
  }
}
