#include "tppo/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tppo/optim.hpp"
#include "tppo/random.hpp"

namespace tppo {

namespace {

constexpr std::size_t kClasses = 3;

struct TokenEval {
  nn::TrunkCache trunk;
  ClassProbs probs{};
};

TokenEval eval_token(const RMParams& p, const TokenBatch& batch, std::size_t r, std::size_t c) {
  const std::span<const int> row(batch.token_ids.data() + batch.index(r, 0), batch.cols);
  TokenEval ev;
  ev.trunk = nn::trunk_forward(p.theta, p.layout, p.dims,
                               nn::trailing_window(row, c + 1, p.dims.k_ctx));
  std::array<double, kClasses> logits{};
  nn::head_forward(p.theta, p.layout.at("out_w"), p.layout.at("out_b"), ev.trunk.hidden, logits);
  nn::softmax_inplace(logits);
  ev.probs = logits;
  return ev;
}

double expected_of(const ClassProbs& p) { return p[1] + 2.0 * p[2]; }

}  // namespace

nn::ParamLayout RMParams::layout_for(const nn::MlpDims& dims) {
  nn::ParamLayout layout;
  nn::add_trunk(layout, dims);
  layout.add("out_w", kClasses, static_cast<std::size_t>(dims.hidden));
  layout.add("out_b", kClasses, 1);
  return layout;
}

RMParams RMParams::zeros(const nn::MlpDims& dims) {
  RMParams p{dims, layout_for(dims), {}};
  p.theta.assign(p.layout.total(), 0.0);
  return p;
}

RMParams RMParams::init(const nn::MlpDims& dims, std::uint64_t seed) {
  RMParams p = zeros(dims);
  Rng rng(seed);
  nn::init_trunk(p.theta, p.layout, dims, rng);
  return p;
}

RewardCategory argmax_category(const ClassProbs& p) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kClasses; ++c)
    if (p[c] > p[best]) best = c;
  return static_cast<RewardCategory>(best);
}

RMOutput rm_forward(const RMParams& params, const TokenBatch& batch) {
  RMOutput out;
  out.rows = batch.rows;
  out.cols = batch.cols;
  const std::size_t total = batch.rows * batch.cols;
  out.class_probs.assign(total, ClassProbs{1.0, 0.0, 0.0});
  out.predicted_category.assign(total, RewardCategory::masked);
  out.expected_reward.assign(total, 0.0);
  for (std::size_t r = 0; r < batch.rows; ++r)
    for (std::size_t c = 0; c < batch.cols; ++c) {
      if (!batch.attended(r, c)) continue;
      const auto k = batch.index(r, c);
      out.class_probs[k] = eval_token(params, batch, r, c).probs;
      out.predicted_category[k] = argmax_category(out.class_probs[k]);
      out.expected_reward[k] = expected_of(out.class_probs[k]);
    }
  return out;
}

ValidSet build_valid_set(const TokenBatch& batch, std::uint64_t seed) {
  ValidSet vs;
  vs.rows = batch.rows;
  vs.cols = batch.cols;
  vs.membership.assign(batch.rows * batch.cols, 0);
  std::array<std::vector<std::size_t>, kClasses> by_class;
  for (std::size_t k = 0; k < vs.membership.size(); ++k)
    if (batch.activation_mask[k] && batch.attention_mask[k])
      by_class[static_cast<std::size_t>(batch.token_categories[k])].push_back(k);

  const std::size_t n1 = by_class[1].size(), n2 = by_class[2].size();
  if (n1 > 0 && n2 > 0) {
    auto& major = n1 > n2 ? by_class[1] : by_class[2];
    const std::size_t keep = 3 * std::min(n1, n2);
    if (major.size() > keep) {
      Rng rng(seed);
      rng.shuffle(major);
      major.resize(keep);
    }
  }
  for (std::size_t c = 0; c < kClasses; ++c) {
    for (auto k : by_class[c]) vs.membership[k] = 1;
    vs.kept_counts[c] = by_class[c].size();
  }
  return vs;
}

void RMTrainConfig::validate() const {
  for (double w : class_weights)
    if (!(w >= 0.0)) throw InvalidInput("class weights must be nonnegative");
  if (lambda_local < 0.0 || lambda_global < 0.0 ||
      std::abs(lambda_local + lambda_global - 1.0) > 1e-12)
    throw InvalidInput("lambda_local and lambda_global must be nonnegative and sum to 1");
  if (!(learning_rate > 0.0) || steps < 1 || batch_size < 1 || eval_every < 1)
    throw InvalidInput("reward-model optimizer settings must be positive");
}

double local_loss(const RMOutput& out, const TokenBatch& batch, const ValidSet& vs,
                  const RMTrainConfig& cfg) {
  if (vs.empty() || batch.rows == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < vs.membership.size(); ++k) {
    if (!vs.membership[k]) continue;
    const auto c = static_cast<std::size_t>(batch.token_categories[k]);
    acc -= cfg.class_weights[c] * std::log(std::max(out.class_probs[k][c], kProbFloor));
  }
  return acc / static_cast<double>(batch.rows);
}

double global_loss(const RMOutput& out, const TokenBatch& batch, const ValidSet& vs,
                   GlobalVariant variant, std::size_t* excluded) {
  double acc = 0.0;
  std::size_t used = 0, skipped = 0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < batch.cols; ++c) {
      if (!vs.contains(r, c)) continue;
      const auto k = batch.index(r, c);
      sum += variant == GlobalVariant::training
                 ? out.expected_reward[k]
                 : static_cast<double>(to_int(out.predicted_category[k]));
      ++n;
    }
    if (n == 0) {
      ++skipped;
      continue;
    }
    const double resid = sum / static_cast<double>(n) - to_int(batch.sentence_rewards[r]);
    acc += resid * resid;
    ++used;
  }
  if (excluded) *excluded = skipped;
  return used == 0 ? 0.0 : acc / static_cast<double>(used);
}

double total_loss(double local, double global, const RMTrainConfig& cfg) {
  return cfg.lambda_local * local + cfg.lambda_global * global;
}

RMLossGrad rm_loss_and_grad(const RMParams& params, const TokenBatch& batch, const ValidSet& vs,
                            const RMTrainConfig& cfg) {
  RMLossGrad res;
  res.grad.assign(params.theta.size(), 0.0);
  if (batch.rows == 0) return res;
  const auto& out_w = params.layout.at("out_w");
  const auto& out_b = params.layout.at("out_b");
  const double inv_n = 1.0 / static_cast<double>(batch.rows);

  struct Row {
    std::vector<std::size_t> cols;
    std::vector<TokenEval> evals;
  };
  std::vector<Row> rows(batch.rows);
  std::size_t used = 0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    for (std::size_t c = 0; c < batch.cols; ++c) {
      if (!vs.contains(r, c)) continue;
      rows[r].cols.push_back(c);
      rows[r].evals.push_back(eval_token(params, batch, r, c));
    }
    if (!rows[r].cols.empty()) ++used;
  }

  std::vector<double> d_hidden(static_cast<std::size_t>(params.dims.hidden));
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const auto& row = rows[r];
    if (row.cols.empty()) continue;
    const double n_v = static_cast<double>(row.cols.size());
    double mean = 0.0;
    for (const auto& ev : row.evals) mean += expected_of(ev.probs);
    mean /= n_v;
    const double resid = mean - to_int(batch.sentence_rewards[r]);
    res.global += resid * resid;
    const double d_expected = cfg.lambda_global * 2.0 * resid / (n_v * static_cast<double>(used));

    for (std::size_t i = 0; i < row.cols.size(); ++i) {
      const auto& ev = row.evals[i];
      const auto cat = static_cast<std::size_t>(batch.category(r, row.cols[i]));
      const double w = cfg.class_weights[cat];
      std::array<double, kClasses> d_logits{};
      if (ev.probs[cat] > kProbFloor) {
        res.local -= w * std::log(ev.probs[cat]);
        for (std::size_t j = 0; j < kClasses; ++j)
          d_logits[j] += cfg.lambda_local * inv_n * w * (ev.probs[j] - (j == cat ? 1.0 : 0.0));
      } else {
        res.local -= w * std::log(kProbFloor);
      }
      const double e = expected_of(ev.probs);
      for (std::size_t j = 0; j < kClasses; ++j)
        d_logits[j] += d_expected * ev.probs[j] * (static_cast<double>(j) - e);

      std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
      nn::head_backward(params.theta, out_w, out_b, ev.trunk.hidden, d_logits, res.grad,
                        d_hidden);
      nn::trunk_backward(params.theta, params.layout, params.dims, ev.trunk, d_hidden, res.grad);
    }
  }
  res.local *= inv_n;
  res.global = used == 0 ? 0.0 : res.global / static_cast<double>(used);
  res.total = total_loss(res.local, res.global, cfg);
  return res;
}

std::vector<RewardCategory> predict_token_rewards(const RMOutput& out, const TokenBatch& batch) {
  std::vector<RewardCategory> cats(out.predicted_category.size(), RewardCategory::masked);
  for (std::size_t k = 0; k < cats.size(); ++k)
    if (batch.activation_mask[k] && batch.attention_mask[k]) cats[k] = out.predicted_category[k];
  return cats;
}

std::vector<RewardCategory> predict_token_rewards(const RMParams& params, const TokenBatch& batch) {
  return predict_token_rewards(rm_forward(params, batch), batch);
}

std::optional<double> auc_from_scores(std::span<const double> positive,
                                      std::span<const double> negative) {
  if (positive.empty() || negative.empty()) return std::nullopt;
  // Rank-sum with midranks for ties.
  std::vector<std::pair<double, int>> all;
  all.reserve(positive.size() + negative.size());
  for (double s : positive) all.emplace_back(s, 1);
  for (double s : negative) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t q = i; q < j; ++q)
      if (all[q].second == 1) rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(positive.size());
  const double nn = static_cast<double>(negative.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::optional<double> rm_auc(const RMOutput& out, const TokenBatch& batch, const ValidSet& vs) {
  std::vector<double> pos, neg;
  for (std::size_t k = 0; k < vs.membership.size(); ++k) {
    if (!vs.membership[k]) continue;
    const auto& p = out.class_probs[k];
    const double denom = p[1] + p[2];
    const double score = denom > 0.0 ? p[2] / denom : 0.5;
    if (batch.token_categories[k] == RewardCategory::relevant) pos.push_back(score);
    if (batch.token_categories[k] == RewardCategory::irrelevant) neg.push_back(score);
  }
  return auc_from_scores(pos, neg);
}

double token_accuracy(const RMOutput& out, const TokenBatch& batch, const ValidSet& vs) {
  std::size_t n = 0, hit = 0;
  for (std::size_t k = 0; k < vs.membership.size(); ++k) {
    if (!vs.membership[k]) continue;
    ++n;
    hit += out.predicted_category[k] == batch.token_categories[k];
  }
  return n == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(n);
}

TokenBatch slice_rows(const TokenBatch& batch, std::span<const std::size_t> rows) {
  TokenBatch out;
  out.rows = rows.size();
  out.cols = batch.cols;
  for (auto r : rows) {
    const auto begin = static_cast<std::ptrdiff_t>(batch.index(r, 0));
    const auto end = begin + static_cast<std::ptrdiff_t>(batch.cols);
    out.token_ids.insert(out.token_ids.end(), batch.token_ids.begin() + begin,
                         batch.token_ids.begin() + end);
    out.attention_mask.insert(out.attention_mask.end(), batch.attention_mask.begin() + begin,
                              batch.attention_mask.begin() + end);
    out.activation_mask.insert(out.activation_mask.end(), batch.activation_mask.begin() + begin,
                               batch.activation_mask.begin() + end);
    out.token_categories.insert(out.token_categories.end(),
                                batch.token_categories.begin() + begin,
                                batch.token_categories.begin() + end);
    out.sentence_rewards.push_back(batch.sentence_rewards[r]);
  }
  return out;
}

namespace {

struct EvalScores {
  double total, local, global_argmax, accuracy;
  std::optional<double> auc;
};

EvalScores score_eval(const RMParams& params, const TokenBatch& eval, const ValidSet& vs,
                      const RMTrainConfig& cfg) {
  const RMOutput out = rm_forward(params, eval);
  const double local = local_loss(out, eval, vs, cfg);
  const double global = global_loss(out, eval, vs, GlobalVariant::training);
  return {total_loss(local, global, cfg), local, global_loss(out, eval, vs, GlobalVariant::eval),
          token_accuracy(out, eval, vs), rm_auc(out, eval, vs)};
}

}  // namespace

RMTrainResult train_reward_model(const TokenBatch& train, const TokenBatch& eval,
                                 const RMTrainConfig& cfg, const nn::MlpDims& dims) {
  cfg.validate();
  if (train.rows == 0) throw InvalidInput("reward-model training data is empty");
  validate_token_batch(train);
  validate_token_batch(eval);

  RMTrainResult result{RMParams::init(dims, cfg.seed), {}, 0, 0, 0, std::nullopt, 0};
  RMParams& params = result.params;
  const Sgd sgd{cfg.learning_rate};
  Rng rng = Rng::stream(cfg.seed, 0x726d5f747261696eULL);
  const ValidSet eval_vs = build_valid_set(eval, cfg.seed ^ 0x5eedULL);
  const ValidSet dataset_vs = build_valid_set(train, cfg.seed);

  const auto batch = static_cast<std::size_t>(std::min<std::size_t>(
      static_cast<std::size_t>(cfg.batch_size), train.rows));
  std::vector<std::size_t> order(train.rows);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = train.rows;
  double running = 0.0;
  int running_n = 0;

  for (int step = 1; step <= cfg.steps; ++step) {
    if (cursor + batch > train.rows) {
      rng.shuffle(order);
      cursor = 0;
    }
    std::span<const std::size_t> picked(order.data() + cursor, batch);
    cursor += batch;
    const TokenBatch mb = slice_rows(train, picked);
    ValidSet vs;
    if (cfg.resample_valid_per_batch) {
      vs = build_valid_set(mb, rng.next_u64());
    } else {
      vs.rows = mb.rows;
      vs.cols = mb.cols;
      for (auto r : picked)
        for (std::size_t c = 0; c < train.cols; ++c)
          vs.membership.push_back(dataset_vs.membership[train.index(r, c)]);
      for (std::size_t k = 0; k < vs.membership.size(); ++k)
        if (vs.membership[k]) ++vs.kept_counts[static_cast<std::size_t>(mb.token_categories[k])];
    }
    const RMLossGrad lg = rm_loss_and_grad(params, mb, vs, cfg);
    if (!std::isfinite(lg.total) || !nn::all_finite(lg.grad))
      throw TrainingDiverged("reward-model loss became non-finite at step " +
                             std::to_string(step));
    sgd.step(params.theta, lg.grad);
    if (!nn::all_finite(params.theta))
      throw TrainingDiverged("reward-model parameters became non-finite at step " +
                             std::to_string(step));
    running += lg.total;
    ++running_n;

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const EvalScores s = score_eval(params, eval, eval_vs, cfg);
      result.curve.push_back(
          {step, running / running_n, s.total, s.auc, cfg.seed});
      running = 0.0;
      running_n = 0;
    }
  }
  const EvalScores s = score_eval(params, eval, eval_vs, cfg);
  result.eval_total = s.total;
  result.eval_local = s.local;
  result.eval_global_argmax = s.global_argmax;
  result.eval_auc = s.auc;
  result.eval_accuracy = s.accuracy;
  return result;
}

double lwp(int position, const LengthPenaltyConfig& cfg) {
  if (position < 1) throw InvalidInput("lwp position is 1-indexed");
  if (!(cfg.alpha > 0.0) || cfg.suggested_length < 1)
    throw InvalidInput("length penalty needs alpha > 0 and suggested length >= 1");
  const double z = cfg.alpha * static_cast<double>(position - cfg.suggested_length) - 6.0;
  return 1.0 / (1.0 + std::exp(z));
}

std::vector<double> apply_length_penalty(std::span<const double> rewards,
                                         const LengthPenaltyConfig& cfg) {
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i)
    out[i] = lwp(static_cast<int>(i) + 1, cfg) * rewards[i];
  return out;
}

}  // namespace tppo
