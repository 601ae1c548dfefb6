#pragma once

// Token-level reward model: a 3-way classifier over {masked, irrelevant,
// relevant} trained with a weighted per-token cross-entropy (local loss)
// plus a sentence-consistency squared error (global loss). Also hosts the
// length-weighted reward penalty applied before PPO.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tppo/datagen.hpp"
#include "tppo/window_mlp.hpp"

namespace tppo {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbFloor = 1e-12;

struct RMParams {
  nn::MlpDims dims;
  nn::ParamLayout layout;
  std::vector<double> theta;

  static nn::ParamLayout layout_for(const nn::MlpDims& dims);
  /// All-zero parameters (uniform class probabilities).
  static RMParams zeros(const nn::MlpDims& dims);
  /// Trunk drawn from `seed`; output layer zero.
  static RMParams init(const nn::MlpDims& dims, std::uint64_t seed);
};

using ClassProbs = std::array<double, 3>;

struct RMOutput {
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Unattended positions hold (1, 0, 0).
  std::vector<ClassProbs> class_probs;
  std::vector<RewardCategory> predicted_category;
  std::vector<double> expected_reward;

  std::size_t index(std::size_t r, std::size_t c) const { return r * cols + c; }
};

/// Argmax with ties resolved to the lowest class index.
RewardCategory argmax_category(const ClassProbs& p);

RMOutput rm_forward(const RMParams& params, const TokenBatch& batch);

struct ValidSet {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> membership;
  std::array<std::size_t, 3> kept_counts{};
  bool empty() const { return kept_counts[0] + kept_counts[1] + kept_counts[2] == 0; }
  bool contains(std::size_t r, std::size_t c) const { return membership[r * cols + c] != 0; }
};

/// Keeps attended response tokens; when both label 1 and label 2 are present
/// and their ratio falls outside [1:3, 3:1], a seeded random subset of the
/// majority class is dropped so exactly 3x the minority count survives.
/// Label-0 response tokens are always kept.
ValidSet build_valid_set(const TokenBatch& batch, std::uint64_t seed);

struct RMTrainConfig {
  std::array<double, 3> class_weights{0.2, 1.0, 1.0};
  double lambda_local = 0.5;
  double lambda_global = 0.5;
  double learning_rate = 0.05;
  int steps = 2000;
  int batch_size = 16;
  int eval_every = 100;
  std::uint64_t seed = 0;
  /// Draw a fresh valid set for every minibatch; otherwise one per dataset.
  bool resample_valid_per_batch = true;

  void validate() const;
};

enum class GlobalVariant { training, eval };

double local_loss(const RMOutput& out, const TokenBatch& batch, const ValidSet& vs,
                  const RMTrainConfig& cfg);

/// Episodes with an empty valid set are excluded; their count is written to
/// `excluded` when given.
double global_loss(const RMOutput& out, const TokenBatch& batch, const ValidSet& vs,
                   GlobalVariant variant, std::size_t* excluded = nullptr);

double total_loss(double local, double global, const RMTrainConfig& cfg);

struct RMLossGrad {
  double local = 0.0;
  double global = 0.0;
  double total = 0.0;
  std::vector<double> grad;
};

/// Total loss with the expected-reward global term, and its exact gradient.
RMLossGrad rm_loss_and_grad(const RMParams& params, const TokenBatch& batch, const ValidSet& vs,
                            const RMTrainConfig& cfg);

std::vector<RewardCategory> predict_token_rewards(const RMParams& params, const TokenBatch& batch);
std::vector<RewardCategory> predict_token_rewards(const RMOutput& out, const TokenBatch& batch);

/// ROC-AUC of P(2)/(P(1)+P(2)) separating label-2 from label-1 valid tokens.
/// Absent when the valid set lacks one of the two classes.
std::optional<double> rm_auc(const RMOutput& out, const TokenBatch& batch, const ValidSet& vs);
std::optional<double> auc_from_scores(std::span<const double> positive,
                                      std::span<const double> negative);

/// Fraction of valid, non-masked-label tokens whose argmax equals the label.
double token_accuracy(const RMOutput& out, const TokenBatch& batch, const ValidSet& vs);

TokenBatch slice_rows(const TokenBatch& batch, std::span<const std::size_t> rows);

struct RMCurveRow {
  int step = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  std::optional<double> auc;
  std::uint64_t seed = 0;
};

struct RMTrainResult {
  RMParams params;
  std::vector<RMCurveRow> curve;
  double eval_local = 0.0;
  double eval_global_argmax = 0.0;
  double eval_total = 0.0;
  std::optional<double> eval_auc;
  double eval_accuracy = 0.0;
};

/// Plain SGD on minibatches of rows drawn from `train`; `eval` is scored
/// every cfg.eval_every steps and at the end. Throws TrainingDiverged on a
/// non-finite loss.
RMTrainResult train_reward_model(const TokenBatch& train, const TokenBatch& eval,
                                 const RMTrainConfig& cfg,
                                 const nn::MlpDims& dims = nn::MlpDims{});

struct LengthPenaltyConfig {
  double alpha = 1.0;
  int suggested_length = 4;
};

/// 1 / (1 + exp(alpha * (l - sl) - 6)) for the 1-indexed response position l.
double lwp(int position, const LengthPenaltyConfig& cfg);

/// rewards[i] is the reward of response position i + 1.
std::vector<double> apply_length_penalty(std::span<const double> rewards,
                                         const LengthPenaltyConfig& cfg);

}  // namespace tppo
