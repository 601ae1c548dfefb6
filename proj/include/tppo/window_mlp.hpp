#pragma once

// Shared trunk for the reward model and the policy: embeddings of the
// trailing k_ctx tokens are concatenated and passed through one tanh layer.
// Parameters live in a single flat vector addressed through a ParamLayout,
// which keeps optimizers, checkpoints and finite-difference checks generic.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tppo {

class Rng;

namespace nn {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

class ParamLayout {
 public:
  void add(std::string name, std::size_t rows, std::size_t cols);
  const Segment& at(const std::string& name) const;
  std::size_t total() const { return total_; }
  const std::vector<Segment>& segments() const { return segments_; }
  /// Human-readable coordinate, e.g. "trunk_w[3,17]".
  std::string describe(std::size_t flat_index) const;

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

struct MlpDims {
  int vocab = 64;
  int k_ctx = 8;
  int d_embed = 16;
  int hidden = 32;
  bool operator==(const MlpDims&) const = default;
  std::size_t input_width() const { return static_cast<std::size_t>(d_embed * k_ctx); }
};

/// Adds embedding, trunk_w and trunk_b to the layout.
void add_trunk(ParamLayout& layout, const MlpDims& dims);

/// Trailing `k` tokens of seq[0, end), left-padded with the pad id.
std::vector<int> trailing_window(std::span<const int> seq, std::size_t end, int k);

struct TrunkCache {
  std::vector<int> window;
  std::vector<double> hidden;  // tanh activations
};

/// Pad tokens contribute a zero embedding. Throws InvalidInput for ids
/// outside the vocabulary.
TrunkCache trunk_forward(std::span<const double> theta, const ParamLayout& layout,
                         const MlpDims& dims, std::vector<int> window);

/// Accumulates d(loss)/d(theta) for the trunk given d(loss)/d(hidden).
void trunk_backward(std::span<const double> theta, const ParamLayout& layout,
                    const MlpDims& dims, const TrunkCache& cache,
                    std::span<const double> d_hidden, std::span<double> grad);

/// Dense head: out = W h + b, with W stored [rows x hidden].
void head_forward(std::span<const double> theta, const Segment& w, const Segment& b,
                  std::span<const double> hidden, std::span<double> out);
void head_backward(std::span<const double> theta, const Segment& w, const Segment& b,
                   std::span<const double> hidden, std::span<const double> d_out,
                   std::span<double> grad, std::span<double> d_hidden);

/// Gaussian init for the trunk (pad embedding row zeroed); heads left at 0.
void init_trunk(std::span<double> theta, const ParamLayout& layout, const MlpDims& dims,
                Rng& rng);

void softmax_inplace(std::span<double> logits);
double log_sum_exp(std::span<const double> v);

bool all_finite(std::span<const double> v);

}  // namespace nn
}  // namespace tppo
