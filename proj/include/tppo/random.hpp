#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tppo {

/// Small deterministic generator (splitmix64 seeding + xoshiro256**).
/// Output is identical across platforms and standard libraries, which the
/// std distributions do not guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream for item `stream_id` of a run seeded with `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Index drawn with probability proportional to weights (need not sum to 1).
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(next_u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace tppo
