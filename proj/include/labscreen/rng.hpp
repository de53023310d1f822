#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace labscreen {

/// Seeded generator with a pinned draw algorithm ("labscreen-draw-v1").
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are not, so every draw is derived
/// here from raw engine words:
///   uniform01       (word >> 11) * 2^-53
///   uniform_index   rejection on the largest multiple of n below 2^64, then word % n
///   normal          Box-Muller, cosine branch only, one pair of uniforms per draw
/// Integer draws (sampling, shuffles) are bit-exact on every platform.
/// Normal draws depend on libm log/cos and may differ in the last ulp.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "labscreen-draw-v1 (mt19937_64)";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::size_t uniform_index(std::size_t n);
  double normal(double mean = 0.0, double sd = 1.0);
  bool bernoulli(double p) { return uniform01() < p; }
  /// Index drawn with probability proportional to `weights`.
  std::size_t categorical(std::span<const double> weights);

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

/// Derive an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace labscreen
