#pragma once

#include <cstdint>
#include <vector>

#include "cmt/tensor.hpp"

namespace cmt {

/// Deterministic seeded random source. The generator is SplitMix64
/// (Steele/Lea/Flood weyl-sequence mixer), chosen because the algorithm is
/// short enough to replicate exactly in any language:
///
///   state += 0x9E3779B97F4A7C15
///   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   output = z ^ (z >> 31)
///
/// Derived draws are fixed on top of that stream:
///   uniform()      = (next_u64() >> 11) * 2^-53, in [0, 1)
///   uniform_int(n) = next_u64() % n
///   normal()       = Box-Muller cosine branch, consuming exactly two u64 draws
/// Identical seed therefore means an identical sample stream on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t seed_state() const { return state_; }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n >= 1.
  std::int64_t uniform_int(std::int64_t n);

  /// Gaussian sample; std >= 0 (std 0 degenerates to the mean).
  double normal(double mean = 0.0, double stddev = 1.0);

  Tensor normal_tensor(const Shape& shape, double mean, double stddev);

  /// Fisher-Yates from the back, one uniform_int per position.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      std::int64_t j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace cmt
