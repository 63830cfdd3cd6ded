#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dhpr {

// Counter-based 64-bit PRNG (SplitMix64 output function applied to
// key + n * GAMMA). The stream for a given seed is a pure function of
// the draw index, so generated problem data is reproducible across
// platforms and languages that implement the same two constants:
//
//   GAMMA = 0x9E3779B97F4A7C15
//   mix(x) = x ^= x>>30, x *= 0xBF58476D1CE4E5B9,
//            x ^= x>>27, x *= 0x94D049BB133111EB, x ^= x>>31
//
// Uniform doubles take the top 53 bits of a draw; normal deviates use
// the Marsaglia polar method (two uniforms per attempt, second value
// cached).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t x = key_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("CounterRng::below: n must be positive");
    // Rejection to avoid modulo bias.
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal deviate, Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double r = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * r;
    has_spare_ = true;
    return u * r;
  }

  /// First k entries of a Fisher-Yates shuffle of {0, ..., n-1}.
  std::vector<std::size_t> partial_shuffle(std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dhpr
