#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "cfcp/types.hpp"

namespace cfcp {

inline std::uint64_t sm64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Hash addressed by (seed, index). The value at a given address never
/// depends on evaluation order, so draws stay reproducible under any
/// parallel schedule.
inline std::uint64_t hash_at(std::uint64_t seed, std::uint64_t index) {
  return sm64_mix(seed + (index + 1) * 0x9e3779b97f4a7c15ULL);
}

/// Uniform double in [0,1) addressed by (seed, index).
inline double uniform_at(std::uint64_t seed, std::uint64_t index) {
  return static_cast<double>(hash_at(seed, index) >> 11) * 0x1.0p-53;
}

/// Derives an independent stream seed from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return sm64_mix(seed ^ sm64_mix(stream * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
}

/// Sequential RNG with explicitly defined mappings from generator words to
/// uniforms, normals, bounded ints and shuffles. std::mt19937_64 output is
/// fully specified by the standard; the distribution mappings here are
/// spelled out so seeded results are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform in [0,1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (two uniforms per draw).
  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return r % n;
  }

  /// Fisher-Yates shuffle.
  template <typename V>
  void shuffle(V& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Index drawn with probability proportional to weights (nonnegative,
  /// positive total). Returns the last positive-weight index on fp spill.
  Index sample_discrete(const Vector& weights) {
    const double total = weights.sum();
    double r = uniform() * total;
    Index last_positive = 0;
    for (Index i = 0; i < weights.size(); ++i) {
      if (weights[i] > 0.0) last_positive = i;
      r -= weights[i];
      if (r < 0.0 && weights[i] > 0.0) return i;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace cfcp
