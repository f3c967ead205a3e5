#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tvin {

/// Deterministic RNG for everything that must reproduce byte-for-byte.
/// std::mt19937 output is pinned by the standard; the distributions are not,
/// so floats and bounded ints are derived from raw draws here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

  uint32_t next_u32() { return gen_(); }

  /// Uniform in [0,1) with 24 bits of mantissa.
  float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

  /// Uniform in [lo,hi).
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0,n), rejection-sampled to avoid modulo bias.
  int uniform_int(int n) {
    const uint32_t un = static_cast<uint32_t>(n);
    const uint32_t limit = UINT32_MAX - UINT32_MAX % un;
    uint32_t x;
    do {
      x = next_u32();
    } while (x >= limit);
    return static_cast<int>(x % un);
  }

  /// Fisher-Yates; std::shuffle is implementation-defined so not used.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

  /// Independent child stream; used to give each map/epoch its own seed.
  Rng fork() { return Rng((static_cast<uint64_t>(next_u32()) << 32) | next_u32()); }

 private:
  std::mt19937 gen_;
};

}  // namespace tvin
