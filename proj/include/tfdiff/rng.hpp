#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace tfdiff {

// Deterministic PRNG used everywhere randomness is needed: xoshiro256++
// seeded through splitmix64, normal deviates via Box-Muller. All draws are
// reproducible from (seed, stage, index) substreams across platforms, which
// std::mt19937 + std::normal_distribution would not guarantee.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal; one deviate per call, no cached spare
  double next_gaussian() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // integer in [0, n)
  uint64_t next_below(uint64_t n) {
    // multiply-shift; bias is negligible for n << 2^64 and keeps the stream portable
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Named substream derivation: hash (seed, stage, index) so any pipeline stage
// can be re-run in isolation with the same draws.
inline uint64_t substream_seed(uint64_t seed, std::string_view stage, uint64_t index = 0) {
  uint64_t sm = seed ^ fnv1a64(stage);
  uint64_t a = splitmix64(sm);
  sm ^= index * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull;
  uint64_t b = splitmix64(sm);
  return a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
}

inline Rng substream(uint64_t seed, std::string_view stage, uint64_t index = 0) {
  return Rng(substream_seed(seed, stage, index));
}

}  // namespace tfdiff
