#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

namespace xaidet {

// Deterministic PRNG used everywhere randomness is needed. Standard-library
// distributions are implementation-defined, so sampling is done by hand to
// keep runs bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    // SplitMix64 expansion of the seed into PCG32 state/stream.
    std::uint64_t z = seed;
    state_ = splitmix(z);
    inc_ = (splitmix(z) << 1u) | 1u;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint64_t next_u64() {
    return (static_cast<std::uint64_t>(next_u32()) << 32) | next_u32();
  }

  // Uniform in [0,1).
  float uniform() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint32_t below(std::uint32_t n) {
    std::uint32_t threshold = (-n) % n;
    for (;;) {
      std::uint32_t r = next_u32();
      if (r >= threshold) return r % n;
    }
  }

  int range(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(static_cast<std::uint32_t>(hi_inclusive - lo + 1)));
  }

  bool coin() { return (next_u32() & 1u) != 0; }

  // Box-Muller; one value per call, cached pair discarded for simplicity.
  float normal() {
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.28318530717958647692f * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(static_cast<std::uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  static std::uint64_t splitmix(std::uint64_t& x) {
    x += 0x9E3779B97f4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

// Forks a child seed from a root seed and a stage tag, so one root seed
// reproduces a whole experiment while stages stay decorrelated.
inline std::uint64_t fork_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t x = root ^ h;
  return Rng::splitmix(x);
}

inline std::uint64_t fork_seed(std::uint64_t root, std::string_view tag, std::uint64_t index) {
  std::uint64_t x = fork_seed(root, tag) ^ (0x632BE59BD9B4E019ULL * (index + 1));
  return Rng::splitmix(x);
}

}  // namespace xaidet
