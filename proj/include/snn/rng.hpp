#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace snn {

// splitmix64 finalizer; used to whiten seed material before it reaches the engine.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  x = x ^ (x >> 31);
  return x;
}

// Derive an independent stream seed from (base seed, purpose tag, indices).
// Every consumer of randomness names its purpose so streams never collide
// and reordering one consumer cannot perturb another.
inline uint64_t derive_seed(uint64_t base, std::string_view tag,
                            std::initializer_list<uint64_t> indices = {}) {
  uint64_t h = mix64(base ^ 0x5851f42d4c957f2dull);
  for (char c : tag) h = mix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
  for (uint64_t v : indices) h = mix64(h ^ v);
  return h;
}

// Deterministic random stream. Wraps mt19937_64 with explicitly specified
// derivations for floats/ints so results are identical across platforms
// (std::uniform_real_distribution makes no cross-vendor guarantee).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(mix64(seed)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n). n must be > 0. Rejection sampling keeps it unbiased.
  uint64_t next_below(uint64_t n) {
    const uint64_t limit = ~uint64_t{0} - ~uint64_t{0} % n;
    uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  // Uniform in [0, 1) with 53 random bits, same bits on every platform.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  float uniform_float(float lo, float hi) {
    return static_cast<float>(uniform(lo, hi));
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Fisher-Yates, deterministic given the stream state.
  template <typename Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace snn
