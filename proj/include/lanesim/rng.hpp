#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lanesim {

/// splitmix64 step; used to derive independent sub-stream seeds from one run seed.
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t sub_seed(uint64_t seed, uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream));
}

/// Deterministic RNG wrapper. mt19937_64 is fully specified by the standard and
/// all distribution transforms are hand-rolled here, so sequences are identical
/// across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n) {
    // Rejection sampling keeps the draw exactly uniform.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

  /// Poisson draw via Knuth's product method, chunked so exp(-lambda) never underflows.
  uint64_t poisson(double lambda) {
    uint64_t total = 0;
    while (lambda > 0.0) {
      const double chunk = lambda > 500.0 ? 500.0 : lambda;
      lambda -= chunk;
      const double limit = std::exp(-chunk);
      double prod = uniform01();
      uint64_t k = 0;
      while (prod >= limit) {
        ++k;
        prod *= uniform01();
      }
      total += k;
    }
    return total;
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace lanesim
