#pragma once

#include <cmath>
#include <cstdint>

namespace minimt {

// All randomness in this project flows through these hand-rolled generators
// so that corpora, training trajectories and reports are bit-reproducible
// across standard library implementations. Two flavors:
//   Rng          - sequential splitmix64 stream for generators.
//   counter_*    - stateless counter hashes keyed by (seed, step, slot, i),
//                  used where order-independence matters (batch sampling,
//                  dropout masks), so a resumed run replays the same draws.

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t mix_u64(uint64_t a, uint64_t b) {
  uint64_t s = a + 0x9e3779b97f4a7c15ull * (b + 1);
  return splitmix64(s);
}

inline uint64_t counter_hash(uint64_t seed, uint64_t a, uint64_t b = 0,
                             uint64_t c = 0) {
  return mix_u64(mix_u64(mix_u64(seed, a), b), c);
}

inline double u64_to_unit(uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

inline double counter_uniform(uint64_t seed, uint64_t a, uint64_t b = 0,
                              uint64_t c = 0) {
  return u64_to_unit(counter_hash(seed, a, b, c));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double next_unit() { return u64_to_unit(next_u64()); }

  // Uniform integer in [0, n). Lemire's method, unbiased.
  uint64_t next_below(uint64_t n) {
    if (n <= 1) return 0;
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t t = (0ull - n) % n;  // 2^64 mod n
      while (lo < t) {
        m = static_cast<__uint128_t>(next_u64()) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  // Inclusive integer range.
  int64_t next_range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Poisson via Knuth's method; fine for small means.
  int next_poisson(double mean) {
    double l = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= next_unit();
    } while (p > l);
    return k - 1;
  }

  template <typename T>
  void shuffle(T* data, size_t n) {
    for (size_t i = n; i > 1; --i) {
      size_t j = next_below(i);
      std::swap(data[i - 1], data[j]);
    }
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace minimt
