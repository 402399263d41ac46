#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace ignn {

// Splittable counter-style RNG built on splitmix64. Child streams made with
// split() depend only on the parent state at the time of the split, so the
// same (seed, tag-path) always names the same stream regardless of platform.
class SplitRng {
 public:
  explicit SplitRng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53-bit mantissa
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased-enough integer in [0, n) via 128-bit multiply-shift
  uint64_t below(uint64_t n) {
    return uint64_t((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Box-Muller; consumes exactly two uniforms per call
  double normal() {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  SplitRng split(std::string_view tag) const {
    uint64_t h = 0xcbf29ce484222325ull ^ state_;
    for (char c : tag) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    return SplitRng(mix(h));
  }

  SplitRng split(uint64_t salt) const {
    return SplitRng(mix(state_ ^ (salt + 0x9E3779B97F4A7C15ull)));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t mix(uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ull;
    x ^= x >> 33;
    return x;
  }

  uint64_t state_;
};

}  // namespace ignn
