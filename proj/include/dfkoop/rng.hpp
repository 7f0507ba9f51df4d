#pragma once

#include <cstdint>
#include <initializer_list>

namespace dfkoop {

/// Counter-based generator: the n-th draw is a pure function of (key, n), so
/// streams are reproducible bit-for-bit on every platform. Distributions are
/// implemented here rather than via <random> because the standard leaves
/// their algorithms unspecified.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x243F6A8885A308D3ULL)) {}

  /// Independent stream derived from a seed and a path of integers,
  /// e.g. derive(seed, {run, purpose, attempt}).
  static CounterRng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t k = mix(seed ^ 0x243F6A8885A308D3ULL);
    for (std::uint64_t p : path) {
      k = mix(k ^ mix(p + 0x9E3779B97F4A7C15ULL));
    }
    CounterRng rng(0);
    rng.key_ = k;
    return rng;
  }

  std::uint64_t next_u64() {
    const std::uint64_t x = key_ + (counter_++) * 0x9E3779B97F4A7C15ULL;
    return mix(x);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) {
    const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  [[nodiscard]] std::uint64_t counter() const { return counter_; }

  /// splitmix64 finalizer.
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dfkoop
