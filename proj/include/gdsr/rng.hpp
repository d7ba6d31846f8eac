#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace gdsr {

/// Counter-based pseudo-random generator built on the SplitMix64 finalizer.
///
/// The k-th draw of stream s under seed x is
///   mix(x ^ mix(s * 0x9E3779B97F4A7C15)  +  (k+1) * 0x9E3779B97F4A7C15)
/// where mix is the 64-bit finalizer of Steele et al. (constants
/// 0xBF58476D1CE4E5B9, 0x94D049BB133111EB, shifts 30/27/31). Draws are pure
/// functions of (seed, stream, counter): skipping ahead, re-running, or
/// generating samples in parallel all yield identical values.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed, uint64_t stream = 0)
      : base_(seed ^ mix(stream * kGamma)) {}

  static constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  /// SplitMix64 output finalizer.
  static uint64_t mix(uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint64_t next_u64() { return mix(base_ + (++counter_) * kGamma); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], both inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  /// Standard Gaussian via Box-Muller (consumes two draws per call).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // Guard log(0); u1 is in [0,1).
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

 private:
  uint64_t base_;
  uint64_t counter_ = 0;
};

/// Derives a child seed from a root seed and a path of indices, so that
/// independent streams (per sample, per purpose) never collide.
inline uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> path) {
  uint64_t s = seed;
  for (uint64_t p : path) s = CounterRng::mix(s ^ CounterRng::mix(p));
  return s;
}

}  // namespace gdsr
