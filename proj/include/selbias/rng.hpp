#pragma once

#include <cstdint>
#include <limits>

namespace selbias {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Splittable seeded generator. A stream is addressed by (seed, index), so
// any item or resample can derive its randomness without touching shared
// state; results do not depend on evaluation order.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(mix64(seed ^ mix64(stream + 0x9E3779B97F4A7C15ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Child stream keyed by `index`; the parent is not advanced.
  Rng split(std::uint64_t index) const { return Rng(state_, index); }

 private:
  std::uint64_t state_;
};

// Stable key for a named sub-experiment so different stages of one run use
// disjoint streams.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t salt) {
  return mix64(seed * 0xD1B54A32D192ED03ULL + salt);
}

}  // namespace selbias
