#pragma once

#include <cstddef>
#include <cstdint>

namespace failcast {

// SplitMix64 generator (Steele, Lea & Flood). The whole state is one 64-bit
// word and every output is a fixed integer function of it, so sequences are
// identical on every platform. Floating-point draws are derived from the
// integer stream with exact power-of-two scaling.
class Rng {
 public:
  static constexpr std::uint64_t kIncrement = 0x9e3779b97f4a7c15ULL;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform in [0, 1) with 24 random bits; exactly representable as float.
  float uniform_float();
  // Uniform integer in [0, n). n must be > 0.
  std::size_t below(std::size_t n);
  // Standard normal via Box-Muller (one output per call).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// SplitMix64 finalizer applied to a single word.
std::uint64_t mix64(std::uint64_t z);

// Derives an independent seed for a numbered stream of a parent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace failcast
