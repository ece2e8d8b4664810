#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace stagdid {

// All randomness in the library flows through this header. Draw functions are
// written out by hand (instead of std:: distributions) so that a given seed
// produces the same stream on every platform and standard library.

inline std::uint64_t mix64(std::uint64_t z) {
  // SplitMix64 finalizer.
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Maps (seed, stream) to an independent substream seed. Replicate r of a
// bootstrap or simulation loop seeds its own engine with derive_stream(seed, r),
// so results do not depend on how replicates are scheduled across threads.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed + 0x9E3779B97F4A7C15ull) + stream * 0xBF58476D1CE4E5B9ull + 0x94D049BB133111EBull);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the second deviate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform integer on [0, n) by multiply-shift; bias is < 2^-64 per draw,
  // far below anything the bootstrap could notice.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits()) * static_cast<unsigned __int128>(n)) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  // mt19937_64 seeding and output are pinned by the standard, which keeps
  // streams portable across implementations.
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stagdid
