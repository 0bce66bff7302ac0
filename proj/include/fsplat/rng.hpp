#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fsplat {

// Purpose-keyed random streams. Every stochastic consumer derives its own
// stream from (seed, purpose, counter), so e.g. densification draws never
// shift the shape-noise sequence and training can resume from a checkpoint
// without serialized generator state.
enum class RngStream : std::uint64_t {
  ViewSampling = 1,
  ShapeNoise = 2,
  Relocation = 3,
  CloneOffset = 4,
  Init = 5,
  Synth = 6,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Avalanche the seed so nearby seeds give unrelated sequences.
    next_u64();
  }

  static Rng stream(std::uint64_t seed, RngStream purpose, std::uint64_t counter = 0) {
    std::uint64_t s = seed;
    s = mix(s + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(purpose) + 1));
    s = mix(s + 0x9e3779b97f4a7c15ULL * (counter + 1));
    return Rng(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller, caching the spare draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * std::numbers::pi * u2;
    spare_ = mag * std::sin(ang);
    has_spare_ = true;
    return mag * std::cos(ang);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fsplat
