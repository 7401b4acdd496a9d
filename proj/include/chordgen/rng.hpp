#pragma once

#include <cstdint>
#include <random>

namespace chordgen {

/// std::mt19937_64 with explicit draw formulas so seeded runs stay
/// bit-reproducible across standard libraries (std::uniform_*
/// distributions make no such guarantee).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) { return static_cast<int>(engine_() % static_cast<uint64_t>(n)); }

  /// Uniform double in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Derive an independent child seed; deterministic given the parent
  /// state.
  uint64_t fork_seed() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace chordgen
