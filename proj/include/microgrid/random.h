#pragma once

#include <cstdint>
#include <random>

namespace microgrid {

// SplitMix64 finalizer. Used as a stateless hash so that a value keyed by
// (seed, channel, index) never depends on query order.
constexpr std::uint64_t Mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Top 53 bits mapped onto [0, 1).
constexpr double BitsToUnit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double CounterUniform(std::uint64_t seed, std::uint64_t channel,
                             std::uint64_t index, double lo, double hi) {
  const std::uint64_t key = Mix64(Mix64(Mix64(seed) ^ channel) ^ index);
  return lo + (hi - lo) * BitsToUnit(key);
}

// Sequential stream with a platform-independent output sequence
// (std::uniform_real_distribution is implementation-defined).
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : engine_(Mix64(seed)) {}
  double Next(double lo, double hi) { return lo + (hi - lo) * BitsToUnit(engine_()); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace microgrid
