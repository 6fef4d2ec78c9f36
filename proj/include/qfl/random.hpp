#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace qfl {

// Explicit, copyable source of randomness. Every consumer takes a stream
// argument; nothing in the library touches global RNG state.
class RandomStream {
 public:
  using Engine = std::mt19937_64;

  explicit RandomStream(std::uint64_t seed) : engine_(mix(seed)) {}

  // Child stream for a (seed, tag...) path, e.g. (seed, round, client, purpose).
  // Distinct paths give statistically independent streams.
  static RandomStream derive(std::uint64_t seed,
                             std::initializer_list<std::uint64_t> path);

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::uint64_t next() { return engine_(); }

  Engine& engine() { return engine_; }

  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  Engine engine_;
};

}  // namespace qfl
