#pragma once

#include <cstdint>
#include <random>

namespace nkca {

/// Deterministic random stream.
///
/// The stream is std::mt19937_64 seeded through splitmix64. Uniforms use the
/// top 53 bits of each engine output; normals come from
/// std::normal_distribution over the same engine. Streams are bit-identical
/// for a given seed on one platform/standard library.
///
/// An Rng is single-owner. Parallel work derives child streams with
/// `split(index)`, which depends only on (seed, index).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  /// Uniform in [0, 1).
  double uniform();
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next_u64() { return engine_(); }

  /// Independent child stream, a pure function of (seed, index).
  Rng split(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

inline Rng seed_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace nkca
