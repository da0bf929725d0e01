#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace uwhdn {

// Deterministic random stream. All distributions are implemented on top of
// raw mt19937_64 output so sequences do not depend on the standard library's
// distribution internals. Child streams for parallel workers are derived from
// (seed, stream id) and never overlap by construction.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal (Box-Muller, two draws per sample, no cached state).
  double normal();
  // Uniform integer in [0, n); n must be > 0. Rejection sampling, no modulo bias.
  std::size_t index(std::size_t n);

  std::uint64_t seed() const { return seed_; }
  // Derived, disjoint stream for worker `stream`.
  Rng derive(std::uint64_t stream) const;
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

  // Engine state round-trip (textual, as specified for mersenne engines).
  std::string serialize_state() const;
  void restore_state(const std::string& text);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace uwhdn
