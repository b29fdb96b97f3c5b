#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace storyplan {

/// Seeded generator with platform-independent real draws. Named substreams
/// derive from one root seed so every stage and example replays on its own.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();

  Rng substream(std::string_view name) const { return Rng(derive_seed(seed_of_stream(), name)); }
  Rng substream(std::string_view name, std::uint64_t index) const;

  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

 private:
  std::uint64_t seed_of_stream() const;

  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace storyplan
