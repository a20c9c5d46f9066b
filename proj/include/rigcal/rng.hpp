#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rigcal {

/// Seedable random source with a fixed, platform-independent output.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distributions are implemented here rather than taken from
/// <random>, whose algorithms are implementation-defined:
///   uniform(): top 53 bits of one engine draw, scaled to [0, 1).
///   normal():  Box-Muller, cosine branch only, from two uniform() draws.
///
/// Substreams: Rng::stream(seed, tag, index) seeds the engine with
///   splitmix64(splitmix64(seed ^ fnv1a64(tag)) + index)
/// so each (tag, index) pair, e.g. ("depth_noise", camera id), gets an
/// independent, reproducible sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace rigcal
