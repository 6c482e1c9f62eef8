#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace star {

// xoshiro256** seeded through SplitMix64. All draws are defined here rather
// than through <random> distributions so sequences replay bit-for-bit on any
// standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  // Independent stream keyed by a parent seed and a path of indices, e.g.
  // (seed, epoch, view).
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, bound), unbiased.
  std::uint64_t below(std::uint64_t bound);
  // Standard normal (Box-Muller, one value per call).
  double normal();

  // k distinct indices from [0, n), uniformly without replacement, in draw
  // order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace star
