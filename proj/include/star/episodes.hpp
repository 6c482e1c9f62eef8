#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "star/random.hpp"

namespace star {

struct ClassSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Pairwise disjoint, no repeats, every class present in `labels`.
void validate(const ClassSplit& split, std::span<const int> labels);

// One N-way K-shot task. `*_classes` hold positions into `classes` (0..N-1);
// `classes` holds the original label ids.
struct Episode {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t q_query = 0;
  std::vector<int> classes;
  std::vector<std::size_t> support_ids;
  std::vector<std::size_t> support_classes;
  std::vector<std::size_t> query_ids;
  std::vector<std::size_t> query_classes;
};

inline constexpr std::size_t kDefaultQueryPerClass = 10;

Episode sample_episode(std::span<const int> labels, std::span<const int> classes, std::size_t n_way,
                       std::size_t k_shot, std::size_t q_query, Rng& rng);

}  // namespace star
