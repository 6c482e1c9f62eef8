#pragma once

#include <cstdint>

#include "star/graph.hpp"
#include "star/random.hpp"

namespace star {

inline constexpr double kMaxAugmentRatio = 0.4;

struct AugmentConfig {
  double edge_drop_ratio = 0.2;
  double feature_mask_ratio = 0.2;
  std::uint64_t seed = 0;
};

void validate(const AugmentConfig& cfg);

// round-half-to-even(ratio * count)
std::size_t augment_count(double ratio, std::size_t count);

// Removes exactly augment_count(ratio, m) edges chosen uniformly without
// replacement.
Graph drop_edges(const Graph& g, double ratio, Rng& rng);

// Zeroes augment_count(ratio, d) whole feature columns chosen uniformly.
Graph mask_features(const Graph& g, double ratio, Rng& rng);

// One stochastic view: edge drop followed by feature masking, both driven by
// the stream (seed, epoch, view).
Graph augment_view(const Graph& g, const AugmentConfig& cfg, std::uint64_t epoch, std::uint64_t view);

}  // namespace star
