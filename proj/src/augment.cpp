#include "star/augment.hpp"

#include <algorithm>
#include <cmath>

#include "star/error.hpp"

namespace star {

namespace {
void check_ratio(double ratio, const char* what) {
  require(ratio >= 0.0 && ratio <= kMaxAugmentRatio,
          std::string(what) + " must lie in [0, 0.4], got " + std::to_string(ratio));
}
}  // namespace

void validate(const AugmentConfig& cfg) {
  check_ratio(cfg.edge_drop_ratio, "edge_drop_ratio");
  check_ratio(cfg.feature_mask_ratio, "feature_mask_ratio");
}

std::size_t augment_count(double ratio, std::size_t count) {
  // nearbyint honours the default FE_TONEAREST mode: ties go to even.
  return static_cast<std::size_t>(std::nearbyint(ratio * static_cast<double>(count)));
}

Graph drop_edges(const Graph& g, double ratio, Rng& rng) {
  check_ratio(ratio, "edge drop ratio");
  const std::size_t m = g.edges.size();
  const std::size_t drop = augment_count(ratio, m);
  Graph out = g;
  if (drop == 0) return out;
  std::vector<char> removed(m, 0);
  for (std::size_t e : rng.sample_without_replacement(m, drop)) removed[e] = 1;
  out.edges.clear();
  out.edges.reserve(m - drop);
  for (std::size_t e = 0; e < m; ++e)
    if (!removed[e]) out.edges.push_back(g.edges[e]);
  return out;
}

Graph mask_features(const Graph& g, double ratio, Rng& rng) {
  check_ratio(ratio, "feature mask ratio");
  const std::size_t d = g.feature_dim();
  const std::size_t masked = augment_count(ratio, d);
  Graph out = g;
  if (masked == 0) return out;
  for (std::size_t c : rng.sample_without_replacement(d, masked))
    for (std::size_t r = 0; r < out.n; ++r) out.features(r, c) = 0.0;
  return out;
}

Graph augment_view(const Graph& g, const AugmentConfig& cfg, std::uint64_t epoch, std::uint64_t view) {
  validate(cfg);
  Rng edge_rng = Rng::stream(cfg.seed, {epoch, view, 0});
  Rng feat_rng = Rng::stream(cfg.seed, {epoch, view, 1});
  return mask_features(drop_edges(g, cfg.edge_drop_ratio, edge_rng), cfg.feature_mask_ratio, feat_rng);
}

}  // namespace star
