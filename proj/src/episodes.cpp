#include "star/episodes.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "star/error.hpp"

namespace star {

void validate(const ClassSplit& split, std::span<const int> labels) {
  const std::set<int> observed(labels.begin(), labels.end());
  std::set<int> seen;
  for (const auto* section : {&split.train, &split.val, &split.test}) {
    for (int c : *section) {
      require(seen.insert(c).second, "class " + std::to_string(c) +
                                         " appears more than once across the split");
      require(observed.count(c) == 1, "split class " + std::to_string(c) + " has no labelled nodes");
    }
  }
}

Episode sample_episode(std::span<const int> labels, std::span<const int> classes, std::size_t n_way,
                       std::size_t k_shot, std::size_t q_query, Rng& rng) {
  require(n_way >= 1 && k_shot >= 1 && q_query >= 1, "episode needs N, K, Q >= 1");
  require(classes.size() >= n_way, "split section has " + std::to_string(classes.size()) +
                                       " classes, fewer than N = " + std::to_string(n_way));

  std::vector<std::vector<std::size_t>> members(classes.size());
  for (std::size_t node = 0; node < labels.size(); ++node)
    for (std::size_t c = 0; c < classes.size(); ++c)
      if (labels[node] == classes[c]) members[c].push_back(node);
  for (std::size_t c = 0; c < classes.size(); ++c)
    require(members[c].size() >= k_shot + q_query,
            "class " + std::to_string(classes[c]) + " has " + std::to_string(members[c].size()) +
                " nodes, needs K + Q = " + std::to_string(k_shot + q_query));

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.q_query = q_query;
  const auto chosen = rng.sample_without_replacement(classes.size(), n_way);
  for (std::size_t way = 0; way < n_way; ++way) {
    const auto& pool = members[chosen[way]];
    ep.classes.push_back(classes[chosen[way]]);
    const auto picks = rng.sample_without_replacement(pool.size(), k_shot + q_query);
    for (std::size_t p = 0; p < picks.size(); ++p) {
      if (p < k_shot) {
        ep.support_ids.push_back(pool[picks[p]]);
        ep.support_classes.push_back(way);
      } else {
        ep.query_ids.push_back(pool[picks[p]]);
        ep.query_classes.push_back(way);
      }
    }
  }
  return ep;
}

}  // namespace star
