#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "star/matrix.hpp"

namespace star {

using Edge = std::pair<std::size_t, std::size_t>;

// Undirected attributed graph. Edges are canonical (i < j), unique and free of
// self-loops; self-loops only ever appear inside normalization.
struct Graph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  Matrix features;                     // n x d
  std::optional<std::vector<int>> labels;
  std::string name;

  std::size_t num_edges() const noexcept { return edges.size(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }
};

// Canonicalizes raw pairs: orders each as (min, max), sorts, drops duplicates.
// Self-loops are removed and counted in `dropped_self_loops` when non-null.
std::vector<Edge> canonical_edges(std::vector<Edge> raw, std::size_t* dropped_self_loops = nullptr);

// Builds a graph and checks every invariant; throws star::Error otherwise.
Graph make_graph(Matrix features, std::vector<Edge> edges,
                 std::optional<std::vector<int>> labels = std::nullopt, std::string name = {});

void validate(const Graph& g);

// Compressed sparse rows of D^-1/2 (A + I) D^-1/2. Column indices within a
// row are ascending.
struct NormalizedAdjacency {
  std::size_t n = 0;
  std::vector<std::size_t> row_offsets;
  std::vector<std::size_t> col_indices;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const;
  Matrix to_dense() const;
};

NormalizedAdjacency normalize_adjacency(const Graph& g);

// adj^steps * x, one sparse hop at a time.
Matrix propagate(const NormalizedAdjacency& adj, const Matrix& x, std::size_t steps);

}  // namespace star
