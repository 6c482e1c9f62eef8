#include "star/graph.hpp"

#include <algorithm>
#include <cmath>

#include "star/error.hpp"

namespace star {

std::vector<Edge> canonical_edges(std::vector<Edge> raw, std::size_t* dropped_self_loops) {
  std::size_t loops = 0;
  std::vector<Edge> out;
  out.reserve(raw.size());
  for (auto [a, b] : raw) {
    if (a == b) {
      ++loops;
      continue;
    }
    out.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (dropped_self_loops) *dropped_self_loops = loops;
  return out;
}

void validate(const Graph& g) {
  require(g.features.rows() == g.n, "feature rows (" + std::to_string(g.features.rows()) +
                                        ") do not match node count (" + std::to_string(g.n) + ")");
  require(all_finite(g.features), "graph features contain non-finite values");
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [a, b] = g.edges[e];
    require(a < b, "edge " + std::to_string(e) + " is not canonical (i < j)");
    require(b < g.n, "edge " + std::to_string(e) + " references node " + std::to_string(b) +
                         " outside [0, " + std::to_string(g.n) + ")");
    if (e > 0) require(g.edges[e - 1] < g.edges[e], "edge list is not sorted and unique");
  }
  if (g.labels) {
    require(g.labels->size() == g.n, "label count does not match node count");
  }
}

Graph make_graph(Matrix features, std::vector<Edge> edges, std::optional<std::vector<int>> labels,
                 std::string name) {
  Graph g;
  g.n = features.rows();
  g.features = std::move(features);
  g.edges = canonical_edges(std::move(edges));
  g.labels = std::move(labels);
  g.name = std::move(name);
  for (const auto& [a, b] : g.edges)
    require(b < g.n, "edge references node " + std::to_string(b) + " outside the graph");
  validate(g);
  return g;
}

double NormalizedAdjacency::at(std::size_t i, std::size_t j) const {
  const auto begin = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[i]);
  const auto end = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[i + 1]);
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return values[static_cast<std::size_t>(it - col_indices.begin())];
}

Matrix NormalizedAdjacency::to_dense() const {
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p) d(i, col_indices[p]) = values[p];
  return d;
}

NormalizedAdjacency normalize_adjacency(const Graph& g) {
  const std::size_t n = g.n;
  std::vector<std::size_t> degree(n, 1);  // self-loop
  for (const auto& [a, b] : g.edges) {
    ++degree[a];
    ++degree[b];
  }

  NormalizedAdjacency adj;
  adj.n = n;
  adj.row_offsets.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) adj.row_offsets[i + 1] = adj.row_offsets[i] + degree[i];
  adj.col_indices.resize(adj.row_offsets[n]);

  std::vector<std::size_t> cursor(adj.row_offsets.begin(), adj.row_offsets.end() - 1);
  for (std::size_t i = 0; i < n; ++i) adj.col_indices[cursor[i]++] = i;
  for (const auto& [a, b] : g.edges) {
    adj.col_indices[cursor[a]++] = b;
    adj.col_indices[cursor[b]++] = a;
  }

  adj.values.resize(adj.col_indices.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto begin = adj.col_indices.begin() + static_cast<std::ptrdiff_t>(adj.row_offsets[i]);
    auto end = adj.col_indices.begin() + static_cast<std::ptrdiff_t>(adj.row_offsets[i + 1]);
    std::sort(begin, end);
    for (std::size_t p = adj.row_offsets[i]; p < adj.row_offsets[i + 1]; ++p) {
      // integer degree product is exact, so (i,j) and (j,i) agree bitwise
      const std::size_t j = adj.col_indices[p];
      adj.values[p] = 1.0 / std::sqrt(static_cast<double>(degree[i] * degree[j]));
    }
  }
  return adj;
}

Matrix propagate(const NormalizedAdjacency& adj, const Matrix& x, std::size_t steps) {
  require(adj.n == x.rows(), "propagate: adjacency is " + std::to_string(adj.n) + "x" +
                                 std::to_string(adj.n) + " but features have " +
                                 std::to_string(x.rows()) + " rows");
  Matrix current = x;
  const std::size_t d = x.cols();
  for (std::size_t step = 0; step < steps; ++step) {
    Matrix next(x.rows(), d);
    for (std::size_t i = 0; i < adj.n; ++i) {
      double* out = next.data() + i * d;
      for (std::size_t p = adj.row_offsets[i]; p < adj.row_offsets[i + 1]; ++p) {
        const double w = adj.values[p];
        const double* in = current.data() + adj.col_indices[p] * d;
        for (std::size_t c = 0; c < d; ++c) out[c] += w * in[c];
      }
    }
    current = std::move(next);
  }
  return current;
}

}  // namespace star
