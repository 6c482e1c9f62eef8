#include "star/set_encoder.hpp"

#include <algorithm>
#include <numeric>

#include "star/error.hpp"

namespace star {

RetrievalIndex topk_retrieve(const Matrix& queries, const Matrix& keys, std::size_t k) {
  require(queries.cols() == keys.cols(), "retrieval embeddings have different widths");
  require(k >= 1 && k <= keys.rows(), "top-k requires 1 <= k <= " + std::to_string(keys.rows()) +
                                          ", got k = " + std::to_string(k));
  RetrievalIndex index;
  index.k = k;
  index.members.resize(queries.rows() * k);
  index.scores.resize(queries.rows() * k);

  std::vector<double> score(keys.rows());
  std::vector<std::size_t> order(keys.rows());
  for (std::size_t a = 0; a < queries.rows(); ++a) {
    const auto q = queries.row(a);
    for (std::size_t j = 0; j < keys.rows(); ++j) score[j] = dot(q, keys.row(j));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t x, std::size_t y) {
                        return score[x] > score[y] || (score[x] == score[y] && x < y);
                      });
    for (std::size_t m = 0; m < k; ++m) {
      index.members[a * k + m] = order[m];
      index.scores[a * k + m] = score[order[m]];
    }
  }
  return index;
}

RetrievalIndex topk_cross_retrieve(const Matrix& h1, const Matrix& h2, std::size_t k) {
  require(h1.rows() == h2.rows(), "views have different node counts");
  require(k % 2 == 0, "top-k for set construction must be even, got " + std::to_string(k));
  require(k >= 2 && k <= h2.rows(),
          "top-k must satisfy 2 <= k <= n = " + std::to_string(h2.rows()));
  return topk_retrieve(h1, h2, k);
}

SetPair split_halves(const RetrievalIndex& index, std::size_t anchor) {
  require(index.k % 2 == 0, "cannot split an odd retrieval set");
  require(anchor < index.anchors(), "anchor out of range");
  SetPair pair;
  const auto members = index.of(anchor);
  for (std::size_t m = 0; m < members.size(); ++m)
    (m % 2 == 0 ? pair.first : pair.second).push_back(members[m]);
  return pair;
}

Matrix deepsets_encode(const DeepSetsEncoder& enc, const Matrix& members) {
  require(members.rows() >= 1, "deepsets_encode: empty member set");
  Matrix pooled(1, members.cols());
  for (std::size_t r = 0; r < members.rows(); ++r)
    for (std::size_t c = 0; c < members.cols(); ++c) pooled(0, c) += members(r, c);
  return enc.mlp.forward(pooled);
}

nn::Tensor deepsets_encode(const DeepSetsEncoder& enc, const nn::Tensor& source,
                           std::vector<std::vector<std::size_t>> groups) {
  return enc.mlp.forward(nn::group_sum(source, std::move(groups)));
}

SetBatch set_branch_forward(const Matrix& anchor_view, const nn::Tensor& member_view,
                            const DeepSetsEncoder& set_fn, const nn::MlpProjector& projector,
                            std::size_t k) {
  const RetrievalIndex index = topk_cross_retrieve(anchor_view, member_view.value(), k);
  const std::size_t anchors = index.anchors();
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(2 * anchors);
  for (std::size_t a = 0; a < anchors; ++a) {
    SetPair pair = split_halves(index, a);
    groups.push_back(std::move(pair.first));
    groups.push_back(std::move(pair.second));
  }
  nn::Tensor sets = deepsets_encode(set_fn, member_view, std::move(groups));
  return {nn::l2_normalize_rows(projector.forward(sets)), adjacent_partners(anchors)};
}

ContrastiveBatch build_set_batch(const Matrix& h1, const Matrix& h2, const DeepSetsEncoder& set_fn,
                                 const nn::MlpProjector& projector, std::size_t k,
                                 double temperature) {
  SetBatch batch = set_branch_forward(h1, nn::constant(h2), set_fn, projector, k);
  return {batch.embeddings.value(), std::move(batch.partner), temperature};
}

FinalEmbeddings build_final_embeddings(const Graph& g, const nn::Linear& encoder,
                                       const DeepSetsEncoder* set_fn, std::size_t layers,
                                       std::size_t k) {
  FinalEmbeddings out;
  out.instance = encoder.forward(propagate(normalize_adjacency(g), g.features, layers));
  if (set_fn == nullptr) {
    out.z = out.instance;
    return out;
  }
  require(k >= 1 && k <= g.n, "top_k (" + std::to_string(k) + ") exceeds node count (" +
                                  std::to_string(g.n) + ")");
  out.index = topk_retrieve(out.instance, out.instance, k);
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(g.n);
  for (std::size_t a = 0; a < g.n; ++a) {
    const auto members = out.index.of(a);
    groups.emplace_back(members.begin(), members.end());
  }
  out.set = deepsets_encode(*set_fn, nn::constant(out.instance), std::move(groups)).value();
  out.z = hstack(out.instance, out.set);
  return out;
}

double retrieval_purity(const RetrievalIndex& index, std::span<const int> labels) {
  require(!labels.empty(), "retrieval purity needs node labels");
  require(labels.size() >= index.anchors(), "fewer labels than retrieval anchors");
  std::size_t same = 0, total = 0;
  for (std::size_t a = 0; a < index.anchors(); ++a) {
    for (std::size_t m : index.of(a)) {
      if (m == a) continue;
      require(m < labels.size(), "retrieved member has no label");
      ++total;
      if (labels[m] == labels[a]) ++same;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(same) / static_cast<double>(total);
}

}  // namespace star
