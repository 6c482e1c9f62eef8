#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "star/contrastive.hpp"
#include "star/graph.hpp"
#include "star/matrix.hpp"
#include "star/nn.hpp"

namespace star {

inline constexpr std::size_t kDefaultTopK = 20;

// For each anchor, k key-row ids ranked by descending dot product; ties go to
// the smaller id.
struct RetrievalIndex {
  std::size_t k = 0;
  std::vector<std::size_t> members;  // anchors x k, row-major
  std::vector<double> scores;        // same layout

  std::size_t anchors() const noexcept { return k == 0 ? 0 : members.size() / k; }
  std::span<const std::size_t> of(std::size_t anchor) const {
    return {members.data() + anchor * k, k};
  }
  std::span<const double> scores_of(std::size_t anchor) const {
    return {scores.data() + anchor * k, k};
  }
};

// Member ids of the two halves of one anchor's retrieval set.
struct SetPair {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

// sum-pool followed by an MLP.
struct DeepSetsEncoder {
  nn::MlpProjector mlp;
};

// Any 1 <= k <= keys.rows(); the anchor's own id may be retrieved.
RetrievalIndex topk_retrieve(const Matrix& queries, const Matrix& keys, std::size_t k);
// Cross-view form used in training: k must be even and 2 <= k <= n.
RetrievalIndex topk_cross_retrieve(const Matrix& h1, const Matrix& h2, std::size_t k);

// Rank-interleaved split: ranks 1, 3, 5, ... go first; 2, 4, 6, ... second.
SetPair split_halves(const RetrievalIndex& index, std::size_t anchor);

Matrix deepsets_encode(const DeepSetsEncoder& enc, const Matrix& members);
// Differentiable batch form: one output row per group of `source` rows.
nn::Tensor deepsets_encode(const DeepSetsEncoder& enc, const nn::Tensor& source,
                           std::vector<std::vector<std::size_t>> groups);

// Normalized set embeddings (2 per anchor, adjacent rows are positives) and
// their partner map.
struct SetBatch {
  nn::Tensor embeddings;
  std::vector<std::size_t> partner;
};

// Anchors are `anchor_view` rows; members are retrieved from and gathered out
// of `member_view`, so gradients reach the member embeddings.
SetBatch set_branch_forward(const Matrix& anchor_view, const nn::Tensor& member_view,
                            const DeepSetsEncoder& set_fn, const nn::MlpProjector& projector,
                            std::size_t k);

ContrastiveBatch build_set_batch(const Matrix& h1, const Matrix& h2, const DeepSetsEncoder& set_fn,
                                 const nn::MlpProjector& projector, std::size_t k,
                                 double temperature);

struct FinalEmbeddings {
  Matrix instance;  // H~ = A^l X W
  Matrix set;       // S~ (empty when the set block is disabled)
  Matrix z;         // H~ || S~
  RetrievalIndex index;
};

FinalEmbeddings build_final_embeddings(const Graph& g, const nn::Linear& encoder,
                                       const DeepSetsEncoder* set_fn, std::size_t layers,
                                       std::size_t k);

// Fraction of (anchor, member) pairs sharing a label, self matches excluded.
double retrieval_purity(const RetrievalIndex& index, std::span<const int> labels);

}  // namespace star
