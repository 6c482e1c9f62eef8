#include "star/contrastive.hpp"

#include <cmath>
#include <limits>

#include "star/error.hpp"

namespace star {

std::vector<std::size_t> cross_view_partners(std::size_t n) {
  std::vector<std::size_t> p(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = i + n;
    p[i + n] = i;
  }
  return p;
}

std::vector<std::size_t> adjacent_partners(std::size_t pairs) {
  std::vector<std::size_t> p(2 * pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    p[2 * i] = 2 * i + 1;
    p[2 * i + 1] = 2 * i;
  }
  return p;
}

void validate_partners(std::span<const std::size_t> partner, std::size_t count) {
  require(partner.size() == count, "partner map size does not match the batch");
  require(count >= 2, "contrastive batch needs at least two rows");
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = partner[i];
    require(j < count && j != i && partner[j] == i,
            "partner map is not a fixed-point-free involution at row " + std::to_string(i));
  }
}

namespace {
void check_temperature(double t) {
  require(t > 0.0 && std::isfinite(t), "temperature must be positive, got " + std::to_string(t));
}
}  // namespace

void validate(const ContrastiveBatch& batch) {
  check_temperature(batch.temperature);
  if (!all_finite(batch.embeddings)) fail(ErrorCode::numeric, "contrastive embeddings contain NaN or infinity");
  validate_partners(batch.partner, batch.embeddings.rows());
  for (std::size_t r = 0; r < batch.embeddings.rows(); ++r) {
    const auto row = batch.embeddings.row(r);
    require(std::abs(std::sqrt(dot(row, row)) - 1.0) <= 1e-6,
            "contrastive embedding row " + std::to_string(r) + " is not unit-norm");
  }
}

Matrix similarity_matrix(const Matrix& embeddings) { return matmul_nt(embeddings, embeddings); }

double infonce_from_similarity(const Matrix& similarity, std::span<const std::size_t> partner,
                               double temperature) {
  check_temperature(temperature);
  const std::size_t count = similarity.rows();
  require(similarity.cols() == count, "similarity matrix must be square");
  if (!all_finite(similarity)) fail(ErrorCode::numeric, "similarity matrix contains NaN or infinity");
  validate_partners(partner, count);

  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count; ++k)
      if (k != i) peak = std::max(peak, similarity(i, k) / temperature);
    double acc = 0.0;
    for (std::size_t k = 0; k < count; ++k)
      if (k != i) acc += std::exp(similarity(i, k) / temperature - peak);
    const double lse = peak + std::log(acc);
    total += lse - similarity(i, partner[i]) / temperature;
  }
  return total / static_cast<double>(count);
}

double infonce_loss(const ContrastiveBatch& batch) {
  validate(batch);
  return infonce_from_similarity(similarity_matrix(batch.embeddings), batch.partner,
                                 batch.temperature);
}

namespace {

constexpr std::size_t kBlockRows = 256;

// Softmax over k != i of scaled similarities for rows [begin, begin +
// probs.rows()); entry (i, i) is left at 0. Returns each row's log-normalizer.
std::vector<double> softmax_block(const Matrix& e, std::size_t begin, double inv_t, Matrix& probs) {
  const std::size_t count = e.rows();
  std::vector<std::size_t> ids(probs.rows());
  for (std::size_t r = 0; r < ids.size(); ++r) ids[r] = begin + r;
  probs = matmul_nt(gather_rows(e, ids), e);
  std::vector<double> lse(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t i = ids[r];
    auto row = probs.row(r);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count; ++k) {
      row[k] *= inv_t;
      if (k != i) peak = std::max(peak, row[k]);
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      row[k] = k == i ? 0.0 : std::exp(row[k] - peak);
      acc += row[k];
    }
    for (double& v : row) v /= acc;
    lse[r] = peak + std::log(acc);
  }
  return lse;
}

}  // namespace

nn::Tensor infonce_loss(const nn::Tensor& embeddings, std::vector<std::size_t> partner,
                        double temperature) {
  check_temperature(temperature);
  const Matrix& e = embeddings.value();
  const std::size_t count = e.rows();
  validate_partners(partner, count);
  if (!all_finite(e)) fail(ErrorCode::numeric, "contrastive embeddings contain NaN or infinity");

  const double inv_t = 1.0 / temperature;
  const bool needs_grad = embeddings.requires_grad();
  // Softmax rows are kept for the backward pass up to this batch size;
  // larger batches recompute them row by row.
  const bool cache = needs_grad && count <= kInfoNceCacheRows;
  Matrix probs_cache = cache ? Matrix(count, count) : Matrix();
  double total = 0.0;
  for (std::size_t begin = 0; begin < count; begin += kBlockRows) {
    Matrix block(std::min(kBlockRows, count - begin), count);
    const auto lse = softmax_block(e, begin, inv_t, block);
    for (std::size_t r = 0; r < block.rows(); ++r) {
      const std::size_t i = begin + r;
      total += lse[r] - dot(e.row(i), e.row(partner[i])) * inv_t;
    }
    if (cache)
      std::copy(block.values().begin(), block.values().end(),
                probs_cache.values().begin() + static_cast<std::ptrdiff_t>(begin * count));
  }
  const double loss = total / static_cast<double>(count);

  auto node = std::make_shared<nn::Node>();
  node->value = Matrix(1, 1, loss);
  node->is_leaf = false;
  node->requires_grad = needs_grad;
  if (needs_grad) {
    auto en = embeddings.node();
    node->parents = {en};
    node->backward_fn = [en, partner = std::move(partner), inv_t,
                         cached = std::move(probs_cache)](nn::Node& self) mutable {
      const Matrix& e = en->value;
      const std::size_t count = e.rows();
      // dL/ds_ik = scale * (p_ik - [k == partner(i)]); s_ik = e_i . e_k feeds
      // both e_i and e_k, so dE = (G + G^T) E.
      const double scale = self.grad(0, 0) * inv_t / static_cast<double>(count);
      Matrix grad;
      if (!cached.empty()) {
        Matrix g = std::move(cached);
        for (std::size_t i = 0; i < count; ++i) g(i, partner[i]) -= 1.0;
        for (double& v : g.values()) v *= scale;
        grad = matmul(g, e);
        grad += matmul_tn(g, e);
      } else {
        grad = Matrix(count, e.cols());
        for (std::size_t begin = 0; begin < count; begin += kBlockRows) {
          Matrix g(std::min(kBlockRows, count - begin), count);
          softmax_block(e, begin, inv_t, g);
          std::vector<std::size_t> ids(g.rows());
          for (std::size_t r = 0; r < g.rows(); ++r) {
            ids[r] = begin + r;
            g(r, partner[begin + r]) -= 1.0;
          }
          for (double& v : g.values()) v *= scale;
          // Rows of the block feed their own gradient and every column's.
          const Matrix own = matmul(g, e);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < e.cols(); ++c) grad(begin + r, c) += own(r, c);
          grad += matmul_tn(g, gather_rows(e, ids));
        }
      }
      if (!en->grad.same_shape(en->value)) en->grad = Matrix(e.rows(), e.cols());
      en->grad += grad;
    };
  }
  return nn::Tensor(std::move(node));
}

}  // namespace star
