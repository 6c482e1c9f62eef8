#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "star/matrix.hpp"
#include "star/nn.hpp"

namespace star {

inline constexpr double kDefaultTemperature = 0.5;

// 2n row-normalized embeddings with a positive partner for every row.
struct ContrastiveBatch {
  Matrix embeddings;
  std::vector<std::size_t> partner;
  double temperature = kDefaultTemperature;
};

// partner(i) = i + n and back: rows [0, n) are view one, [n, 2n) view two.
std::vector<std::size_t> cross_view_partners(std::size_t n);
// partner(2i) = 2i + 1: rows come in adjacent positive pairs.
std::vector<std::size_t> adjacent_partners(std::size_t pairs);

// Throws unless `partner` is a fixed-point-free involution over `count` rows.
void validate_partners(std::span<const std::size_t> partner, std::size_t count);
void validate(const ContrastiveBatch& batch);

Matrix similarity_matrix(const Matrix& embeddings);

// -(1/2n) sum_i log( exp(s_i,p(i)/tau) / sum_{k != i} exp(s_ik/tau) ),
// evaluated with log-sum-exp.
double infonce_from_similarity(const Matrix& similarity, std::span<const std::size_t> partner,
                               double temperature);
double infonce_loss(const ContrastiveBatch& batch);

inline constexpr std::size_t kInfoNceCacheRows = 4096;

// Differentiable form used in training. Rows are expected to be normalized
// already; no similarity matrix is materialized.
nn::Tensor infonce_loss(const nn::Tensor& embeddings, std::vector<std::size_t> partner,
                        double temperature);

}  // namespace star
