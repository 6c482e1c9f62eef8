#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "star/matrix.hpp"
#include "star/nn.hpp"

namespace star {

struct ClassifierOptions {
  double l2 = 1e-3;
  std::size_t epochs = 500;
  double lr = 0.01;
};

struct LinearClassifier {
  Matrix weight;  // d x N
  Matrix bias;    // 1 x N
  double l2_penalty = 0.0;
  std::vector<double> loss_history;

  std::size_t classes() const noexcept { return weight.cols(); }
};

struct Prediction {
  std::vector<std::size_t> labels;
  Matrix probabilities;
};

Matrix one_hot(std::span<const std::size_t> labels, std::size_t classes);

// Mean soft-target cross-entropy of softmax(x W + b) against `targets`.
double soft_cross_entropy(const Matrix& logits, const Matrix& targets);
nn::Tensor soft_cross_entropy(const nn::Tensor& logits, const Matrix& targets);

// Full-batch Adam on mean soft cross-entropy + l2 * ||W||_F^2 from a zero
// initialization.
LinearClassifier train_soft(const Matrix& x, const Matrix& targets, const ClassifierOptions& options);

Matrix logits(const LinearClassifier& c, const Matrix& x);
// argmax of softmax, ties to the lowest class index.
Prediction predict(const LinearClassifier& c, const Matrix& x);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

}  // namespace star
