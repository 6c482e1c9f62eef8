#include "star/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "star/error.hpp"

namespace star {

Matrix one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Matrix y(labels.size(), classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    require(labels[r] < classes, "label " + std::to_string(labels[r]) + " out of range");
    y(r, labels[r]) = 1.0;
  }
  return y;
}

namespace {

// Row-wise softmax; returns the per-row log-normalizers.
std::vector<double> softmax_rows(const Matrix& logits, Matrix& probs) {
  probs = logits;
  std::vector<double> lse(logits.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double acc = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      acc += v;
    }
    for (double& v : row) v /= acc;
    lse[r] = peak + std::log(acc);
  }
  return lse;
}

void check_targets(const Matrix& targets, std::size_t rows, std::size_t classes) {
  require(targets.rows() == rows && targets.cols() == classes,
          "soft targets are " + targets.shape_string() + ", expected " + std::to_string(rows) + "x" +
              std::to_string(classes));
  require(all_finite(targets), "soft targets contain non-finite values");
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (double v : targets.row(r)) {
      require(v >= -1e-12, "soft target row " + std::to_string(r) + " has a negative entry");
      s += v;
    }
    require(std::abs(s - 1.0) <= 1e-6,
            "soft target row " + std::to_string(r) + " sums to " + std::to_string(s));
  }
}

}  // namespace

double soft_cross_entropy(const Matrix& logits, const Matrix& targets) {
  Matrix probs;
  const auto lse = softmax_rows(logits, probs);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r)
    for (std::size_t c = 0; c < logits.cols(); ++c)
      total += targets(r, c) * (lse[r] - logits(r, c));
  return total / static_cast<double>(logits.rows());
}

nn::Tensor soft_cross_entropy(const nn::Tensor& logits, const Matrix& targets) {
  require(logits.value().same_shape(targets), "soft_cross_entropy: logits and targets differ in shape");
  const double loss = soft_cross_entropy(logits.value(), targets);
  auto node = std::make_shared<nn::Node>();
  node->value = Matrix(1, 1, loss);
  node->is_leaf = false;
  node->requires_grad = logits.requires_grad();
  if (node->requires_grad) {
    auto ln = logits.node();
    node->parents = {ln};
    node->backward_fn = [ln, targets](nn::Node& self) {
      Matrix probs;
      softmax_rows(ln->value, probs);
      // d/dlogit = (softmax * rowsum(target) - target) / M
      const double scale = self.grad(0, 0) / static_cast<double>(probs.rows());
      Matrix g(probs.rows(), probs.cols());
      for (std::size_t r = 0; r < probs.rows(); ++r) {
        double mass = 0.0;
        for (double v : targets.row(r)) mass += v;
        for (std::size_t c = 0; c < probs.cols(); ++c)
          g(r, c) = scale * (probs(r, c) * mass - targets(r, c));
      }
      if (!ln->grad.same_shape(ln->value)) ln->grad = Matrix(g.rows(), g.cols());
      ln->grad += g;
    };
  }
  return nn::Tensor(std::move(node));
}

LinearClassifier train_soft(const Matrix& x, const Matrix& targets, const ClassifierOptions& options) {
  require(x.rows() >= 1, "train_soft: no training rows");
  require(all_finite(x), "train_soft: non-finite inputs");
  require(options.l2 >= 0.0, "train_soft: l2 penalty must be non-negative");
  require(targets.cols() >= 1, "train_soft: no classes");
  check_targets(targets, x.rows(), targets.cols());

  nn::Tensor w = nn::parameter(Matrix(x.cols(), targets.cols()));
  nn::Tensor b = nn::parameter(Matrix(1, targets.cols()));
  nn::Tensor input = nn::constant(x);
  nn::Adam adam({w, b}, nn::AdamOptions{.lr = options.lr});

  LinearClassifier clf;
  clf.l2_penalty = options.l2;
  clf.loss_history.reserve(options.epochs);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    nn::Tensor loss = soft_cross_entropy(nn::add_row_bias(nn::matmul(input, w), b), targets);
    if (options.l2 > 0.0) loss = nn::add(loss, nn::scale(nn::sum_squares(w), options.l2));
    if (!std::isfinite(loss.item()))
      fail(ErrorCode::numeric, "classifier loss diverged at epoch " + std::to_string(epoch));
    clf.loss_history.push_back(loss.item());
    adam.zero_grad();
    nn::backward(loss);
    adam.step();
  }
  clf.weight = w.value();
  clf.bias = b.value();
  return clf;
}

Matrix logits(const LinearClassifier& c, const Matrix& x) {
  require(x.cols() == c.weight.rows(), "predict: inputs have " + std::to_string(x.cols()) +
                                           " columns, classifier expects " +
                                           std::to_string(c.weight.rows()));
  Matrix out = matmul(x, c.weight);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t k = 0; k < out.cols(); ++k) out(r, k) += c.bias(0, k);
  return out;
}

Prediction predict(const LinearClassifier& c, const Matrix& x) {
  Prediction p;
  const Matrix z = logits(c, x);
  softmax_rows(z, p.probabilities);
  p.labels.resize(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto row = z.row(r);
    // max_element returns the first maximum.
    p.labels[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return p;
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  require(predicted.size() == truth.size(), "accuracy: " + std::to_string(predicted.size()) +
                                                " predictions for " + std::to_string(truth.size()) +
                                                " labels");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace star
