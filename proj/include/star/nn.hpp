#pragma once

// Minimal reverse-mode differentiation over dense matrices. Every op builds a
// node holding its value and a closure that pushes the node's gradient into
// its parents; `backward` runs those closures in reverse topological order.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "star/matrix.hpp"
#include "star/random.hpp"

namespace star::nn {

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool is_leaf = true;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Trainable leaf; gradients accumulate across backward calls until zeroed.
Tensor parameter(Matrix value);
// Non-trainable leaf.
Tensor constant(Matrix value);

// Runs reverse-mode accumulation from a 1x1 loss. Leaf gradients accumulate;
// interior gradients are reset on every call.
void backward(const Tensor& loss);

// ---- ops ---------------------------------------------------------------

Tensor matmul(const Tensor& x, const Tensor& w);
// x + 1 * b for a 1 x c bias row.
Tensor add_row_bias(const Tensor& x, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor sum(const Tensor& x);
Tensor sum_squares(const Tensor& x);
Tensor vstack(const Tensor& top, const Tensor& bottom);
Tensor gather_rows(const Tensor& x, std::vector<std::size_t> ids);
// One output row per group: the column-wise sum of x's rows listed in the group.
Tensor group_sum(const Tensor& x, std::vector<std::vector<std::size_t>> groups);

inline constexpr double kNormalizeEps = 1e-12;
// Each row divided by max(||row||_2, 1e-12).
Tensor l2_normalize_rows(const Tensor& x);
Matrix l2_normalize_rows(const Matrix& x);

// ---- layers -----------------------------------------------------------

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Matrix init_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct Linear {
  Tensor weight;  // in x out
  static Linear create(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const { return matmul(x, weight); }
  Matrix forward(const Matrix& x) const;
};

// ReLU(x W1 + b1) W2 + b2
struct MlpProjector {
  Tensor w1, b1, w2, b2;

  static MlpProjector create(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  std::size_t in_dim() const { return w1.rows(); }
  std::size_t hidden_dim() const { return w1.cols(); }
  std::size_t out_dim() const { return w2.cols(); }
  Tensor forward(const Tensor& x) const;
  Matrix forward(const Matrix& x) const;
  std::vector<Tensor> parameters() const { return {w1, b1, w2, b2}; }
};

Tensor linear_forward(const Tensor& w, const Tensor& x);
Tensor mlp_forward(const MlpProjector& p, const Tensor& x);

// ---- optimization ------------------------------------------------------

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {});

  // Bias-corrected update from the current gradients; gradients are left in
  // place for the caller to clear.
  void step();
  void zero_grad();
  long steps_taken() const noexcept { return t_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions opt_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

// Central-difference gradient check. Builds the loss once for the analytic
// gradient, then perturbs every coordinate of every parameter by +-step.
// Returns max |analytic - numeric| / max(|analytic|, |numeric|, floor).
double finite_difference_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                               double step = 1e-5, double floor = 1e-6);

// ---- checkpoint files -------------------------------------------------

struct NamedTensor {
  std::string name;
  Matrix value;
};

// u64 little-endian header length, JSON header, then float32 little-endian
// payload in header order. `meta_json` must be a JSON object (or empty).
void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors,
                  const std::string& meta_json = "{}");
std::vector<NamedTensor> load_tensors(const std::string& path, std::string* meta_json = nullptr);

}  // namespace star::nn
