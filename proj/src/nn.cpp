#include "star/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "star/error.hpp"

namespace star::nn {

namespace {

using NodePtr = std::shared_ptr<Node>;

Tensor make_op(Matrix value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->is_leaf = false;
  node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                    [](const NodePtr& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

void ensure_grad(Node& n) {
  if (!n.grad.same_shape(n.value)) n.grad = Matrix(n.value.rows(), n.value.cols());
}

void accumulate(const NodePtr& target, const Matrix& g) {
  if (!target->requires_grad) return;
  ensure_grad(*target);
  target->grad += g;
}

void topo_sort(const NodePtr& root, std::vector<Node*>& order) {
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace

double Tensor::item() const {
  require(defined() && node_->value.rows() == 1 && node_->value.cols() == 1,
          "item() requires a 1x1 tensor");
  return node_->value(0, 0);
}

void Tensor::zero_grad() {
  if (node_) node_->grad = Matrix(node_->value.rows(), node_->value.cols());
}

Tensor parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->grad = Matrix(value.rows(), value.cols());
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) fail(ErrorCode::state, "backward called before any forward pass");
  require(loss.rows() == 1 && loss.cols() == 1, "backward requires a scalar (1x1) loss");
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  topo_sort(loss.node(), order);
  for (Node* n : order) {
    if (n->is_leaf)
      ensure_grad(*n);
    else
      n->grad = Matrix(n->value.rows(), n->value.cols());
  }
  loss.node()->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---- ops ---------------------------------------------------------------

Tensor matmul(const Tensor& x, const Tensor& w) {
  const NodePtr xn = x.node(), wn = w.node();
  return make_op(star::matmul(x.value(), w.value()), {xn, wn}, [xn, wn](Node& self) {
    if (xn->requires_grad) accumulate(xn, matmul_nt(self.grad, wn->value));
    if (wn->requires_grad) accumulate(wn, matmul_tn(xn->value, self.grad));
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  require(b.rows() == 1 && b.cols() == x.cols(), "bias must be 1 x " + std::to_string(x.cols()));
  Matrix out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b.value()(0, c);
  const NodePtr xn = x.node(), bn = b.node();
  return make_op(std::move(out), {xn, bn}, [xn, bn](Node& self) {
    accumulate(xn, self.grad);
    if (bn->requires_grad) {
      Matrix gb(1, self.grad.cols());
      for (std::size_t r = 0; r < self.grad.rows(); ++r)
        for (std::size_t c = 0; c < self.grad.cols(); ++c) gb(0, c) += self.grad(r, c);
      accumulate(bn, gb);
    }
  });
}

Tensor relu(const Tensor& x) {
  Matrix out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const NodePtr xn = x.node();
  return make_op(std::move(out), {xn}, [xn](Node& self) {
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(xn->value.values()[i] > 0.0)) g.values()[i] = 0.0;
    accumulate(xn, g);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const NodePtr an = a.node(), bn = b.node();
  return make_op(a.value() + b.value(), {an, bn}, [an, bn](Node& self) {
    accumulate(an, self.grad);
    accumulate(bn, self.grad);
  });
}

Tensor scale(const Tensor& x, double s) {
  const NodePtr xn = x.node();
  return make_op(s * x.value(), {xn}, [xn, s](Node& self) { accumulate(xn, s * self.grad); });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const NodePtr xn = x.node();
  return make_op(Matrix(1, 1, s), {xn}, [xn](Node& self) {
    accumulate(xn, Matrix(xn->value.rows(), xn->value.cols(), self.grad(0, 0)));
  });
}

Tensor sum_squares(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v * v;
  const NodePtr xn = x.node();
  return make_op(Matrix(1, 1, s), {xn}, [xn](Node& self) {
    accumulate(xn, (2.0 * self.grad(0, 0)) * xn->value);
  });
}

Tensor vstack(const Tensor& top, const Tensor& bottom) {
  const NodePtr tn = top.node(), bn = bottom.node();
  return make_op(star::vstack(top.value(), bottom.value()), {tn, bn}, [tn, bn](Node& self) {
    const std::size_t split = tn->value.rows();
    const std::size_t cols = self.grad.cols();
    if (tn->requires_grad) {
      std::vector<double> head(self.grad.values().begin(),
                               self.grad.values().begin() + static_cast<std::ptrdiff_t>(split * cols));
      accumulate(tn, Matrix(split, cols, std::move(head)));
    }
    if (bn->requires_grad) {
      std::vector<double> tail(self.grad.values().begin() + static_cast<std::ptrdiff_t>(split * cols),
                               self.grad.values().end());
      accumulate(bn, Matrix(self.grad.rows() - split, cols, std::move(tail)));
    }
  });
}

Tensor gather_rows(const Tensor& x, std::vector<std::size_t> ids) {
  Matrix out = star::gather_rows(x.value(), ids);
  const NodePtr xn = x.node();
  return make_op(std::move(out), {xn}, [xn, ids = std::move(ids)](Node& self) {
    if (!xn->requires_grad) return;
    ensure_grad(*xn);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      auto dst = xn->grad.row(ids[r]);
      auto src = self.grad.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Tensor group_sum(const Tensor& x, std::vector<std::vector<std::size_t>> groups) {
  const std::size_t cols = x.cols();
  Matrix out(groups.size(), cols);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    require(!groups[g].empty(), "group_sum: empty group " + std::to_string(g));
    auto dst = out.row(g);
    for (std::size_t id : groups[g]) {
      require(id < x.rows(), "group_sum: member index out of range");
      auto src = x.value().row(id);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  }
  const NodePtr xn = x.node();
  return make_op(std::move(out), {xn}, [xn, groups = std::move(groups)](Node& self) {
    if (!xn->requires_grad) return;
    ensure_grad(*xn);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      auto src = self.grad.row(g);
      for (std::size_t id : groups[g]) {
        auto dst = xn->grad.row(id);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
    }
  });
}

namespace {
// Rescales only when the plain sum of squares overflows.
double row_norm(std::span<const double> row) {
  const double sq = dot(row, row);
  if (std::isfinite(sq)) return std::sqrt(sq);
  double peak = 0.0;
  for (double v : row) peak = std::max(peak, std::abs(v));
  if (!std::isfinite(peak)) return peak + sq;  // inf or nan stays non-finite
  double acc = 0.0;
  for (double v : row) acc += (v / peak) * (v / peak);
  return peak * std::sqrt(acc);
}
}  // namespace

Matrix l2_normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double norm = std::max(row_norm(row), kNormalizeEps);
    for (double& v : row) v /= norm;
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& x) {
  Matrix out = l2_normalize_rows(x.value());
  const NodePtr xn = x.node();
  return make_op(std::move(out), {xn}, [xn](Node& self) {
    Matrix g(self.value.rows(), self.value.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const auto xr = xn->value.row(r);
      const double raw = row_norm(xr);
      const auto y = self.value.row(r);
      const auto gy = self.grad.row(r);
      auto gx = g.row(r);
      if (raw < kNormalizeEps) {
        for (std::size_t c = 0; c < gx.size(); ++c) gx[c] = gy[c] / kNormalizeEps;
      } else {
        const double proj = dot(y, gy);
        for (std::size_t c = 0; c < gx.size(); ++c) gx[c] = (gy[c] - y[c] * proj) / raw;
      }
    }
    accumulate(xn, g);
  });
}

// ---- layers -----------------------------------------------------------

Matrix init_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Matrix m(fan_in, fan_out);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

Linear Linear::create(std::size_t in, std::size_t out, Rng& rng) {
  return Linear{parameter(init_uniform(in, out, rng))};
}

Matrix Linear::forward(const Matrix& x) const { return star::matmul(x, weight.value()); }

MlpProjector MlpProjector::create(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  MlpProjector p;
  p.w1 = parameter(init_uniform(in, hidden, rng));
  Matrix b1(1, hidden);
  for (double& v : b1.values()) v = rng.uniform(-1.0, 1.0) / std::sqrt(static_cast<double>(in));
  p.b1 = parameter(std::move(b1));
  p.w2 = parameter(init_uniform(hidden, out, rng));
  Matrix b2(1, out);
  for (double& v : b2.values()) v = rng.uniform(-1.0, 1.0) / std::sqrt(static_cast<double>(hidden));
  p.b2 = parameter(std::move(b2));
  return p;
}

Tensor MlpProjector::forward(const Tensor& x) const {
  require(x.cols() == in_dim(), "mlp input has " + std::to_string(x.cols()) +
                                    " columns, expected " + std::to_string(in_dim()));
  return add_row_bias(matmul(relu(add_row_bias(matmul(x, w1), b1)), w2), b2);
}

Matrix MlpProjector::forward(const Matrix& x) const { return forward(constant(x)).value(); }

Tensor linear_forward(const Tensor& w, const Tensor& x) { return matmul(x, w); }

Tensor mlp_forward(const MlpProjector& p, const Tensor& x) { return p.forward(x); }

// ---- optimization ------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), opt_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const Matrix& g = p.grad();
    if (!g.same_shape(p.value())) continue;
    auto& m = m_[i].values();
    auto& v = v_[i].values();
    auto& w = p.mutable_value().values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.values()[k];
      m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * gk;
      v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double finite_difference_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                               double step, double floor) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) fail(ErrorCode::numeric, "finite_difference_check: non-finite loss");
  backward(loss);

  double worst = 0.0;
  for (auto& p : params) {
    const Matrix analytic = p.grad();
    auto& values = p.mutable_value().values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + step;
      const double up = loss_fn().item();
      values[k] = saved - step;
      const double down = loss_fn().item();
      values[k] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        fail(ErrorCode::numeric, "finite_difference_check: non-finite loss");
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.values()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

// ---- checkpoint files -------------------------------------------------

namespace {

void put_u64_le(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t get_u64_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void put_f32_le(std::ostream& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

}  // namespace

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors,
                  const std::string& meta_json) {
  nlohmann::json header;
  header["format"] = "star-tensors";
  header["version"] = 1;
  header["dtype"] = "float32";
  header["byte_order"] = "little";
  header["meta"] = meta_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(meta_json);
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors)
    header["tensors"].push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  put_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors)
    for (double v : t.value.values()) put_f32_le(out, static_cast<float>(v));
  if (!out) fail(ErrorCode::io, "write failed for '" + path + "'");
}

std::vector<NamedTensor> load_tensors(const std::string& path, std::string* meta_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  const std::uint64_t header_len = get_u64_le(in);
  if (!in || header_len > (1u << 26)) fail(ErrorCode::parse, path + ": bad tensor file header");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) fail(ErrorCode::parse, path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, path + ": header is not valid JSON: " + e.what());
  }
  if (header.value("format", "") != "star-tensors" || header.value("dtype", "") != "float32")
    fail(ErrorCode::parse, path + ": not a float32 star-tensors file");
  if (meta_json) *meta_json = header.contains("meta") ? header["meta"].dump() : "{}";

  std::vector<NamedTensor> tensors;
  for (const auto& entry : header.at("tensors")) {
    const auto rows = entry.at("shape").at(0).get<std::size_t>();
    const auto cols = entry.at("shape").at(1).get<std::size_t>();
    std::vector<double> data(rows * cols);
    for (double& v : data) {
      unsigned char bytes[4];
      in.read(reinterpret_cast<char*>(bytes), 4);
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    if (!in) fail(ErrorCode::parse, path + ": truncated payload for tensor '" +
                                        entry.at("name").get<std::string>() + "'");
    tensors.push_back({entry.at("name").get<std::string>(), Matrix(rows, cols, std::move(data))});
  }
  return tensors;
}

}  // namespace star::nn
