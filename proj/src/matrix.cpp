#include "star/matrix.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "star/error.hpp"

namespace star {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, "matrix data size does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())); }
MutMap view(Matrix& m) { return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())); }

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(),
          "matmul dimension mismatch: " + a.shape_string() + " * " + b.shape_string());
  Matrix out(a.rows(), b.cols());
  if (!out.empty() && a.cols() > 0) view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(),
          "matmul_tn dimension mismatch: " + a.shape_string() + "^T * " + b.shape_string());
  Matrix out(a.cols(), b.cols());
  if (!out.empty() && a.rows() > 0) view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(),
          "matmul_nt dimension mismatch: " + a.shape_string() + " * " + b.shape_string() + "^T");
  Matrix out(a.rows(), b.rows());
  if (!out.empty() && a.cols() > 0) view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  out += b;
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "shape mismatch in subtraction");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] -= b.values()[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "shape mismatch in addition: " + a.shape_string() + " + " +
                               b.shape_string());
  for (std::size_t i = 0; i < a.size(); ++i) a.values()[i] += b.values()[i];
  return a;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> ids) {
  Matrix out(ids.size(), m.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] < m.rows(), "row index out of range");
    std::copy_n(m.row(ids[r]).begin(), m.cols(), out.row(r).begin());
  }
  return out;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= m.cols(), "column slice out of range");
  Matrix out(m.rows(), end - begin);
  for (std::size_t r = 0; r < m.rows(); ++r)
    std::copy(m.row(r).begin() + begin, m.row(r).begin() + end, out.row(r).begin());
  return out;
}

Matrix hstack(const Matrix& left, const Matrix& right) {
  require(left.rows() == right.rows(), "hstack row mismatch");
  Matrix out(left.rows(), left.cols() + right.cols());
  for (std::size_t r = 0; r < left.rows(); ++r) {
    std::copy(left.row(r).begin(), left.row(r).end(), out.row(r).begin());
    std::copy(right.row(r).begin(), right.row(r).end(), out.row(r).begin() + left.cols());
  }
  return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  require(top.cols() == bottom.cols(), "vstack column mismatch");
  std::vector<double> data = top.values();
  data.insert(data.end(), bottom.values().begin(), bottom.values().end());
  return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "shape mismatch in max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace star
