#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace star {

// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1 matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix& operator+=(Matrix& a, const Matrix& b);

// Rows of `m` selected by `ids`, in order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> ids);
// Columns [begin, end) of `m`.
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end);
Matrix hstack(const Matrix& left, const Matrix& right);
Matrix vstack(const Matrix& top, const Matrix& bottom);

inline double dot(std::span<const double> a, std::span<const double> b) {
  const double* __restrict x = a.data();
  const double* __restrict y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += x[i] * y[i];
  return s;
}
double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

}  // namespace star
