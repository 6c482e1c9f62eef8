#include <doctest.h>

#include "oracles.hpp"
#include "star/error.hpp"
#include "star/matrix.hpp"
#include "star/random.hpp"

using namespace star;

namespace {
Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}
}  // namespace

TEST_CASE("matmul family agrees with the triple-loop oracle") {
  Rng rng(1);
  for (auto [m, k, n] : {std::tuple{3, 4, 2}, {1, 1, 1}, {17, 9, 33}, {64, 5, 70}}) {
    const Matrix a = random_matrix(m, k, rng), b = random_matrix(k, n, rng);
    const Matrix ref = oracle::naive_matmul(a, b);
    CHECK(max_abs_diff(matmul(a, b), ref) < 1e-12);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), ref) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), ref) < 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), Error);
  CHECK_THROWS_AS(matmul_tn(Matrix(2, 3), Matrix(3, 3)), Error);
  CHECK_THROWS_AS(matmul_nt(Matrix(2, 3), Matrix(2, 4)), Error);
}

TEST_CASE("identity and elementwise helpers") {
  const Matrix a{{1, 2}, {3, 4}};
  CHECK(matmul(Matrix::identity(2), a) == a);
  CHECK((a + a) == 2.0 * a);
  CHECK((a - a) == Matrix(2, 2));
  Matrix b = a;
  b += a;
  CHECK(b == 2.0 * a);
  CHECK(transpose(a) == Matrix{{1, 3}, {2, 4}});
  CHECK(frobenius_norm(Matrix{{3, 4}}) == doctest::Approx(5.0));
  CHECK_THROWS_AS(a + Matrix(1, 2), Error);
}

TEST_CASE("row and column slicing") {
  const Matrix a{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  const std::vector<std::size_t> ids{2, 0, 2};
  CHECK(gather_rows(a, ids) == Matrix{{7, 8, 9}, {1, 2, 3}, {7, 8, 9}});
  CHECK(slice_cols(a, 1, 3) == Matrix{{2, 3}, {5, 6}, {8, 9}});
  CHECK(hstack(slice_cols(a, 0, 1), slice_cols(a, 1, 3)) == a);
  CHECK(vstack(gather_rows(a, std::vector<std::size_t>{0}), gather_rows(a, std::vector<std::size_t>{1, 2})) == a);
  CHECK_THROWS_AS(gather_rows(a, std::vector<std::size_t>{3}), Error);
  CHECK_THROWS_AS(slice_cols(a, 2, 4), Error);
}

TEST_CASE("finiteness check") {
  Matrix a{{1, 2}};
  CHECK(all_finite(a));
  a(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(all_finite(a));
}
