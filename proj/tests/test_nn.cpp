#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "star/error.hpp"
#include "star/nn.hpp"

using namespace star;

namespace {
Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}
}  // namespace

TEST_CASE("linear forward") {
  Rng rng(1);
  const Matrix x = random_matrix(3, 4, rng);
  CHECK(nn::linear_forward(nn::parameter(Matrix::identity(4)), nn::constant(x)).value() == x);
  const Matrix w = random_matrix(4, 2, rng);
  const Matrix e2{{0, 0, 1, 0}};
  const Matrix row = nn::linear_forward(nn::parameter(w), nn::constant(e2)).value();
  CHECK(row(0, 0) == w(2, 0));
  CHECK(row(0, 1) == w(2, 1));
  CHECK(max_abs_diff(nn::linear_forward(nn::parameter(w), nn::constant(x)).value(), oracle::naive_matmul(x, w)) <
        1e-12);
  CHECK_THROWS_AS(nn::linear_forward(nn::parameter(w), nn::constant(Matrix(2, 3))), Error);
}

TEST_CASE("mlp forward") {
  Rng rng(2);
  nn::MlpProjector p = nn::MlpProjector::create(3, 3, 3, rng);
  const Matrix x{{1, 2, 3}, {0.5, 0, 4}};

  nn::MlpProjector zero{nn::parameter(Matrix(3, 3)), nn::parameter(Matrix(1, 3)), nn::parameter(Matrix(3, 3)),
                        nn::parameter(Matrix(1, 3))};
  CHECK(zero.forward(x) == Matrix(2, 3));
  nn::MlpProjector pass{nn::parameter(Matrix::identity(3)), nn::parameter(Matrix(1, 3)),
                        nn::parameter(Matrix::identity(3)), nn::parameter(Matrix(1, 3))};
  CHECK(pass.forward(x) == x);

  // scalar-by-scalar oracle
  const Matrix w1 = p.w1.value(), b1 = p.b1.value(), w2 = p.w2.value(), b2 = p.b2.value();
  const Matrix out = p.forward(x);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t o = 0; o < 3; ++o) {
      double acc = b2(0, o);
      for (std::size_t h = 0; h < 3; ++h) {
        double pre = b1(0, h);
        for (std::size_t i = 0; i < 3; ++i) pre += x(r, i) * w1(i, h);
        acc += std::max(pre, 0.0) * w2(h, o);
      }
      CHECK(out(r, o) == doctest::Approx(acc).epsilon(1e-12));
    }
  CHECK(max_abs_diff(nn::mlp_forward(p, nn::constant(x)).value(), out) == 0.0);
}

TEST_CASE("initialization bounds") {
  Rng rng(3);
  const Matrix w = nn::init_uniform(25, 40, rng);
  for (double v : w.values()) CHECK(std::abs(v) <= 0.2);
}

TEST_CASE("row normalization") {
  const Matrix out = nn::l2_normalize_rows(Matrix{{3, 4}, {0, 0}, {1, 0}});
  CHECK(out(0, 0) == doctest::Approx(0.6));
  CHECK(out(0, 1) == doctest::Approx(0.8));
  CHECK(out(1, 0) == 0.0);
  CHECK(out(1, 1) == 0.0);
  CHECK(out(2, 0) == 1.0);
  Rng rng(4);
  const Matrix once = nn::l2_normalize_rows(random_matrix(6, 5, rng));
  CHECK(max_abs_diff(once, nn::l2_normalize_rows(once)) < 1e-12);
}

TEST_CASE("backward basics") {
  Rng rng(5);
  const Matrix x = random_matrix(4, 3, rng);
  nn::Tensor w = nn::parameter(random_matrix(3, 2, rng));
  nn::backward(nn::sum(nn::matmul(nn::constant(x), w)));
  // d sum(XW) / dW = X^T 1
  for (std::size_t i = 0; i < 3; ++i) {
    double col = 0;
    for (std::size_t r = 0; r < 4; ++r) col += x(r, i);
    CHECK(w.grad()(i, 0) == doctest::Approx(col));
    CHECK(w.grad()(i, 1) == doctest::Approx(col));
  }
  // accumulation without zeroing
  const Matrix first = w.grad();
  nn::backward(nn::sum(nn::matmul(nn::constant(x), w)));
  CHECK(max_abs_diff(w.grad(), 2.0 * first) < 1e-12);
  w.zero_grad();
  CHECK(w.grad() == Matrix(3, 2));

  nn::Tensor a = nn::parameter(Matrix{{-1.0, 2.0}});
  nn::backward(nn::sum(nn::relu(a)));
  CHECK(a.grad()(0, 0) == 0.0);
  CHECK(a.grad()(0, 1) == 1.0);

  CHECK_THROWS_AS(nn::backward(nn::Tensor{}), Error);
  CHECK_THROWS_AS(nn::backward(nn::relu(a)), Error);
}

TEST_CASE("every op passes the finite-difference check") {
  Rng rng(6);
  nn::Tensor x = nn::parameter(random_matrix(5, 5, rng));
  nn::Tensor y = nn::parameter(random_matrix(5, 5, rng));
  nn::Tensor b = nn::parameter(random_matrix(1, 5, rng));
  std::vector<nn::Tensor> params{x, y, b};
  const std::vector<std::function<nn::Tensor()>> losses{
      [&] { return nn::sum_squares(nn::matmul(x, y)); },
      [&] { return nn::sum_squares(nn::add_row_bias(x, b)); },
      [&] { return nn::sum_squares(nn::relu(nn::add(x, y))); },
      [&] { return nn::sum(nn::scale(nn::matmul(x, y), -0.7)); },
      [&] { return nn::sum_squares(nn::vstack(x, y)); },
      [&] { return nn::sum_squares(nn::gather_rows(x, {4, 0, 0, 2})); },
      [&] { return nn::sum_squares(nn::group_sum(y, {{0, 1}, {2, 3, 4}, {1}})); },
      [&] { return nn::sum(nn::matmul(nn::l2_normalize_rows(x), y)); },
  };
  for (const auto& f : losses) CHECK(nn::finite_difference_check(f, params) < 1e-4);
}

TEST_CASE("finite-difference check rejects non-finite losses") {
  nn::Tensor x = nn::parameter(Matrix{{1e308}});
  std::vector<nn::Tensor> params{x};
  CHECK_THROWS_AS(nn::finite_difference_check([&] { return nn::sum_squares(x); }, params), Error);
}

TEST_CASE("adam") {
  SUBCASE("first step has magnitude lr") {
    nn::Tensor p = nn::parameter(Matrix{{1.0, -2.0}});
    p.mutable_grad() = Matrix{{3.0, -0.25}};
    nn::Adam opt({p}, {0.01});
    opt.step();
    CHECK(p.value()(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p.value()(0, 1) == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(opt.steps_taken() == 1);
    CHECK(p.grad()(0, 0) == 3.0);  // caller clears
  }
  SUBCASE("zero grad leaves parameters alone") {
    nn::Tensor p = nn::parameter(Matrix{{0.5}});
    nn::Adam opt({p});
    opt.step();
    CHECK(p.value()(0, 0) == 0.5);
  }
  SUBCASE("three steps on theta squared") {
    nn::Tensor p = nn::parameter(Matrix{{1.0}});
    nn::Adam opt({p});
    oracle::ScalarAdam ref;
    double theta = 1.0;
    for (int i = 0; i < 3; ++i) {
      opt.zero_grad();
      nn::backward(nn::sum_squares(p));
      opt.step();
      theta = ref.step(theta, 2 * theta);
      CHECK(p.value()(0, 0) == doctest::Approx(theta).epsilon(1e-14));
    }
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(7);
  const auto path = (std::filesystem::temp_directory_path() / "star_nn_ckpt.bin").string();
  std::vector<nn::NamedTensor> in{{"a", random_matrix(3, 2, rng)}, {"b", Matrix{{0.5, -1.25}}}};
  nn::save_tensors(path, in, R"({"k":1})");
  std::string meta;
  const auto out = nn::load_tensors(path, &meta);
  REQUIRE(out.size() == 2);
  CHECK(out[0].name == "a");
  CHECK(out[1].value == in[1].value);  // exactly representable in float32
  CHECK(max_abs_diff(out[0].value, in[0].value) < 1e-6);
  CHECK(meta.find("\"k\"") != std::string::npos);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(nn::load_tensors(path), Error);
}
