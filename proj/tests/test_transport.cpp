#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "star/classifier.hpp"
#include "star/error.hpp"
#include "star/transport.hpp"

using namespace star;

namespace {
Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

Matrix random_cost(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform();
  return m;
}
}  // namespace

TEST_CASE("pairwise cost") {
  CHECK(pairwise_cost(Matrix{{1, 2}}, Matrix{{1, 2}}) == Matrix{{0.0}});
  CHECK(pairwise_cost(Matrix{{0, 0}}, Matrix{{3, 4}}) == Matrix{{25.0}});
  Rng rng(1);
  const Matrix a = random_matrix(3, 2, rng), b = random_matrix(4, 2, rng);
  const Matrix d = pairwise_cost(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double ref = std::pow(a(i, 0) - b(j, 0), 2) + std::pow(a(i, 1) - b(j, 1), 2);
      CHECK(d(i, j) == doctest::Approx(ref).epsilon(1e-14));
      CHECK(d(i, j) >= 0.0);
    }
  CHECK_THROWS_AS(pairwise_cost(Matrix(1, 2), Matrix(1, 3)), Error);
}

TEST_CASE("trivial plans") {
  CHECK(sinkhorn(Matrix{{7.5}}).plan == Matrix{{1.0}});
  const TransportPlan p = sinkhorn(Matrix(2, 2));
  for (double v : p.plan.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p.converged);
}

TEST_CASE("solver errors") {
  CHECK_THROWS_AS(sinkhorn(Matrix(2, 2), {0.0}), Error);
  CHECK_THROWS_AS(sinkhorn(Matrix(2, 2), {-1.0}), Error);
  Matrix bad(2, 2);
  bad(0, 1) = NAN;
  CHECK_THROWS_AS(sinkhorn(bad), Error);
}

TEST_CASE("marginals, positivity and factorization") {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    const std::size_t r = 1 + rng.below(25), c = 1 + rng.below(50);
    const Matrix cost = random_cost(r, c, rng);
    const TransportPlan p = sinkhorn(cost);
    REQUIRE(p.converged);
    CHECK(p.iterations <= 1000);
    CHECK(p.marginal_residual <= 1e-6);
    CHECK(marginal_residual(p.plan) == p.marginal_residual);
    double worst = 0.0;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(p.plan(i, j) > 0.0);
        const double rebuilt = std::exp(p.log_u[i]) * std::exp(-cost(i, j) / p.epsilon) * std::exp(p.log_v[j]);
        worst = std::max(worst, std::abs(rebuilt - p.plan(i, j)) / p.plan(i, j));
      }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("small epsilon approaches the LP optimum") {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const Matrix cost = random_cost(2, 3, rng);
    const TransportPlan p = sinkhorn(cost, {1e-3});
    const double lp = oracle::lp_optimum_2x3(cost);
    CHECK(std::abs(transport_cost(p, cost) - lp) <= 0.01 * lp);
  }
  // oracle sanity: a diagonal-dominant cost has a known vertex
  const Matrix easy{{0, 1, 1}, {1, 0, 0}};
  CHECK(oracle::lp_optimum_2x3(easy) == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("transport cost is monotone in epsilon") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const Matrix cost = random_cost(4, 6, rng);
    double prev = -1.0;
    for (double eps : {0.01, 0.05, 0.1, 0.5, 2.0}) {
      const double c = transport_cost(sinkhorn(cost, {eps, 1e-9, 20000}), cost);
      CHECK(c >= prev - 1e-9);
      prev = c;
    }
  }
}

TEST_CASE("barycentric transport") {
  SUBCASE("single point") {
    const TransportPlan p = sinkhorn(Matrix{{3.0}});
    const TransportedSupport t = transport_support(p, Matrix{{1.5, -2.0}}, Matrix{{1.0}});
    CHECK(t.embeddings == Matrix{{1.5, -2.0}});
    CHECK(t.labels == Matrix{{1.0}});
  }
  SUBCASE("uniform plan mixes everything") {
    const Matrix support{{0, 0}, {2, 0}, {0, 4}};
    const std::vector<std::size_t> cls{0, 0, 1};
    const TransportPlan p = sinkhorn(Matrix(3, 4));
    const TransportedSupport t = transport_support(p, support, one_hot(cls, 2));
    for (std::size_t q = 0; q < 4; ++q) {
      CHECK(t.embeddings(q, 0) == doctest::Approx(2.0 / 3.0));
      CHECK(t.embeddings(q, 1) == doctest::Approx(4.0 / 3.0));
      CHECK(t.labels(q, 0) == doctest::Approx(2.0 / 3.0));
      CHECK(t.labels(q, 1) == doctest::Approx(1.0 / 3.0));
    }
  }
  SUBCASE("hand plan vs matrix product") {
    TransportPlan p;
    p.plan = Matrix{{0.4, 0.1}, {0.1, 0.4}};
    const Matrix support{{1, 2}, {3, -1}};
    const Matrix labels{{1, 0}, {0, 1}};
    const TransportedSupport t = transport_support(p, support, labels);
    const Matrix b{{0.8, 0.2}, {0.2, 0.8}};  // plan^T, rows renormalized
    CHECK(max_abs_diff(t.embeddings, oracle::naive_matmul(b, support)) < 1e-12);
    CHECK(max_abs_diff(t.labels, b) < 1e-12);
    const TransportedSupport raw = transport_support(p, support, labels, true);
    CHECK(max_abs_diff(raw.embeddings, oracle::naive_matmul(transpose(p.plan), support)) < 1e-12);
  }
  SUBCASE("rows stay inside the support envelope and labels are distributions") {
    Rng rng(5);
    const Matrix support = random_matrix(10, 3, rng), query = random_matrix(15, 3, rng);
    std::vector<std::size_t> cls(10);
    for (std::size_t i = 0; i < 10; ++i) cls[i] = i % 3;
    const TransportedSupport t = transport_support(sinkhorn(pairwise_cost(support, query)), support, one_hot(cls, 3));
    for (std::size_t q = 0; q < 15; ++q) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) s += t.labels(q, c);
      CHECK(std::abs(s - 1.0) < 1e-9);
      for (std::size_t c = 0; c < 3; ++c) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < 10; ++i) lo = std::min(lo, support(i, c)), hi = std::max(hi, support(i, c));
        CHECK(t.embeddings(q, c) >= lo);
        CHECK(t.embeddings(q, c) <= hi);
      }
    }
  }
  SUBCASE("degenerate column") {
    TransportPlan p;
    p.plan = Matrix{{0.5, 0.0}, {0.5, 0.0}};
    CHECK_THROWS_AS(transport_support(p, Matrix{{1}, {2}}, Matrix{{1}, {1}}), Error);
  }
}
