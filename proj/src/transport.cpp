#include "star/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "star/error.hpp"

namespace star {

Matrix pairwise_cost(const Matrix& support, const Matrix& query) {
  require(support.cols() == query.cols(), "pairwise_cost: support has " +
                                              std::to_string(support.cols()) +
                                              " columns, query has " + std::to_string(query.cols()));
  Matrix d(support.rows(), query.rows());
  for (std::size_t i = 0; i < support.rows(); ++i) {
    const auto s = support.row(i);
    for (std::size_t j = 0; j < query.rows(); ++j) {
      const auto q = query.row(j);
      double acc = 0.0;
      for (std::size_t c = 0; c < s.size(); ++c) {
        const double diff = s[c] - q[c];
        acc += diff * diff;
      }
      d(i, j) = acc;
    }
  }
  return d;
}

namespace {

double log_sum_exp(const std::vector<double>& x) {
  const double peak = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

}  // namespace

double marginal_residual(const Matrix& plan) {
  const std::size_t rows = plan.rows(), cols = plan.cols();
  const double a = 1.0 / static_cast<double>(rows);
  const double b = 1.0 / static_cast<double>(cols);
  double worst = 0.0;
  std::vector<double> col_sum(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row_sum += plan(i, j);
      col_sum[j] += plan(i, j);
    }
    worst = std::max(worst, std::abs(row_sum - a));
  }
  for (double c : col_sum) worst = std::max(worst, std::abs(c - b));
  return worst;
}

TransportPlan sinkhorn(const Matrix& cost, const SinkhornOptions& options) {
  const double eps = options.epsilon;
  require(eps > 0.0 && std::isfinite(eps), "sinkhorn: epsilon must be positive");
  require(cost.rows() >= 1 && cost.cols() >= 1, "sinkhorn: empty cost matrix");
  require(all_finite(cost), "sinkhorn: cost matrix contains non-finite entries");

  const std::size_t rows = cost.rows(), cols = cost.cols();
  const double log_a = -std::log(static_cast<double>(rows));
  const double log_b = -std::log(static_cast<double>(cols));

  // Scaled dual potentials: log plan_ij = f_i + g_j - D_ij / eps.
  std::vector<double> f(rows, 0.0), g(cols, 0.0);
  std::vector<double> buf_row(cols), buf_col(rows);
  Matrix scaled = (-1.0 / eps) * cost;

  TransportPlan result;
  result.epsilon = eps;
  Matrix plan(rows, cols);
  auto assemble = [&] {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) plan(i, j) = std::exp(f[i] + g[j] + scaled(i, j));
  };

  std::size_t iter = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (iter < options.max_iter) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) buf_row[j] = g[j] + scaled(i, j);
      f[i] = log_a - log_sum_exp(buf_row);
    }
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t i = 0; i < rows; ++i) buf_col[i] = f[i] + scaled(i, j);
      g[j] = log_b - log_sum_exp(buf_col);
    }
    ++iter;
    assemble();
    residual = marginal_residual(plan);
    if (residual <= options.tol) break;
  }

  result.plan = std::move(plan);
  result.iterations = iter;
  result.marginal_residual = residual;
  result.converged = residual <= options.tol;
  result.log_u = std::move(f);
  result.log_v = std::move(g);
  return result;
}

double transport_cost(const TransportPlan& plan, const Matrix& cost) {
  require(plan.plan.same_shape(cost), "transport_cost: plan and cost shapes differ");
  double s = 0.0;
  for (std::size_t k = 0; k < cost.size(); ++k) s += plan.plan.values()[k] * cost.values()[k];
  return s;
}

TransportedSupport transport_support(const TransportPlan& plan, const Matrix& support,
                                     const Matrix& support_labels, bool raw_plan) {
  const Matrix& p = plan.plan;
  require(p.rows() == support.rows(), "transport_support: plan has " + std::to_string(p.rows()) +
                                          " rows but support has " +
                                          std::to_string(support.rows()));
  require(support_labels.rows() == support.rows(), "transport_support: label rows mismatch");

  Matrix bary = transpose(p);  // NQ x NK
  Matrix raw = bary;
  for (std::size_t j = 0; j < bary.rows(); ++j) {
    auto row = bary.row(j);
    double s = 0.0;
    for (double v : row) s += v;
    if (s < 1e-12)
      fail(ErrorCode::numeric, "transport_support: plan column " + std::to_string(j) +
                                   " has vanishing mass");
    for (double& v : row) v /= s;
  }
  TransportedSupport out;
  out.embeddings = matmul(raw_plan ? raw : bary, support);
  out.labels = matmul(bary, support_labels);
  return out;
}

}  // namespace star
