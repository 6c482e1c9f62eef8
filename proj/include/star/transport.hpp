#pragma once

#include <cstddef>
#include <vector>

#include "star/matrix.hpp"

namespace star {

struct SinkhornOptions {
  double epsilon = 0.1;
  double tol = 1e-6;
  std::size_t max_iter = 1000;
};

// Entropic coupling between NK support rows and NQ query rows with uniform
// marginals 1/NK and 1/NQ. plan = diag(exp(log_u)) exp(-D/eps) diag(exp(log_v)).
struct TransportPlan {
  Matrix plan;
  double epsilon = 0.0;
  std::size_t iterations = 0;
  double marginal_residual = 0.0;
  bool converged = false;
  std::vector<double> log_u;
  std::vector<double> log_v;
};

// D_ij = ||support_i - query_j||^2
Matrix pairwise_cost(const Matrix& support, const Matrix& query);

// Log-domain Sinkhorn-Knopp. Stops once max(||plan 1 - a||_inf,
// ||plan^T 1 - b||_inf) <= tol or after max_iter sweeps.
TransportPlan sinkhorn(const Matrix& cost, const SinkhornOptions& options = {});

double transport_cost(const TransportPlan& plan, const Matrix& cost);
// max(row-marginal error, column-marginal error) of an arbitrary plan.
double marginal_residual(const Matrix& plan);

struct TransportedSupport {
  Matrix embeddings;  // NQ x d
  Matrix labels;      // NQ x N, rows are probability vectors
};

// Barycentric mapping through plan^T with each row renormalized to sum to
// one. With `raw_plan` the embeddings use plan^T unnormalized; labels are
// always renormalized.
TransportedSupport transport_support(const TransportPlan& plan, const Matrix& support,
                                     const Matrix& support_labels, bool raw_plan = false);

}  // namespace star
