#pragma once

// Finite-difference helpers over arbitrary parameter matrices, and relaxed-graph inputs
// bound on a tape.

#include <algorithm>
#include <functional>
#include <vector>

#include "ele/autodiff.hpp"
#include "ele/embedder.hpp"
#include "ele/graph.hpp"

namespace ele::testing {

/// Largest normwise relative error between `analytic[i]` and central differences of `f`
/// with respect to every entry of `*params[i]`.
template <typename Scalar>
double max_fd_error(const std::vector<Matrix<Scalar>*>& params, const std::vector<Matrix<Scalar>>& analytic,
                    const std::function<double()>& f, double step = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix<Scalar>& x = *params[i];
    Matrix<Scalar> numeric(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const Scalar orig = x.data()[k];
      x.data()[k] = orig + step;
      const double up = f();
      x.data()[k] = orig - step;
      const double down = f();
      x.data()[k] = orig;
      numeric.data()[k] = (up - down) / (2 * step);
    }
    const double ref = std::max({analytic[i].template lpNorm<Eigen::Infinity>(),
                                 numeric.template lpNorm<Eigen::Infinity>(), 1e-12});
    worst = std::max(worst, (analytic[i] - numeric).template lpNorm<Eigen::Infinity>() / ref);
  }
  return worst;
}

/// Relaxed graphs stacked and placed on `tape` as tracked variables.
template <typename Scalar>
struct BoundGraphs {
  int m_max = 0;
  ad::Var<Scalar> nodes;
  std::vector<ad::Var<Scalar>> edges;
};

template <typename Scalar>
BoundGraphs<Scalar> bind_graphs(ad::Tape<Scalar>& tape, const GraphBatch<Scalar>& batch) {
  BoundGraphs<Scalar> out{batch.m_max, tape.variable(batch.nodes), {}};
  for (const auto& e : batch.edges) out.edges.push_back(tape.variable(e));
  return out;
}

/// Pointers to every matrix of a graph batch, nodes first.
template <typename Scalar>
std::vector<Matrix<Scalar>*> batch_matrices(GraphBatch<Scalar>& batch) {
  std::vector<Matrix<Scalar>*> out{&batch.nodes};
  for (auto& e : batch.edges) out.push_back(&e);
  return out;
}

}  // namespace ele::testing
