#pragma once

// Symmetric operators W over R^m, consumed by the QUBO solvers. An operator
// exposes its dimension, its diagonal, and a visitor over the off-diagonal
// entries of one row; everything else is derived from those.

#include <concepts>
#include <functional>

#include <Eigen/Dense>

#include "etcb/error.hpp"

namespace etcb {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <class Op>
concept SymmetricOperator = requires(const Op& op, Index i) {
  { op.dim() } -> std::convertible_to<Index>;
  { op.diag(i) } -> std::convertible_to<double>;
  // visits (j, W_ij) for off-diagonal j != i; zero entries may be skipped
  op.for_each_in_row(i, std::function<void(Index, double)>{});
};

/// Dense symmetric matrix; the input is symmetrized as (W + W') / 2.
class DenseSymmetric {
 public:
  DenseSymmetric() = default;
  explicit DenseSymmetric(const MatrixXd& w) {
    detail::require(w.rows() == w.cols(), "QUBO matrix must be square");
    detail::require(w.allFinite(), "QUBO matrix must be finite");
    w_ = 0.5 * (w + w.transpose());
  }

  Index dim() const noexcept { return w_.rows(); }
  double diag(Index i) const { return w_(i, i); }
  template <class F>
  void for_each_in_row(Index i, F&& f) const {
    // column access is contiguous and W is symmetric
    const auto col = w_.col(i);
    for (Index j = 0; j < w_.rows(); ++j)
      if (j != i) f(j, col[j]);
  }

  VectorXd apply(const VectorXd& x) const { return w_ * x; }
  /// Off-diagonal part of row i against the columns of V: sum_{j != i} W_ij v_j.
  VectorXd row_combination(Index i, const MatrixXd& v) const {
    return v * w_.col(i) - w_(i, i) * v.col(i);
  }
  const MatrixXd& matrix() const noexcept { return w_; }

 private:
  MatrixXd w_;
};

template <SymmetricOperator Op>
VectorXd apply(const Op& op, const VectorXd& x) {
  if constexpr (requires { { op.apply(x) } -> std::convertible_to<VectorXd>; }) {
    return op.apply(x);
  } else {
    VectorXd y(op.dim());
    for (Index i = 0; i < op.dim(); ++i) {
      double acc = op.diag(i) * x[i];
      op.for_each_in_row(i, [&](Index j, double w) { acc += w * x[j]; });
      y[i] = acc;
    }
    return y;
  }
}

template <SymmetricOperator Op>
VectorXd row_combination(const Op& op, Index i, const MatrixXd& v) {
  if constexpr (requires { { op.row_combination(i, v) } -> std::convertible_to<VectorXd>; }) {
    return op.row_combination(i, v);
  } else {
    VectorXd g = VectorXd::Zero(v.rows());
    op.for_each_in_row(i, [&](Index j, double w) { g.noalias() += w * v.col(j); });
    return g;
  }
}

template <SymmetricOperator Op>
double quad_form(const Op& op, const VectorXd& x) {
  detail::require(x.size() == op.dim(), "vector length does not match operator");
  return x.dot(apply(op, x));
}

template <SymmetricOperator Op>
double trace(const Op& op) {
  double t = 0.0;
  for (Index i = 0; i < op.dim(); ++i) t += op.diag(i);
  return t;
}

template <SymmetricOperator Op>
double abs_sum(const Op& op) {
  double s = 0.0;
  for (Index i = 0; i < op.dim(); ++i) {
    s += std::abs(op.diag(i));
    op.for_each_in_row(i, [&](Index, double w) { s += std::abs(w); });
  }
  return s;
}

template <SymmetricOperator Op>
MatrixXd to_dense(const Op& op) {
  if constexpr (std::same_as<Op, DenseSymmetric>) {
    return op.matrix();
  } else {
    const Index m = op.dim();
    MatrixXd w = MatrixXd::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      w(i, i) = op.diag(i);
      op.for_each_in_row(i, [&](Index j, double v) { w(i, j) = v; });
    }
    return w;
  }
}

}  // namespace etcb
