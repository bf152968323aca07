#pragma once

// Expected cumulative reward over rounds 0..h as a quadratic form in the
// stacked actions u = [u_h; u_{h-1}; ...; u_0] (latest action first):
//   E[sum_t r_t] = u' M u = 1/2 u' S u,   S = M + M'.
// Block (a, b) of M is g_{b-a-1} for a < b and zero otherwise, so M is
// strictly block upper triangular and S has zero diagonal blocks.
//
// Only the generator blocks g_0..g_{K-1} are stored. Products with S run in
// O(h K p^2) and never materialize the (h+1)p square matrix.

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "etcb/error.hpp"
#include "etcb/lds.hpp"
#include "etcb/markov.hpp"
#include "etcb/operator.hpp"

namespace etcb {

/// Largest dimension for which dense materialization is allowed.
inline constexpr Index kMaxDenseDim = 4096;

/// weight * S for a block-Toeplitz S; the QUBO solvers see this type.
class ToeplitzOperator {
 public:
  ToeplitzOperator(std::shared_ptr<const std::vector<MatrixXd>> gen,
                   Index horizon, Index p, double weight)
      : gen_(std::move(gen)), h_(horizon), p_(p), weight_(weight) {}

  Index dim() const noexcept { return (h_ + 1) * p_; }
  double diag(Index) const noexcept { return 0.0; }
  double weight() const noexcept { return weight_; }
  Index bandwidth() const noexcept { return static_cast<Index>(gen_->size()); }

  template <class F>
  void for_each_in_row(Index i, F&& f) const {
    const Index a = i / p_;
    const Index r = i % p_;
    const Index k_max = bandwidth();
    for (Index b = std::max<Index>(0, a - k_max); b < a; ++b) {
      const MatrixXd& g = (*gen_)[a - b - 1];
      for (Index c = 0; c < p_; ++c) f(b * p_ + c, weight_ * g(c, r));
    }
    for (Index b = a + 1; b <= std::min(h_, a + k_max); ++b) {
      const MatrixXd& g = (*gen_)[b - a - 1];
      for (Index c = 0; c < p_; ++c) f(b * p_ + c, weight_ * g(r, c));
    }
  }

  VectorXd apply(const VectorXd& x) const {
    detail::require(x.size() == dim(), "vector length does not match operator");
    const Index cols = h_ + 1;
    Eigen::Map<const MatrixXd> xs(x.data(), p_, cols);
    MatrixXd ys = MatrixXd::Zero(p_, cols);
    for (Index k = 0; k < bandwidth() && k < h_; ++k) {
      const Index len = h_ - k;
      const MatrixXd& g = (*gen_)[k];
      ys.leftCols(len).noalias() += g * xs.middleCols(k + 1, len);
      ys.middleCols(k + 1, len).noalias() += g.transpose() * xs.leftCols(len);
    }
    ys *= weight_;
    return Eigen::Map<const VectorXd>(ys.data(), ys.size());
  }

  /// sum_{j != i} W_ij v_j over the columns of v (rank x dim).
  VectorXd row_combination(Index i, const MatrixXd& v) const {
    const Index a = i / p_;
    const Index r = i % p_;
    const Index k_max = bandwidth();
    VectorXd out = VectorXd::Zero(v.rows());
    for (Index b = std::max<Index>(0, a - k_max); b < a; ++b)
      out.noalias() += v.middleCols(b * p_, p_) * (*gen_)[a - b - 1].col(r);
    for (Index b = a + 1; b <= std::min(h_, a + k_max); ++b)
      out.noalias() += v.middleCols(b * p_, p_) * (*gen_)[b - a - 1].row(r).transpose();
    out *= weight_;
    return out;
  }

 private:
  std::shared_ptr<const std::vector<MatrixXd>> gen_;
  Index h_;
  Index p_;
  double weight_;
};

class RewardQuadratic {
 public:
  /// Blocks past the horizon are dropped; missing blocks are zero.
  RewardQuadratic(std::vector<MatrixXd> generator, Index horizon, Index p)
      : h_(horizon), p_(p) {
    detail::require(horizon >= 0, "horizon must be nonnegative");
    detail::require(p >= 1, "block size must be positive");
    if (static_cast<Index>(generator.size()) > horizon)
      generator.resize(static_cast<std::size_t>(horizon));
    for (const auto& g : generator)
      detail::require(g.rows() == p && g.cols() == p,
                      "generator blocks must be p x p");
    // trailing zero blocks only widen the band
    while (!generator.empty() && generator.back().isZero(0.0)) generator.pop_back();
    gen_ = std::make_shared<const std::vector<MatrixXd>>(std::move(generator));
  }

  Index horizon() const noexcept { return h_; }
  Index p() const noexcept { return p_; }
  Index dim() const noexcept { return (h_ + 1) * p_; }
  /// Number of stored (possibly nonzero) generator blocks.
  Index bandwidth() const noexcept { return static_cast<Index>(gen_->size()); }
  const std::vector<MatrixXd>& generator() const noexcept { return *gen_; }
  MatrixXd block(Index k) const {
    return k < bandwidth() ? (*gen_)[k] : MatrixXd::Zero(p_, p_);
  }

  ToeplitzOperator S() const { return {gen_, h_, p_, 1.0}; }
  /// QUBO matrix W = S / 2, so that u'Wu is the expected cumulative reward.
  ToeplitzOperator qubo() const { return {gen_, h_, p_, 0.5}; }

  VectorXd apply_S(const VectorXd& x) const { return S().apply(x); }

  MatrixXd dense_M() const {
    check_dense();
    MatrixXd m = MatrixXd::Zero(dim(), dim());
    for (Index a = 0; a <= h_; ++a)
      for (Index b = a + 1; b <= h_ && b - a - 1 < bandwidth(); ++b)
        m.block(a * p_, b * p_, p_, p_) = (*gen_)[b - a - 1];
    return m;
  }
  MatrixXd dense_S() const {
    const MatrixXd m = dense_M();
    return m + m.transpose();
  }

 private:
  void check_dense() const {
    if (dim() > kMaxDenseDim)
      throw PreconditionError("dense materialization limited to dimension " +
                              std::to_string(kMaxDenseDim));
  }

  std::shared_ptr<const std::vector<MatrixXd>> gen_;
  Index h_;
  Index p_;
};

inline RewardQuadratic build_reward_matrix(const std::vector<MatrixXd>& generator,
                                           Index horizon, Index p) {
  return RewardQuadratic(generator, horizon, p);
}

inline RewardQuadratic build_reward_matrix(const MarkovParams& g, Index horizon) {
  std::vector<MatrixXd> gen;
  for (Index k = 0; k < g.L(); ++k) gen.emplace_back(g.block(k));
  return RewardQuadratic(std::move(gen), horizon, g.p());
}

/// Blocks k < L from the estimate, zero beyond.
inline RewardQuadratic build_estimated_S(const MarkovParams& est, Index horizon) {
  return build_reward_matrix(est, horizon);
}

/// Generator C A^k B for k < horizon. Since A^{k+j} B = A^j (A^k B), the
/// blocks past k sum to at most ||C|| ||A^k B|| phi / (1 - rho) for any
/// rho > rho(A); generation stops once that falls below `rel_tol` times the
/// largest block norm. rel_tol = 0 keeps every block.
inline std::vector<MatrixXd> true_generator(const SystemParams& params,
                                            Index horizon, double rel_tol = 1e-15) {
  std::vector<MatrixXd> gen;
  if (horizon <= 0) return gen;
  double tail_scale = 0.0;
  if (rel_tol > 0.0) {
    const double rho = params.rho_A() + 0.25 * (1.0 - params.rho_A());
    const StabilityProfile prof = stability_profile(params.A(), rho);
    tail_scale = spectral_norm(params.C()) * prof.phi / (1.0 - rho);
  }
  MatrixXd ak_b = params.B();
  double largest = 0.0;
  for (Index k = 0; k < horizon; ++k) {
    gen.push_back(params.C() * ak_b);
    largest = std::max(largest, spectral_norm(gen.back()));
    ak_b = params.A() * ak_b;
    if (ak_b.isZero(0.0)) break;
    if (rel_tol > 0.0 && tail_scale * spectral_norm(ak_b) <= rel_tol * largest) break;
  }
  return gen;
}

/// S_h built from the true system.
inline RewardQuadratic build_true_reward(const SystemParams& params, Index horizon,
                                         double rel_tol = 1e-15) {
  return RewardQuadratic(true_generator(params, horizon, rel_tol), horizon,
                         params.p());
}

/// u' M u = 1/2 u' S u for a stacked action vector.
inline double expected_reward_quadratic(const RewardQuadratic& q,
                                        const VectorXd& u_stack) {
  if (u_stack.size() != q.dim())
    throw InputError("action stack has length " + std::to_string(u_stack.size()) +
                     ", expected " + std::to_string(q.dim()));
  return quad_form(q.qubo(), u_stack);
}

/// Time-ordered actions (p x (h+1), column t = u_t) to the stack [u_h; ...; u_0].
inline VectorXd to_stack(const MatrixXd& actions) {
  const Index p = actions.rows();
  const Index cols = actions.cols();
  VectorXd s(p * cols);
  for (Index t = 0; t < cols; ++t) s.segment((cols - 1 - t) * p, p) = actions.col(t);
  return s;
}

/// Inverse of to_stack.
inline MatrixXd from_stack(const VectorXd& stack, Index p) {
  detail::require(p >= 1 && stack.size() % p == 0,
                  "stack length must be a multiple of p");
  const Index cols = stack.size() / p;
  MatrixXd actions(p, cols);
  for (Index t = 0; t < cols; ++t) actions.col(t) = stack.segment((cols - 1 - t) * p, p);
  return actions;
}

}  // namespace etcb
