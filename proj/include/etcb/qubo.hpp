#pragma once

// Maximize s'Ws over s in {-1, +1}^m for a symmetric operator W.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "etcb/deadline.hpp"
#include "etcb/error.hpp"
#include "etcb/operator.hpp"
#include "etcb/rng.hpp"

namespace etcb {

enum class SolverKind { brute, sign_iter, sdp_gw, vertex_ascent };

inline std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::brute: return "brute";
    case SolverKind::sign_iter: return "sign_iter";
    case SolverKind::sdp_gw: return "sdp_gw";
    case SolverKind::vertex_ascent: return "vertex_ascent";
  }
  return "unknown";
}

inline SolverKind parse_solver(const std::string& s) {
  if (s == "brute") return SolverKind::brute;
  if (s == "sign_iter") return SolverKind::sign_iter;
  if (s == "sdp_gw") return SolverKind::sdp_gw;
  if (s == "vertex_ascent") return SolverKind::vertex_ascent;
  throw InputError("unknown solver: " + s +
                   " (expected brute, sign_iter, sdp_gw or vertex_ascent)");
}

struct QuboSolution {
  VectorXd assignment;  // entries in {-1, +1}
  double value = 0.0;   // assignment' W assignment
  SolverKind solver = SolverKind::brute;
  std::optional<double> relaxation_value;
  std::optional<MatrixXd> factor;  // rank x m, unit columns
  std::optional<double> gw_bound;
  bool converged = true;
  Index iterations = 0;
};

inline constexpr Index kBruteForceMaxDim = 26;
/// Goemans-Williamson constant.
inline constexpr double kGwAlpha = 0.87856;

// ---------------------------------------------------------------------------
// Exhaustive search

/// Gray-code enumeration with s_0 = +1 fixed (s and -s share a value). Ties go
/// to the lexicographically smallest assignment under the order +1 < -1.
template <SymmetricOperator Op>
QuboSolution brute_force_max(const Op& op, const Deadline& deadline = {}) {
  const Index m = op.dim();
  detail::require(m >= 1, "empty QUBO");
  if (m > kBruteForceMaxDim)
    throw PreconditionError("brute force limited to dimension " +
                            std::to_string(kBruteForceMaxDim) + ", got " +
                            std::to_string(m));
  const MatrixXd w = to_dense(op);
  VectorXd s = VectorXd::Ones(m);
  // g_i = sum_{j != i} W_ij s_j
  VectorXd g = w * s - w.diagonal().cwiseProduct(s);
  double value = w.sum();
  const double scale = w.cwiseAbs().sum();
  const double tie_tol = 1e-12 * (1.0 + scale);

  // bit i set <=> s_i = -1
  std::uint32_t mask = 0;
  std::uint32_t best_mask = 0;
  double best = value;
  const auto lex_smaller = [](std::uint32_t a, std::uint32_t b) {
    const std::uint32_t diff = a ^ b;
    return diff != 0 && (a & (diff & -diff)) == 0;
  };

  const std::uint64_t count = 1ULL << (m - 1);
  for (std::uint64_t step = 1; step < count; ++step) {
    if ((step & 0xFFFFF) == 0) deadline.check("brute_force_max");
    const Index k = 1 + std::countr_zero(step);
    const double sk = s[k];
    value -= 4.0 * sk * g[k];
    g.noalias() -= (2.0 * sk) * w.col(k);
    g[k] += 2.0 * sk * w(k, k);
    s[k] = -sk;
    mask ^= (1u << k);
    if (value > best + tie_tol) {
      best = value;
      best_mask = mask;
    } else if (value >= best - tie_tol && lex_smaller(mask, best_mask)) {
      best_mask = mask;
      best = std::max(best, value);
    }
  }

  QuboSolution sol;
  sol.solver = SolverKind::brute;
  sol.assignment.resize(m);
  for (Index i = 0; i < m; ++i) sol.assignment[i] = (best_mask >> i) & 1u ? -1.0 : 1.0;
  sol.value = sol.assignment.dot(w * sol.assignment);
  sol.iterations = static_cast<Index>(count);
  return sol;
}

// ---------------------------------------------------------------------------
// Vertex ascent

/// One pass of endpoint replacement from x0 in [-1, 1]^m. Needs diag(W) >= 0
/// so every one-dimensional restriction is convex.
template <SymmetricOperator Op>
QuboSolution vertex_ascent(const Op& op, const VectorXd& x0) {
  const Index m = op.dim();
  detail::require(x0.size() == m, "starting point has the wrong length");
  detail::require(x0.allFinite() && x0.cwiseAbs().maxCoeff() <= 1.0,
                  "starting point must lie in [-1, 1]^m");
  for (Index i = 0; i < m; ++i)
    if (op.diag(i) < 0.0)
      throw PreconditionError("vertex ascent needs a nonnegative diagonal");
  VectorXd x = x0;
  for (Index k = 0; k < m; ++k) {
    double b = 0.0;
    op.for_each_in_row(k, [&](Index j, double w) { b += w * x[j]; });
    x[k] = b >= 0.0 ? 1.0 : -1.0;
  }
  QuboSolution sol;
  sol.solver = SolverKind::vertex_ascent;
  sol.value = quad_form(op, x);
  sol.assignment = std::move(x);
  sol.iterations = 1;
  return sol;
}

// ---------------------------------------------------------------------------
// Sign iteration

/// Synchronous update s <- sign(Ws), keeping s_i where (Ws)_i == 0.
/// Returns true when s is already a fixed point.
template <SymmetricOperator Op>
bool sign_iteration_step(const Op& op, VectorXd& s) {
  const VectorXd ws = apply(op, s);
  bool fixed = true;
  for (Index i = 0; i < s.size(); ++i) {
    if (ws[i] == 0.0) continue;
    const double next = ws[i] > 0.0 ? 1.0 : -1.0;
    if (next != s[i]) {
      s[i] = next;
      fixed = false;
    }
  }
  return fixed;
}

inline VectorXd random_signs(Index m, CounterRng& rng) {
  VectorXd s(m);
  std::uint64_t bits = 0;
  int left = 0;
  for (Index i = 0; i < m; ++i) {
    if (left == 0) {
      bits = rng();
      left = 64;
    }
    s[i] = (bits & 1ULL) ? 1.0 : -1.0;
    bits >>= 1;
    --left;
  }
  return s;
}

/// Restart r starts from random signs drawn from rng.split(r), so runs with
/// fewer restarts use a prefix of the same start pool.
template <SymmetricOperator Op>
QuboSolution sign_iteration(const Op& op, Index restarts, Index max_iters,
                            const CounterRng& rng, const Deadline& deadline = {}) {
  detail::require(restarts >= 1, "sign iteration needs at least one restart");
  detail::require(max_iters >= 1, "max_iters must be positive");
  const Index m = op.dim();
  QuboSolution best;
  best.solver = SolverKind::sign_iter;
  best.value = -std::numeric_limits<double>::infinity();
  best.converged = false;
  for (Index r = 0; r < restarts; ++r) {
    CounterRng sub = rng.split(static_cast<std::uint64_t>(r));
    VectorXd s = random_signs(m, sub);
    bool fixed = false;
    Index it = 0;
    VectorXd prev = s;
    VectorXd prev2;
    while (it < max_iters) {
      deadline.check("sign_iteration");
      prev2 = prev;
      prev = s;
      ++it;
      if ((fixed = sign_iteration_step(op, s))) break;
      // a 2-cycle repeats until max_iters; jump to the state it would end on
      if (it >= 2 && s == prev2) {
        if ((max_iters - it) % 2 != 0) s = prev;
        it = max_iters;
        break;
      }
    }
    const double v = quad_form(op, s);
    if (v > best.value) {
      best.value = v;
      best.assignment = s;
      best.converged = fixed;
      best.iterations = it;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Elliptope relaxation: max tr(WX) s.t. X PSD, diag(X) = 1, with X = V'V.

struct ElliptopeSolution {
  MatrixXd factor;  // rank x m, unit columns
  double value = 0.0;
  Index sweeps = 0;
  bool converged = false;
};

inline Index default_sdp_rank(Index m) {
  return static_cast<Index>(std::ceil(std::sqrt(2.0 * static_cast<double>(m)))) + 1;
}

inline MatrixXd random_unit_columns(Index rank, Index m, CounterRng& rng) {
  MatrixXd v(rank, m);
  for (Index i = 0; i < m; ++i) {
    double nrm = 0.0;
    while (nrm == 0.0) {
      v.col(i) = rng.normal_vector(rank);
      nrm = v.col(i).norm();
    }
    v.col(i) /= nrm;
  }
  return v;
}

/// sum_ij W_ij v_i'v_j.
template <SymmetricOperator Op>
double elliptope_objective(const Op& op, const MatrixXd& v) {
  double f = 0.0;
  for (Index i = 0; i < op.dim(); ++i)
    f += op.diag(i) * v.col(i).squaredNorm() + v.col(i).dot(row_combination(op, i, v));
  return f;
}

/// Factor close to the vertex s: column i is s_i e_1 plus Gaussian noise of
/// norm about delta, normalized. Its objective is within O(delta^2) of s'Ws.
inline MatrixXd vertex_start(const VectorXd& s, Index rank, double delta, CounterRng& rng) {
  MatrixXd v(rank, s.size());
  const double scale = delta / std::sqrt(static_cast<double>(rank));
  for (Index i = 0; i < s.size(); ++i) {
    v.col(i) = scale * rng.normal_vector(rank);
    v(0, i) += s[i];
    v.col(i).normalize();
  }
  return v;
}

/// Block coordinate ascent over the columns of V: v_i <- normalize(sum_{j != i}
/// W_ij v_j), left unchanged when that sum vanishes. Stops when both the last
/// sweep gain and its geometric extrapolation fall below tol relative.
/// Starts from `init` when given, else from random unit columns. The result is
/// replaced by the vertex sign(V'u), u the top eigenvector of VV', when that
/// vertex has the larger objective.
template <SymmetricOperator Op>
ElliptopeSolution solve_elliptope_sdp(const Op& op, Index rank, double tol,
                                      Index max_sweeps, CounterRng rng,
                                      const Deadline& deadline = {},
                                      std::optional<MatrixXd> init = std::nullopt) {
  detail::require(rank >= 2, "SDP rank must be at least 2");
  detail::require(tol > 0.0, "SDP tolerance must be positive");
  detail::require(max_sweeps >= 1, "max_sweeps must be positive");
  const Index m = op.dim();
  ElliptopeSolution out;
  if (init) {
    detail::require(init->rows() == rank && init->cols() == m,
                    "initial factor must be rank x m");
    out.factor = std::move(*init);
    for (Index i = 0; i < m; ++i) {
      const double nrm = out.factor.col(i).norm();
      detail::require(nrm > 0.0, "initial factor has a zero column");
      out.factor.col(i) /= nrm;
    }
  } else {
    out.factor = random_unit_columns(rank, m, rng);
  }
  MatrixXd& v = out.factor;
  double f = elliptope_objective(op, v);
  double prev_change = 0.0;
  for (Index sweep = 1; sweep <= max_sweeps; ++sweep) {
    deadline.check("solve_elliptope_sdp");
    const double before = f;
    for (Index i = 0; i < m; ++i) {
      const VectorXd g = row_combination(op, i, v);
      const double nrm = g.norm();
      if (nrm == 0.0) continue;
      const VectorXd fresh = g / nrm;
      f += 2.0 * (fresh - v.col(i)).dot(g);
      v.col(i) = fresh;
    }
    out.sweeps = sweep;
    const double change = f - before;
    if (change <= 0.0) {
      out.converged = true;
      break;
    }
    // geometric estimate of the gain still to come
    const double q = prev_change > 0.0 ? change / prev_change : 1.0;
    const double ahead = q < 1.0 ? change * q / (1.0 - q) : std::numeric_limits<double>::infinity();
    prev_change = change;
    if (change <= tol * std::abs(f) && ahead <= tol * std::abs(f)) {
      out.converged = true;
      break;
    }
  }
  out.value = elliptope_objective(op, v);
  // every vertex is feasible: snap to the dominant-direction rounding when it scores higher
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(v * v.transpose());
  const VectorXd proj = v.transpose() * eig.eigenvectors().col(rank - 1);
  const VectorXd s =
      (proj.array() >= 0.0).select(VectorXd::Ones(m), -VectorXd::Ones(m));
  const double snapped = quad_form(op, s);
  if (snapped > out.value) {
    v.setZero();
    v.row(0) = s.transpose();
    out.value = snapped;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Goemans-Williamson rounding

/// Trial t draws its hyperplane normal from rng.split(t); s_i = sign(v_i'r)
/// with sign(0) = +1. The best trial wins, earliest on ties.
template <SymmetricOperator Op>
QuboSolution gw_round(const MatrixXd& factor, const Op& op, Index trials,
                      const CounterRng& rng, const Deadline& deadline = {}) {
  detail::require(trials >= 1, "rounding needs at least one trial");
  detail::require(factor.cols() == op.dim(), "factor has the wrong number of columns");
  QuboSolution best;
  best.solver = SolverKind::sdp_gw;
  best.value = -std::numeric_limits<double>::infinity();
  for (Index t = 0; t < trials; ++t) {
    if ((t & 15) == 0) deadline.check("gw_round");
    CounterRng sub = rng.split(static_cast<std::uint64_t>(t));
    const VectorXd r = sub.normal_vector(factor.rows());
    const VectorXd proj = factor.transpose() * r;
    VectorXd s = (proj.array() >= 0.0).select(VectorXd::Ones(proj.size()),
                                              -VectorXd::Ones(proj.size()));
    const double v = quad_form(op, s);
    if (v > best.value) {
      best.value = v;
      best.assignment = std::move(s);
      best.iterations = t + 1;
    }
  }
  return best;
}

/// Expected value of one rounding: sum_ij W_ij (1 - (2/pi) arccos(v_i'v_j)).
template <SymmetricOperator Op>
double gw_expected_value(const MatrixXd& factor, const Op& op) {
  detail::require(factor.cols() == op.dim(), "factor has the wrong number of columns");
  double total = 0.0;
  for (Index i = 0; i < op.dim(); ++i) {
    total += op.diag(i);
    op.for_each_in_row(i, [&](Index j, double w) {
      const double c = std::clamp(factor.col(i).dot(factor.col(j)), -1.0, 1.0);
      total += w * (1.0 - 2.0 / std::numbers::pi * std::acos(c));
    });
  }
  return total;
}

/// alpha * nu_rlx - (1 - alpha) * sum_ij |W_ij|.
template <SymmetricOperator Op>
double gw_approx_bound(const Op& op, double relaxation_value) {
  return kGwAlpha * relaxation_value - (1.0 - kGwAlpha) * abs_sum(op);
}

struct SdpGwOptions {
  Index rank = 0;  // 0 selects ceil(sqrt(2m)) + 1
  double tol = 1e-7;
  Index max_sweeps = 500;
  Index trials = 256;
  Index polish_sweeps = 100;
};

/// Relaxation followed by rounding, with the relaxation data attached. When
/// the ascent stops on max_sweeps and a rounded vertex beats the relaxation
/// value, the ascent is restarted next to that vertex for polish_sweeps and
/// rounded again; the better of the two factors is kept.
template <SymmetricOperator Op>
QuboSolution solve_sdp_gw(const Op& op, const SdpGwOptions& opt, const CounterRng& rng,
                          const Deadline& deadline = {}) {
  const Index rank = opt.rank > 0 ? opt.rank : default_sdp_rank(op.dim());
  ElliptopeSolution rel = solve_elliptope_sdp(op, rank, opt.tol, opt.max_sweeps,
                                              rng.split(0), deadline);
  QuboSolution sol = gw_round(rel.factor, op, opt.trials, rng.split(1), deadline);
  if (!rel.converged && opt.polish_sweeps > 0 && sol.value > rel.value) {
    CounterRng init_rng = rng.split(2);
    ElliptopeSolution again =
        solve_elliptope_sdp(op, rank, opt.tol, opt.polish_sweeps, rng.split(3), deadline,
                            vertex_start(sol.assignment, rank, 1e-3, init_rng));
    QuboSolution second = gw_round(again.factor, op, opt.trials, rng.split(4), deadline);
    if (second.value > sol.value) sol = std::move(second);
    if (again.value > rel.value) rel = std::move(again);
  }
  sol.relaxation_value = rel.value;
  sol.gw_bound = gw_approx_bound(op, rel.value);
  sol.converged = rel.converged;
  sol.iterations = rel.sweeps;
  sol.factor = std::move(rel.factor);
  return sol;
}

}  // namespace etcb
