#pragma once

// Explore-then-commit: Rademacher exploration over t = 0..H, least-squares
// estimate of the first L Markov parameters, then a fixed commit sequence
// for t = H+1..T that maximizes the estimated expected reward.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "etcb/deadline.hpp"
#include "etcb/error.hpp"
#include "etcb/lds.hpp"
#include "etcb/markov.hpp"
#include "etcb/qubo.hpp"
#include "etcb/rng.hpp"
#include "etcb/toeplitz.hpp"

namespace etcb {

struct SolverOptions {
  Index trials = 256;     // GW rounding trials
  Index restarts = 256;   // sign-iteration restarts
  Index max_iters = 200;  // sign-iteration steps per restart
  Index rank = 0;         // SDP rank, 0 = ceil(sqrt(2m)) + 1
  double tol = 1e-7;
  Index max_sweeps = 500;
};

/// Uniform dispatch over the solver kinds. vertex_ascent starts from a
/// uniform point of the cube drawn from rng.
template <SymmetricOperator Op>
QuboSolution solve_qubo(const Op& op, SolverKind kind, const SolverOptions& opt,
                        const CounterRng& rng, const Deadline& deadline = {}) {
  switch (kind) {
    case SolverKind::brute:
      return brute_force_max(op, deadline);
    case SolverKind::sign_iter:
      return sign_iteration(op, opt.restarts, opt.max_iters, rng, deadline);
    case SolverKind::sdp_gw:
      return solve_sdp_gw(op, SdpGwOptions{opt.rank, opt.tol, opt.max_sweeps, opt.trials},
                          rng, deadline);
    case SolverKind::vertex_ascent: {
      CounterRng r = rng;
      VectorXd x0(op.dim());
      for (Index i = 0; i < x0.size(); ++i) x0[i] = 2.0 * r.uniform() - 1.0;
      return vertex_ascent(op, x0);
    }
  }
  throw InputError("unknown solver");
}

/// max 1/2 u'Su over stacked +-1 actions. The returned value is 1/2 u'Su.
inline QuboSolution oracle_actions(const RewardQuadratic& s, SolverKind kind,
                                   const SolverOptions& opt, const CounterRng& rng,
                                   const Deadline& deadline = {}) {
  return solve_qubo(s.qubo(), kind, opt, rng, deadline);
}

struct EtcConfig {
  Index T = 0;
  Index H = 0;
  Index L = 1;
  SolverKind commit_solver = SolverKind::sdp_gw;
  SolverOptions solver;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;

  void validate() const {
    detail::require(H >= 0 && H < T, "need 0 <= H < T");
    detail::require(L >= 1 && L <= H, "need 1 <= L <= H");
    detail::require(H - L >= 1, "need H - L >= 1 regression rows");
    detail::require(commit_solver != SolverKind::vertex_ascent,
                    "commit solver must be brute, sign_iter or sdp_gw");
  }
};

struct EtcTimings {
  double explore_ms = 0.0;
  double estimate_ms = 0.0;
  double commit_ms = 0.0;
};

struct EtcRunRecord {
  Trajectory trajectory;        // rounds 0..T
  MarkovParams estimated;
  VectorXd commit_actions;      // stack [u_T; ...; u_{H+1}]
  QuboSolution commit_solution;
  double realized_total_reward = 0.0;
  double realized_commit_reward = 0.0;
  double expected_commit_value = 0.0;  // 1/2 u' S_hat u
  EtcTimings timings;
};

namespace detail {
inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}
}  // namespace detail

inline EtcRunRecord run_etc(const SystemParams& params, const EtcConfig& cfg,
                            const Deadline& deadline = {}) {
  cfg.validate();
  const Index p = params.p();
  const Index rounds = cfg.T + 1;
  using clock = std::chrono::steady_clock;

  auto t0 = clock::now();
  CounterRng action_rng = make_stream(cfg.seed, cfg.replicate, StreamRole::actions);
  Simulator sim(params, make_stream(cfg.seed, cfg.replicate, StreamRole::process_noise),
                make_stream(cfg.seed, cfg.replicate, StreamRole::reward_noise));
  Trajectory traj;
  traj.actions.resize(p, rounds);
  traj.states.resize(params.n(), rounds);
  traj.rewards.resize(rounds);
  traj.process_noise.resize(params.n(), rounds - 1);
  traj.reward_noise.resize(rounds);
  traj.noise_seed = cfg.seed;
  const auto play = [&](Index t, const VectorXd& u) {
    traj.actions.col(t) = u;
    traj.states.col(t) = sim.state();
    traj.rewards[t] = sim.step(u);
    traj.reward_noise[t] = sim.last_reward_noise();
    if (t + 1 < rounds) traj.process_noise.col(t) = sim.last_process_noise();
  };

  const MatrixXd explore = sample_rademacher_actions(p, cfg.H + 1, action_rng);
  for (Index t = 0; t <= cfg.H; ++t) play(t, explore.col(t));
  const double explore_ms = detail::ms_since(t0);

  t0 = clock::now();
  const CovariateSet cov =
      build_covariates(explore, traj.rewards.head(cfg.H + 1), cfg.L);
  MarkovParams est = estimate_markov(cov, p, cfg.L);
  const double estimate_ms = detail::ms_since(t0);

  t0 = clock::now();
  const RewardQuadratic s_hat = build_estimated_S(est, cfg.T - cfg.H - 1);
  QuboSolution sol =
      oracle_actions(s_hat, cfg.commit_solver, cfg.solver,
                     make_stream(cfg.seed, cfg.replicate, StreamRole::rounding), deadline);
  const double commit_ms = detail::ms_since(t0);

  const MatrixXd commit = from_stack(sol.assignment, p);
  for (Index k = 0; k < commit.cols(); ++k) play(cfg.H + 1 + k, commit.col(k));

  EtcRunRecord rec{std::move(traj), std::move(est), sol.assignment, sol, 0.0, 0.0, 0.0, {}};
  rec.realized_total_reward = rec.trajectory.rewards.sum();
  rec.realized_commit_reward = rec.trajectory.rewards.tail(cfg.T - cfg.H).sum();
  rec.expected_commit_value = expected_reward_quadratic(s_hat, rec.commit_actions);
  rec.timings = {explore_ms, estimate_ms, commit_ms};
  return rec;
}

// ---------------------------------------------------------------------------
// Regret

struct RegretTerms {
  double oracle_value = 0.0;  // 1/2 u*' S_T u*
  double policy_value = 0.0;  // 1/2 u_pi' S_sub u_pi
  double regret = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
};

/// r1 = u*'S_T u* - u~'S_sub u~, r2 = u~'S_sub u~ - u_pi'S_hat u_pi,
/// r3 = u_pi'(S_hat - S_sub) u_pi; regret = (r1 + r2 + r3) / 2.
inline RegretTerms regret_decomposition(const RewardQuadratic& s_T,
                                        const RewardQuadratic& s_sub,
                                        const RewardQuadratic& s_hat,
                                        const VectorXd& u_star, const VectorXd& u_tilde,
                                        const VectorXd& u_pi) {
  detail::require(u_star.size() == s_T.dim(), "u* does not match S_T");
  detail::require(u_tilde.size() == s_sub.dim() && u_pi.size() == s_sub.dim(),
                  "commit actions do not match S_sub");
  detail::require(s_hat.dim() == s_sub.dim() && s_hat.p() == s_sub.p(),
                  "S_hat and S_sub differ in shape");
  const double full = quad_form(s_T.S(), u_star);
  const double tilde = quad_form(s_sub.S(), u_tilde);
  const double pi_hat = quad_form(s_hat.S(), u_pi);
  const double pi_true = quad_form(s_sub.S(), u_pi);
  RegretTerms r;
  r.oracle_value = 0.5 * full;
  r.policy_value = 0.5 * pi_true;
  r.regret = r.oracle_value - r.policy_value;
  r.r1 = full - tilde;
  r.r2 = tilde - pi_hat;
  r.r3 = pi_hat - pi_true;
  return r;
}

struct TheoreticalBounds {
  double bound_r1 = 0.0;
  double bound_r23 = 0.0;
  double phi = 1.0;
  double kappa = 0.0;
  double rho = 0.0;
};

/// Bounds from the constants directly.
inline TheoreticalBounds theoretical_bounds(Index p, double kappa, double phi, double rho,
                                            Index H, Index L, Index T, double epsilon) {
  detail::require(rho > 0.0 && rho < 1.0, "rho must lie in (0, 1)");
  detail::require(epsilon >= 0.0, "epsilon must be nonnegative");
  detail::require(H >= 0 && H <= T && L >= 0, "need 0 <= H <= T and L >= 0");
  const double pd = static_cast<double>(p);
  const double k2 = kappa * kappa;
  const double alpha = 1.0 + phi * rho / (1.0 - rho);
  const double beta = phi * rho / ((1.0 - rho) * (1.0 - rho)) + 1.0;
  const double gamma = phi * std::pow(rho, static_cast<double>(L)) / (1.0 - rho);
  TheoreticalBounds b;
  b.bound_r1 = 2.0 * pd * k2 * (alpha * static_cast<double>(H) + beta);
  b.bound_r23 = 2.0 * pd * static_cast<double>(T - H) * (epsilon + k2 * gamma);
  b.phi = phi;
  b.kappa = kappa;
  b.rho = rho;
  return b;
}

inline TheoreticalBounds theoretical_bounds(const SystemParams& params, double rho,
                                            Index H, Index L, Index T, double epsilon) {
  if (!(rho > params.rho_A() && rho < 1.0))
    throw InputError("rho must lie in (rho(A), 1)");
  const StabilityProfile prof = stability_profile(params, rho);
  return theoretical_bounds(params.p(), prof.kappa, prof.phi, rho, H, L, T, epsilon);
}

/// H = round(c1 T^(2/3)).
inline Index schedule_H(Index T, double c1) {
  detail::require(T >= 1 && c1 > 0.0, "need T >= 1 and c1 > 0");
  return static_cast<Index>(std::llround(c1 * std::pow(static_cast<double>(T), 2.0 / 3.0)));
}

/// L = max(1, round(c2 log T)).
inline Index schedule_L(Index T, double c2) {
  detail::require(T >= 1 && c2 > 0.0, "need T >= 1 and c2 > 0");
  return std::max<Index>(1, std::llround(c2 * std::log(static_cast<double>(T))));
}

/// True-parameter quantities shared by every replicate with the same (T, H).
struct OracleContext {
  Index T = 0;
  Index H = 0;
  RewardQuadratic s_T;
  RewardQuadratic s_sub;
  QuboSolution u_star;   // maximizer of 1/2 u'S_T u
  QuboSolution u_tilde;  // maximizer of 1/2 u'S_sub u
};

/// Oracle stream index, kept apart from replicate indices.
inline constexpr std::uint64_t kOracleReplicate = 0xFFFFFFFFull;

inline OracleContext build_oracle(const SystemParams& params, Index T, Index H,
                                  SolverKind oracle_solver, SolverKind tilde_solver,
                                  const SolverOptions& opt, std::uint64_t seed,
                                  const Deadline& deadline = {}) {
  detail::require(H >= 0 && H < T, "need 0 <= H < T");
  OracleContext ctx{T, H, build_true_reward(params, T),
                    build_true_reward(params, T - H - 1), {}, {}};
  const CounterRng rng = make_stream(seed, kOracleReplicate, StreamRole::rounding);
  ctx.u_star = oracle_actions(ctx.s_T, oracle_solver, opt, rng.split(0), deadline);
  ctx.u_tilde = oracle_actions(ctx.s_sub, tilde_solver, opt, rng.split(1), deadline);
  return ctx;
}

struct RegretReport {
  RegretTerms terms;
  TheoreticalBounds bounds;
  double epsilon = 0.0;  // ||G - G_hat||_F
  double r3_abs = 0.0;  // |u_pi'(S_hat - S_sub)u_pi|
  SolverKind oracle_solver = SolverKind::sdp_gw;
};

inline RegretReport evaluate_regret(const SystemParams& params, const OracleContext& ctx,
                                    const EtcRunRecord& rec, std::optional<double> rho = {}) {
  const Index L = rec.estimated.L();
  const RewardQuadratic s_hat = build_estimated_S(rec.estimated, ctx.T - ctx.H - 1);
  RegretReport rep;
  rep.terms = regret_decomposition(ctx.s_T, ctx.s_sub, s_hat, ctx.u_star.assignment,
                                   ctx.u_tilde.assignment, rec.commit_actions);
  rep.epsilon = estimation_error(rec.estimated, true_markov(params, L)).frobenius;
  rep.bounds = theoretical_bounds(params, rho.value_or(default_decay_rate(params)), ctx.H,
                                  L, ctx.T, rep.epsilon);
  rep.r3_abs = std::abs(rep.terms.r3);
  rep.oracle_solver = ctx.u_star.solver;
  return rep;
}

}  // namespace etcb
