#pragma once

// Latent linear dynamical system with bilinear reward:
//   x_{t+1} = A x_t + B u_t + w_t,   r_t = u_t' C x_t + z_t,   x_0 = 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "etcb/error.hpp"
#include "etcb/rng.hpp"

namespace etcb {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double spectral_radius(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  return svd.singularValues()(0);
}

/// Symmetric PSD square root; tiny negative eigenvalues from round-off are
/// clamped to zero.
inline MatrixXd psd_sqrt(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  const VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// The true system. Immutable once created; share freely across threads.
class SystemParams {
 public:
  static SystemParams create(MatrixXd a, MatrixXd b, MatrixXd c,
                             MatrixXd sigma_w, double sigma_z) {
    const Index n = a.rows();
    detail::require(n >= 1 && a.cols() == n, "A must be square and nonempty");
    detail::require(b.rows() == n && b.cols() >= 1, "B must have n rows");
    const Index p = b.cols();
    detail::require(c.rows() == p && c.cols() == n,
                    "C must be p x n (p = number of columns of B)");
    detail::require(sigma_w.rows() == n && sigma_w.cols() == n,
                    "sigma_w must be n x n");
    detail::require(std::isfinite(sigma_z) && sigma_z >= 0.0,
                    "sigma_z must be nonnegative");
    detail::require(a.allFinite() && b.allFinite() && c.allFinite() &&
                        sigma_w.allFinite(),
                    "system matrices must be finite");
    const double asym = (sigma_w - sigma_w.transpose()).cwiseAbs().maxCoeff();
    detail::require(asym <= 1e-12 * (1.0 + sigma_w.cwiseAbs().maxCoeff()),
                    "sigma_w must be symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma_w);
    detail::require(
        es.eigenvalues().minCoeff() >=
            -1e-12 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()),
        "sigma_w must be positive semidefinite");
    const double rho = spectral_radius(a);
    detail::require(rho < 1.0, "A must be Schur stable (spectral radius " +
                                   std::to_string(rho) + " >= 1)");

    SystemParams s;
    s.a_ = std::move(a);
    s.b_ = std::move(b);
    s.c_ = std::move(c);
    s.sigma_w_ = std::move(sigma_w);
    s.sigma_w_sqrt_ = psd_sqrt(s.sigma_w_);
    s.sigma_z_ = sigma_z;
    s.rho_a_ = rho;
    return s;
  }

  const MatrixXd& A() const noexcept { return a_; }
  const MatrixXd& B() const noexcept { return b_; }
  const MatrixXd& C() const noexcept { return c_; }
  const MatrixXd& sigma_w() const noexcept { return sigma_w_; }
  const MatrixXd& sigma_w_sqrt() const noexcept { return sigma_w_sqrt_; }
  double sigma_z() const noexcept { return sigma_z_; }
  double rho_A() const noexcept { return rho_a_; }
  Index n() const noexcept { return a_.rows(); }
  Index p() const noexcept { return b_.cols(); }

  /// Same dynamics with the noise switched off.
  SystemParams noiseless() const {
    return create(a_, b_, c_, MatrixXd::Zero(n(), n()), 0.0);
  }

 private:
  SystemParams() = default;
  MatrixXd a_, b_, c_, sigma_w_, sigma_w_sqrt_;
  double sigma_z_ = 0.0;
  double rho_a_ = 0.0;
};

/// Small system used for the regret experiments: A = diag(0.3, 0.15, 0.12).
inline SystemParams toy_system(double noise_std = 0.01) {
  MatrixXd a = MatrixXd::Zero(3, 3);
  a.diagonal() << 0.3, 0.15, 0.12;
  MatrixXd b(3, 2);
  b << 1, 0, 0, 1, 0.5, 0.4;
  MatrixXd c(2, 3);
  c << 1, 0, 0, 0, 1, 0.3;
  return SystemParams::create(a, b, c,
                              noise_std * noise_std * MatrixXd::Identity(3, 3),
                              noise_std);
}

/// One run: column t of each matrix is time t. Rounds t = 0..T.
struct Trajectory {
  MatrixXd actions;        // p x (T+1)
  MatrixXd states;         // n x (T+1), states.col(0) == 0
  VectorXd rewards;        // T+1
  MatrixXd process_noise;  // n x T, w_t for t < T
  VectorXd reward_noise;   // T+1, z_t
  std::uint64_t noise_seed = 0;

  Index rounds() const noexcept { return rewards.size(); }
};

/// Steps the system one round at a time so a policy can choose later actions
/// after seeing earlier rewards.
class Simulator {
 public:
  Simulator(const SystemParams& params, CounterRng process_rng,
            CounterRng reward_rng)
      : params_(&params),
        process_rng_(process_rng),
        reward_rng_(reward_rng),
        x_(VectorXd::Zero(params.n())) {}

  /// Plays u at the current round, returns r_t and advances the state.
  double step(const VectorXd& u) {
    detail::require(u.size() == params_->p(), "action dimension mismatch");
    const double z = params_->sigma_z() * reward_rng_.normal();
    const VectorXd w =
        params_->sigma_w_sqrt() * process_rng_.normal_vector(params_->n());
    const double r = u.dot(params_->C() * x_) + z;
    last_w_ = w;
    last_z_ = z;
    x_ = params_->A() * x_ + params_->B() * u + w;
    ++t_;
    return r;
  }

  const VectorXd& state() const noexcept { return x_; }
  const VectorXd& last_process_noise() const noexcept { return last_w_; }
  double last_reward_noise() const noexcept { return last_z_; }
  Index round() const noexcept { return t_; }

 private:
  const SystemParams* params_;
  CounterRng process_rng_;
  CounterRng reward_rng_;
  VectorXd x_;
  VectorXd last_w_;
  double last_z_ = 0.0;
  Index t_ = 0;
};

inline Trajectory simulate_trajectory(const SystemParams& params,
                                      const MatrixXd& actions,
                                      CounterRng process_rng,
                                      CounterRng reward_rng) {
  detail::require(actions.rows() == params.p(),
                  "actions must have p rows (one column per round)");
  detail::require(actions.cols() >= 1, "at least one round is required");
  const Index rounds = actions.cols();
  Trajectory traj;
  traj.actions = actions;
  traj.states.resize(params.n(), rounds);
  traj.rewards.resize(rounds);
  traj.process_noise.resize(params.n(), rounds - 1);
  traj.reward_noise.resize(rounds);
  traj.noise_seed = process_rng.key() ^ reward_rng.key();

  Simulator sim(params, process_rng, reward_rng);
  for (Index t = 0; t < rounds; ++t) {
    traj.states.col(t) = sim.state();
    traj.rewards[t] = sim.step(actions.col(t));
    traj.reward_noise[t] = sim.last_reward_noise();
    if (t + 1 < rounds) traj.process_noise.col(t) = sim.last_process_noise();
  }
  return traj;
}

/// Streams derived from (seed, replicate).
inline Trajectory simulate_trajectory(const SystemParams& params,
                                      const MatrixXd& actions,
                                      std::uint64_t seed,
                                      std::uint64_t replicate) {
  return simulate_trajectory(
      params, actions, make_stream(seed, replicate, StreamRole::process_noise),
      make_stream(seed, replicate, StreamRole::reward_noise));
}

/// Re-runs the recursion with recorded noises.
inline Trajectory replay_trajectory(const SystemParams& params,
                                    const MatrixXd& actions,
                                    const MatrixXd& process_noise,
                                    const VectorXd& reward_noise) {
  detail::require(actions.rows() == params.p(), "actions must have p rows");
  const Index rounds = actions.cols();
  detail::require(process_noise.rows() == params.n() &&
                      process_noise.cols() == rounds - 1 &&
                      reward_noise.size() == rounds,
                  "recorded noise does not match the number of rounds");
  Trajectory traj;
  traj.actions = actions;
  traj.process_noise = process_noise;
  traj.reward_noise = reward_noise;
  traj.states.resize(params.n(), rounds);
  traj.rewards.resize(rounds);
  VectorXd x = VectorXd::Zero(params.n());
  for (Index t = 0; t < rounds; ++t) {
    traj.states.col(t) = x;
    traj.rewards[t] = actions.col(t).dot(params.C() * x) + reward_noise[t];
    if (t + 1 < rounds)
      x = params.A() * x + params.B() * actions.col(t) + process_noise.col(t);
  }
  return traj;
}

/// i.i.d. uniform {-1,+1}^p actions, one per column.
inline MatrixXd sample_rademacher_actions(Index p, Index count,
                                          CounterRng& rng) {
  detail::require(p >= 1 && count >= 0, "invalid action dimensions");
  MatrixXd u(p, count);
  std::uint64_t bits = 0;
  int left = 0;
  for (Index t = 0; t < count; ++t) {
    for (Index i = 0; i < p; ++i) {
      if (left == 0) {
        bits = rng();
        left = 64;
      }
      u(i, t) = (bits & 1ULL) ? 1.0 : -1.0;
      bits >>= 1;
      --left;
    }
  }
  return u;
}

struct StabilityProfile {
  double rho_A = 0.0;
  double rho = 0.0;
  double phi = 1.0;    // sup_k ||A^k|| / rho^k over k = 0..horizon
  double kappa = 0.0;  // max(||B||, ||C||)
  Index horizon = 0;   // last power examined
};

/// phi(A, rho) = sup_k ||(A/rho)^k||_2. Once some power has norm q <= 1,
/// submultiplicativity bounds every later ratio by q^m times an earlier one,
/// so the maximum over the powers seen so far is exact.
inline StabilityProfile stability_profile(const MatrixXd& a, double rho,
                                          Index k_max = 1000) {
  const double rho_a = spectral_radius(a);
  detail::require(rho > rho_a, "rho must exceed the spectral radius of A");
  detail::require(rho < 1.0, "rho must be below one");

  StabilityProfile prof;
  prof.rho_A = rho_a;
  prof.rho = rho;
  prof.phi = 1.0;
  MatrixXd scaled = MatrixXd::Identity(a.rows(), a.cols());
  for (Index k = 1; k <= k_max; ++k) {
    scaled = (scaled * a) / rho;
    const double ratio = spectral_norm(scaled);
    prof.horizon = k;
    if (ratio <= 1.0) return prof;
    prof.phi = std::max(prof.phi, ratio);
  }
  throw DiagnosticError("phi(A, rho): no power of A/rho reached norm 1 within " +
                        std::to_string(k_max) + " steps");
}

inline StabilityProfile stability_profile(const SystemParams& params,
                                          double rho, Index k_max = 1000) {
  StabilityProfile prof = stability_profile(params.A(), rho, k_max);
  prof.kappa = std::max(spectral_norm(params.B()), spectral_norm(params.C()));
  return prof;
}

/// Decay rate used when the caller does not pick one: (1 + rho(A)) / 2.
inline double default_decay_rate(const SystemParams& params) {
  return 0.5 * (1.0 + params.rho_A());
}

}  // namespace etcb
