#include <gtest/gtest.h>

#include "etcb/experiment.hpp"
#include "etcb/qubo.hpp"
#include "etcb/toeplitz.hpp"

using namespace etcb;

namespace {

// Expected reward by the time index: E r_t = u_t' sum_{i<t} C A^{t-i-1} B u_i,
// entry (t, i) of M lives at block row h - t, block column h - i.
MatrixXd time_indexed_M(const SystemParams& s, Index h) {
  const Index p = s.p();
  MatrixXd m = MatrixXd::Zero((h + 1) * p, (h + 1) * p);
  for (Index t = 0; t <= h; ++t) {
    MatrixXd ak = MatrixXd::Identity(s.n(), s.n());
    for (Index i = t - 1; i >= 0; --i) {
      m.block((h - t) * p, (h - i) * p, p, p) = s.C() * ak * s.B();
      ak = ak * s.A();
    }
  }
  return m;
}

SystemParams random_system(std::uint64_t seed, Index n = 4, Index p = 2, double rho = 0.7) {
  CounterRng r(seed);
  return random_stable_system(n, p, rho, 0.1, 0.1, r);
}

}  // namespace

TEST(RewardMatrix, ZeroGenerator) {
  const RewardQuadratic q = build_reward_matrix(std::vector<MatrixXd>{}, 5, 2);
  EXPECT_EQ(q.dim(), 12);
  EXPECT_EQ(q.dense_S().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(q.apply_S(VectorXd::Ones(12)).norm(), 0.0);
  EXPECT_EQ(expected_reward_quadratic(q, VectorXd::Zero(12)), 0.0);
}

TEST(RewardMatrix, ScalarOneStep) {
  const RewardQuadratic q = build_reward_matrix({MatrixXd::Constant(1, 1, 2.0)}, 1, 1);
  MatrixXd m(2, 2);
  m << 0, 2, 0, 0;
  EXPECT_TRUE(q.dense_M() == m);
  EXPECT_DOUBLE_EQ(expected_reward_quadratic(q, VectorXd::Ones(2)), 2.0);
  EXPECT_THROW(expected_reward_quadratic(q, VectorXd::Ones(3)), InputError);
}

TEST(RewardMatrix, SymmetricWithZeroDiagonalBlocks) {
  const RewardQuadratic q = build_true_reward(toy_system(), 7);
  const MatrixXd s = q.dense_S();
  EXPECT_TRUE(s.isApprox(s.transpose(), 0.0));
  for (Index a = 0; a <= 7; ++a) EXPECT_EQ(s.block(a * 2, a * 2, 2, 2).norm(), 0.0);
}

TEST(RewardMatrix, MatchesTimeIndexedOracle) {
  for (std::uint64_t k = 0; k < 5; ++k) {
    const SystemParams s = random_system(k, 4, 2, 0.9);
    const Index h = 12;
    const MatrixXd oracle = time_indexed_M(s, h);
    const RewardQuadratic q = build_true_reward(s, h, 0.0);
    EXPECT_LT((q.dense_M() - oracle).cwiseAbs().maxCoeff(), 1e-13);
    const RewardQuadratic trunc = build_true_reward(s, h);
    EXPECT_LT((trunc.dense_M() - oracle).cwiseAbs().maxCoeff(), 1e-13 * oracle.norm());
  }
}

TEST(RewardMatrix, QuadraticFormIsExpectedReward) {
  const SystemParams s = random_system(3);
  const Index h = 9;
  const RewardQuadratic q = build_true_reward(s, h);
  CounterRng ar(4);
  const MatrixXd u = sample_rademacher_actions(2, h + 1, ar);
  const Trajectory clean = simulate_trajectory(s.noiseless(), u, 1, 0);
  EXPECT_NEAR(expected_reward_quadratic(q, to_stack(u)), clean.rewards.sum(), 1e-12);
}

TEST(RewardMatrix, MonteCarloExpectedReward) {
  for (std::uint64_t k = 0; k < 3; ++k) {
    const SystemParams s = random_system(10 + k, 3, 2, 0.6);
    const Index h = 6;
    CounterRng ar(20 + k);
    const MatrixXd u = sample_rademacher_actions(2, h + 1, ar);
    const double target = expected_reward_quadratic(build_true_reward(s, h), to_stack(u));
    const int draws = 10000;
    double sum = 0, sq = 0;
    for (int d = 0; d < draws; ++d) {
      const double total = simulate_trajectory(s, u, 30 + k, d).rewards.sum();
      sum += total;
      sq += total * total;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sq / draws - mean * mean) / draws);
    EXPECT_LE(std::abs(mean - target), 4 * se) << "system " << k;
  }
}

TEST(RewardMatrix, CommitPhaseIsolation) {
  // With fresh exploration each replay and fixed later actions, the expected
  // reward over rounds H+1..T equals the sub-horizon quadratic form.
  const SystemParams s = random_system(40, 3, 2, 0.7);
  const Index T = 10, H = 4;
  CounterRng cr(41);
  const MatrixXd commit = sample_rademacher_actions(2, T - H, cr);
  const double target =
      expected_reward_quadratic(build_true_reward(s, T - H - 1), to_stack(commit));
  const int draws = 20000;
  double sum = 0, sq = 0;
  for (int d = 0; d < draws; ++d) {
    CounterRng er = make_stream(42, d, StreamRole::actions);
    MatrixXd u(2, T + 1);
    u.leftCols(H + 1) = sample_rademacher_actions(2, H + 1, er);
    u.rightCols(T - H) = commit;
    const Trajectory tr = simulate_trajectory(s, u, 43, d);
    const double c = tr.rewards.tail(T - H).sum();
    sum += c;
    sq += c * c;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sq / draws - mean * mean) / draws);
  EXPECT_LE(std::abs(mean - target), 4 * se);
}

TEST(RewardMatrix, OperatorMatchesDense) {
  const SystemParams s = random_system(50, 3, 3, 0.8);
  const RewardQuadratic q = build_true_reward(s, 15);
  const MatrixXd dense = q.dense_S();
  CounterRng r(51);
  const VectorXd x = r.normal_vector(q.dim());
  EXPECT_LT((q.apply_S(x) - dense * x).norm(), 1e-12 * (dense * x).norm());
  EXPECT_LT((to_dense(q.S()) - dense).cwiseAbs().maxCoeff(), 0.0 + 1e-15);
  const MatrixXd v = r.normal_vector(3 * q.dim()).reshaped(3, q.dim());
  const auto w = q.qubo();
  for (Index i = 0; i < q.dim(); i += 7) {
    VectorXd expect = 0.5 * v * dense.col(i);
    EXPECT_LT((row_combination(w, i, v) - expect).norm(), 1e-12 * (1 + expect.norm()));
  }
  EXPECT_NEAR(quad_form(w, x), 0.5 * x.dot(dense * x), 1e-10 * (1 + std::abs(x.dot(dense * x))));
}

TEST(RewardMatrix, TruncatedGeneratorIsBanded) {
  const RewardQuadratic q = build_true_reward(toy_system(), 600);
  EXPECT_LT(q.bandwidth(), 60);
  EXPECT_GT(q.bandwidth(), 10);
  const RewardQuadratic full = build_true_reward(toy_system(), 100, 0.0);
  const RewardQuadratic cut = build_true_reward(toy_system(), 100);
  CounterRng r(60);
  const VectorXd x = r.normal_vector(full.dim());
  EXPECT_LT((full.apply_S(x) - cut.apply_S(x)).norm(), 1e-13 * full.apply_S(x).norm());
}

TEST(RewardMatrix, DenseGuard) {
  const RewardQuadratic q = build_true_reward(toy_system(), 2100);
  EXPECT_GT(q.dim(), kMaxDenseDim);
  EXPECT_THROW(q.dense_S(), PreconditionError);
  EXPECT_EQ(q.apply_S(VectorXd::Ones(q.dim())).size(), q.dim());
}

TEST(EstimatedS, TruthWithLongTruncationEqualsS) {
  const SystemParams s = random_system(70);
  const Index h = 8;
  const RewardQuadratic est = build_estimated_S(true_markov(s, 12), h);
  const RewardQuadratic truth = build_true_reward(s, h, 0.0);
  EXPECT_TRUE(est.dense_S() == truth.dense_S());
}

TEST(EstimatedS, SingleLagIsOneBand) {
  const MarkovParams g = true_markov(toy_system(), 1);
  const MatrixXd s = build_estimated_S(g, 6).dense_S();
  for (Index a = 0; a <= 6; ++a)
    for (Index b = 0; b <= 6; ++b) {
      const double nrm = s.block(a * 2, b * 2, 2, 2).norm();
      if (std::abs(a - b) == 1)
        EXPECT_GT(nrm, 0.0);
      else
        EXPECT_EQ(nrm, 0.0);
    }
}

TEST(EstimatedS, PerturbationCountsToeplitzRepeats) {
  const Index h = 9, L = 3;
  const MarkovParams g = true_markov(toy_system(), L);
  const MatrixXd base = build_estimated_S(g, h).dense_S();
  for (Index k = 0; k < L; ++k) {
    MatrixXd pert = g.G();
    pert(1, k * 2 + 0) += 0.25;
    const MatrixXd changed =
        build_estimated_S(MarkovParams(pert, 2, Provenance::estimated), h).dense_S();
    const MatrixXd diff = changed - base;
    const Index count = (diff.array().abs() > 1e-12).count();
    EXPECT_EQ(count, 2 * (h - k)) << "block " << k;
    EXPECT_NEAR(diff.cwiseAbs().maxCoeff(), 0.25, 1e-14);
  }
}

TEST(Stack, RoundTripAndOrder) {
  MatrixXd u(2, 3);
  u << 1, 2, 3, 4, 5, 6;
  const VectorXd s = to_stack(u);
  VectorXd expect(6);
  expect << 3, 6, 2, 5, 1, 4;
  EXPECT_TRUE(s == expect);
  EXPECT_TRUE(from_stack(s, 2) == u);
  EXPECT_THROW(from_stack(VectorXd::Ones(5), 2), InputError);
}

TEST(RewardMatrix, BruteOptimumAboveHalfTopEigenvalue) {
  for (std::uint64_t k = 0; k < 10; ++k) {
    const SystemParams s = random_system(80 + k, 3, 2, 0.8);
    const RewardQuadratic q = build_true_reward(s, 7);
    const double lam = Eigen::SelfAdjointEigenSolver<MatrixXd>(q.dense_S()).eigenvalues().maxCoeff();
    const QuboSolution b = brute_force_max(q.qubo());
    EXPECT_GE(b.value, 0.5 * lam - 1e-9);
  }
}
