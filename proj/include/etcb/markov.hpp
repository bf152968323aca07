#pragma once

// Least-squares identification of the first L Markov parameters C A^k B
// from a single Rademacher-driven trajectory of (action, reward) pairs.

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>

#include <Eigen/Dense>

#include "etcb/error.hpp"
#include "etcb/lds.hpp"
#include "etcb/rng.hpp"

namespace etcb {

enum class Provenance { truth, estimated };

/// G = [G_0 G_1 ... G_{L-1}], p x pL; block k occupies columns kp..(k+1)p-1.
class MarkovParams {
 public:
  MarkovParams(MatrixXd g, Index p, Provenance provenance,
               bool rank_deficient = false)
      : g_(std::move(g)), p_(p), provenance_(provenance),
        rank_deficient_(rank_deficient) {
    detail::require(p_ >= 1 && g_.rows() == p_ && g_.cols() % p_ == 0 &&
                        g_.cols() >= p_,
                    "Markov parameters must be p x pL with L >= 1");
  }

  Index p() const noexcept { return p_; }
  Index L() const noexcept { return g_.cols() / p_; }
  const MatrixXd& G() const noexcept { return g_; }
  auto block(Index k) const { return g_.middleCols(k * p_, p_); }
  Provenance provenance() const noexcept { return provenance_; }
  /// Set when the gram matrix fell below the pseudo-inverse cutoff.
  bool rank_deficient() const noexcept { return rank_deficient_; }

  /// Column-major vec(G), the layout the covariates multiply.
  VectorXd vec() const { return Eigen::Map<const VectorXd>(g_.data(), g_.size()); }

 private:
  MatrixXd g_;
  Index p_;
  Provenance provenance_;
  bool rank_deficient_;
};

inline MarkovParams true_markov(const SystemParams& params, Index L) {
  detail::require(L >= 1, "truncation length must be at least 1");
  const Index p = params.p();
  MatrixXd g(p, p * L);
  MatrixXd ak_b = params.B();
  for (Index k = 0; k < L; ++k) {
    g.middleCols(k * p, p) = params.C() * ak_b;
    ak_b = params.A() * ak_b;
  }
  return MarkovParams(std::move(g), p, Provenance::truth);
}

/// Regression data for t = L+1..H, with ũ_t = ū_{t-1} ⊗ u_t and
/// ū_{t-1} = (u_{t-1}; u_{t-2}; ...; u_{t-L}).
struct CovariateSet {
  MatrixXd rows;       // (H - L) x d, one covariate per row
  MatrixXd gram;       // d x d, sum of ũ_t ũ_t'
  VectorXd responses;  // r_t aligned with rows
  VectorXd moment;     // sum of ũ_t r_t
  Index p = 0;
  Index L = 0;
  Index d = 0;         // p^2 L
  Index first_t = 0;   // time index of rows(0)

  Index samples() const noexcept { return rows.rows(); }
};

/// Fills `out` (length p^2 L) with ū_{t-1} ⊗ u_t read from the action columns.
inline void covariate_at(const MatrixXd& actions, Index t, Index L,
                         Eigen::Ref<VectorXd> out) {
  const Index p = actions.rows();
  for (Index lag = 1; lag <= L; ++lag) {
    const auto past = actions.col(t - lag);
    for (Index i = 0; i < p; ++i)
      out.segment(((lag - 1) * p + i) * p, p) = past[i] * actions.col(t);
  }
}

/// `actions` is p x (H+1) and `rewards` has H+1 entries.
inline CovariateSet build_covariates(const MatrixXd& actions,
                                     const VectorXd& rewards, Index L) {
  detail::require(L >= 1, "truncation length must be at least 1");
  detail::require(actions.cols() == rewards.size(),
                  "actions and rewards must cover the same rounds");
  detail::require(actions.cols() >= L + 2,
                  "need at least L+2 rounds for one regression row");
  const Index p = actions.rows();
  const Index horizon = actions.cols() - 1;
  CovariateSet cov;
  cov.p = p;
  cov.L = L;
  cov.d = p * p * L;
  cov.first_t = L + 1;
  const Index count = horizon - L;
  cov.rows.resize(count, cov.d);
  cov.responses.resize(count);
  VectorXd row(cov.d);
  for (Index k = 0; k < count; ++k) {
    const Index t = L + 1 + k;
    covariate_at(actions, t, L, row);
    cov.rows.row(k) = row.transpose();
    cov.responses[k] = rewards[t];
  }
  cov.gram = MatrixXd::Zero(cov.d, cov.d);
  cov.gram.selfadjointView<Eigen::Lower>().rankUpdate(cov.rows.transpose());
  cov.gram = cov.gram.selfadjointView<Eigen::Lower>();
  cov.moment = cov.rows.transpose() * cov.responses;
  return cov;
}

/// Relative singular-value cutoff below which the gram is treated as singular.
inline constexpr double kPinvCutoff = 1e-10;

inline MarkovParams estimate_markov(const CovariateSet& cov, Index p, Index L) {
  detail::require(cov.p == p && cov.L == L,
                  "covariates were built for a different (p, L)");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov.gram);
  const VectorXd& lam = es.eigenvalues();
  const double lam_max = lam.size() ? lam.maxCoeff() : 0.0;
  const double cutoff = kPinvCutoff * lam_max;
  VectorXd theta;
  bool deficient = false;
  if (lam_max > 0.0 && lam.minCoeff() > cutoff) {
    theta = cov.gram.llt().solve(cov.moment);
  } else {
    deficient = true;
    VectorXd inv = VectorXd::Zero(lam.size());
    for (Index i = 0; i < lam.size(); ++i)
      if (lam[i] > cutoff && lam[i] > 0.0) inv[i] = 1.0 / lam[i];
    theta = es.eigenvectors() *
            (inv.asDiagonal() * (es.eigenvectors().transpose() * cov.moment));
  }
  MatrixXd g = Eigen::Map<const MatrixXd>(theta.data(), p, p * L);
  return MarkovParams(std::move(g), p, Provenance::estimated, deficient);
}

inline double excitation_min_eig(const CovariateSet& cov) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov.gram, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double excitation_max_eig(const CovariateSet& cov) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov.gram, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// Fourth-moment bound of the Rademacher covariates.
inline constexpr double kFourthMoment = 9.0;

/// Samples H - L needed for persistence of excitation with probability 1 - δ.
inline long long sample_complexity(Index p, Index L, double delta) {
  detail::require(p >= 1 && L >= 1, "p and L must be positive");
  detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  const double d = static_cast<double>(p * p * L);
  const double lp1 = static_cast<double>(L + 1);
  const double n = 32.0 * lp1 * kFourthMoment *
                   (std::log(2.0 * lp1 / delta) + d * std::log(1.0 + 16.0 * d));
  return static_cast<long long>(std::ceil(n));
}

/// Max over random unit directions v of the empirical E[(v'ũ_t)^4], with ũ_t
/// taken from a Rademacher action sequence of length samples + L.
inline double fourth_moment_check(Index p, Index L, Index directions,
                                  Index samples, CounterRng& rng) {
  detail::require(p >= 1 && L >= 1, "p and L must be positive");
  detail::require(directions >= 1 && samples >= 1,
                  "directions and samples must be positive");
  const Index d = p * p * L;
  const MatrixXd actions = sample_rademacher_actions(p, samples + L, rng);
  MatrixXd rows(samples, d);
  VectorXd row(d);
  for (Index s = 0; s < samples; ++s) {
    covariate_at(actions, s + L, L, row);
    rows.row(s) = row.transpose();
  }
  double best = 0.0;
  for (Index k = 0; k < directions; ++k) {
    VectorXd v = rng.normal_vector(d);
    v.normalize();
    const VectorXd proj = rows * v;
    best = std::max(best, proj.array().pow(4).mean());
  }
  return best;
}

struct EstimationError {
  double frobenius = 0.0;
  double relative = 0.0;
};

inline EstimationError estimation_error(const MarkovParams& est,
                                        const MarkovParams& truth) {
  detail::require(est.p() == truth.p() && est.L() == truth.L(),
                  "Markov parameter shapes differ");
  EstimationError e;
  e.frobenius = (est.G() - truth.G()).norm();
  const double scale = truth.G().norm();
  e.relative = scale > 0.0 ? e.frobenius / scale : 0.0;
  if (scale == 0.0 && e.frobenius > 0.0)
    e.relative = std::numeric_limits<double>::infinity();
  return e;
}

/// CSV with columns block,row,col,value; block-major, row-major within a block.
inline void write_markov_csv(std::ostream& os, const MarkovParams& m) {
  os << "block,row,col,value\n";
  const auto prec = os.precision(17);
  for (Index k = 0; k < m.L(); ++k)
    for (Index i = 0; i < m.p(); ++i)
      for (Index j = 0; j < m.p(); ++j)
        os << k << ',' << i << ',' << j << ',' << m.block(k)(i, j) << '\n';
  os.precision(prec);
}

}  // namespace etcb
