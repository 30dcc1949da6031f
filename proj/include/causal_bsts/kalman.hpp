#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "causal_bsts/components.hpp"
#include "causal_bsts/linalg.hpp"
#include "causal_bsts/random.hpp"

namespace causal_bsts {

struct FilterOptions {
  // Innovation variances below this are raised to it; a variance that is
  // still <= 0 aborts the filter.
  double variance_floor = 0.0;
  bool keep_covariances = true;
};

// Output of the forward pass. Time-indexed matrices have one row per step.
// predicted_means.row(t) = E(a_t | y_1..y_{t-1}).
struct FilterResult {
  Matrix predicted_means;              // n x d
  std::vector<Matrix> predicted_covs;  // n entries of d x d (empty unless kept)
  Vector innovations;                  // v_t; 0 at missing steps
  Vector innovation_vars;              // F_t
  Matrix gains;                        // n x d, K_t = T_t P_t Z_t / F_t; 0 at missing steps
  std::vector<bool> observed;
  Vector next_mean;  // E(a_{n+1} | y)
  Matrix next_cov;
  double log_likelihood = 0.0;
};

namespace detail {

// Forward recursion shared by the public filter and the samplers. `a_col`
// and `k_col` are d x n column-major buffers (one column per step).
// `zero_mean` runs the recursion with a zero initial mean and zero
// intercepts, which is what the mean-correction sampler needs.
inline void filter_pass(const StateSpaceModel& model, const InitialStateDistribution& init,
                        const Vector& y, const FilterOptions& opts, bool zero_mean, Matrix& a_col,
                        Matrix& k_col, Vector& v, Vector& F, std::vector<bool>& observed,
                        std::vector<Matrix>* covs, Vector& a_next, Matrix& P_next, double& loglik) {
  const Index n = y.size(), d = model.state_dim();
  if (model.size() < n)
    throw DimensionMismatch("model covers " + std::to_string(model.size()) + " steps, series has " +
                            std::to_string(n));
  if (init.mean.size() != d || init.covariance.rows() != d)
    throw DimensionMismatch("initial state distribution has wrong dimension");
  a_col.resize(d, n);
  k_col.resize(d, n);
  v.resize(n);
  F.resize(n);
  observed.assign(static_cast<std::size_t>(n), false);
  if (covs) covs->clear();

  Vector a = zero_mean ? Vector::Zero(d) : init.mean;
  Matrix P = init.covariance;
  Vector M(d), TM(d);
  Matrix TP(d, d);
  loglik = 0.0;
  constexpr double log_2pi = 1.8378770664093453;  // log(2 pi)

  for (Index t = 0; t < n; ++t) {
    const auto& tr = model.transition(t);
    const auto z = model.Z(t);
    a_col.col(t) = a;
    if (covs) covs->push_back(P);
    M.noalias() = P * z;
    double f = z.dot(M) + model.obs_var(t);
    const bool obs = !is_missing(y(t));
    observed[static_cast<std::size_t>(t)] = obs;
    TP.noalias() = tr.T * P;
    if (obs) {
      if (f < opts.variance_floor) f = opts.variance_floor;
      if (!(f > 0.0) || !std::isfinite(f))
        throw NumericalError("innovation variance is not positive at step " + std::to_string(t + 1) +
                             " (ill-posed variances)");
      const double innov = y(t) - z.dot(a);
      v(t) = innov;
      F(t) = f;
      loglik += -0.5 * (log_2pi + std::log(f) + innov * innov / f);
      TM.noalias() = tr.T * M;
      k_col.col(t) = TM / f;
      Vector a_new = tr.T * a + k_col.col(t) * innov;
      if (!zero_mean) a_new += tr.c;
      a = std::move(a_new);
      P.noalias() = TP * tr.T.transpose();
      P.noalias() -= TM * TM.transpose() / f;
    } else {
      v(t) = 0.0;
      F(t) = f;
      k_col.col(t).setZero();
      Vector a_new = tr.T * a;
      if (!zero_mean) a_new += tr.c;
      a = std::move(a_new);
      P.noalias() = TP * tr.T.transpose();
    }
    P += tr.RQR;
    symmetrize(P);
  }
  a_next = a;
  P_next = P;
}

// Backward pass of the fast state smoother followed by the forward
// reconstruction of E(a_t | y). Returns a d x n matrix.
inline Matrix mean_smoother_pass(const StateSpaceModel& model, const InitialStateDistribution& init,
                                 bool zero_mean, const Matrix& k_col, const Vector& v, const Vector& F,
                                 const std::vector<bool>& observed) {
  const Index n = v.size(), d = model.state_dim();
  Matrix r(d, n + 1);
  r.col(n).setZero();
  for (Index t = n - 1; t >= 0; --t) {
    const auto& tr = model.transition(t);
    const auto rn = r.col(t + 1);
    if (observed[static_cast<std::size_t>(t)]) {
      const auto z = model.Z(t);
      // L_t' r = T' r - Z (K' r)
      r.col(t).noalias() = tr.T.transpose() * rn;
      r.col(t) += z * (v(t) / F(t) - k_col.col(t).dot(rn));
    } else {
      r.col(t).noalias() = tr.T.transpose() * rn;
    }
  }
  Matrix alpha(d, n);
  if (n == 0) return alpha;
  alpha.col(0) = (zero_mean ? Vector::Zero(d) : init.mean) + init.covariance * r.col(0);
  for (Index t = 0; t + 1 < n; ++t) {
    const auto& tr = model.transition(t);
    alpha.col(t + 1).noalias() = tr.T * alpha.col(t);
    alpha.col(t + 1).noalias() += tr.RQR * r.col(t + 1);
    if (!zero_mean) alpha.col(t + 1) += tr.c;
  }
  return alpha;
}

}  // namespace detail

inline FilterResult kalman_filter(const StateSpaceModel& model, const InitialStateDistribution& init,
                                  const Vector& y, const FilterOptions& opts = {}) {
  FilterResult out;
  Matrix a_col, k_col;
  detail::filter_pass(model, init, y, opts, false, a_col, k_col, out.innovations, out.innovation_vars,
                      out.observed, opts.keep_covariances ? &out.predicted_covs : nullptr,
                      out.next_mean, out.next_cov, out.log_likelihood);
  out.predicted_means = a_col.transpose();
  out.gains = k_col.transpose();
  return out;
}

// E(a_t | y) for every step, as an n x d matrix.
inline Matrix fast_state_mean(const StateSpaceModel& model, const InitialStateDistribution& init,
                              const Vector& y, const FilterOptions& opts = {}) {
  Matrix a_col, k_col, P_next;
  Vector v, F, a_next;
  std::vector<bool> observed;
  double ll = 0.0;
  detail::filter_pass(model, init, y, opts, false, a_col, k_col, v, F, observed, nullptr, a_next,
                      P_next, ll);
  return detail::mean_smoother_pass(model, init, false, k_col, v, F, observed).transpose();
}

// One state path, row t holding a_t.
struct StateDraw {
  Matrix alpha;  // n x d
};

// Exact draw from p(a | y, theta) by mean correction: simulate (a+, y+) from
// the joint, then add the smoothed mean of y - y+ (computed with zero initial
// mean and intercepts, which by linearity equals E(a|y) - E(a+|y+)).
inline StateDraw simulate_states(const StateSpaceModel& model, const InitialStateDistribution& init,
                                 const Vector& y, Rng& rng, const FilterOptions& opts = {}) {
  const Index n = y.size(), d = model.state_dim();
  if (model.size() < n)
    throw DimensionMismatch("model covers fewer steps than the series");
  Matrix plus(d, n);
  Vector w(n);
  const Matrix init_factor = psd_factor(init.covariance);
  Vector state = init.mean;
  for (Index k = 0; k < d; ++k) state += init_factor.col(k) * rng.normal();
  for (Index t = 0; t < n; ++t) {
    plus.col(t) = state;
    const double y_plus = model.Z(t).dot(state) + std::sqrt(model.obs_var(t)) * rng.normal();
    w(t) = is_missing(y(t)) ? kNaN : y(t) - y_plus;
    const auto& tr = model.transition(t);
    Vector next = tr.c + tr.T * state;
    for (Index k = 0; k < tr.noise_factor.cols(); ++k) next += tr.noise_factor.col(k) * rng.normal();
    state = std::move(next);
  }
  FilterOptions fast = opts;
  fast.keep_covariances = false;
  Matrix a_col, k_col, P_next;
  Vector v, F, a_next;
  std::vector<bool> observed;
  double ll = 0.0;
  detail::filter_pass(model, init, w, fast, true, a_col, k_col, v, F, observed, nullptr, a_next, P_next,
                      ll);
  plus += detail::mean_smoother_pass(model, init, true, k_col, v, F, observed);
  StateDraw out;
  out.alpha = plus.transpose();
  for (Index i = 0; i < out.alpha.size(); ++i)
    if (!std::isfinite(out.alpha.data()[i])) throw NumericalError("state draw has non-finite entries");
  return out;
}

// Forward simulation of y~_{n+1..m} from the state at time n (1-based count
// of pre-period steps), iterating the state equation with fresh disturbances
// and adding fresh observation noise.
inline Vector simulate_forward(const StateSpaceModel& model, Index n, const Vector& alpha_n, Rng& rng) {
  const Index m = model.size();
  if (alpha_n.size() != model.state_dim())
    throw DimensionMismatch("state vector has " + std::to_string(alpha_n.size()) + " entries, model has " +
                            std::to_string(model.state_dim()));
  if (n < 1 || n > m) throw DimensionMismatch("forecast origin outside the model range");
  Vector out(m - n);
  Vector state = alpha_n;
  for (Index t = n - 1; t + 1 < m; ++t) {
    const auto& tr = model.transition(t);
    Vector next = tr.c + tr.T * state;
    for (Index k = 0; k < tr.noise_factor.cols(); ++k) next += tr.noise_factor.col(k) * rng.normal();
    state = std::move(next);
    out(t + 1 - n) = model.Z(t + 1).dot(state) + std::sqrt(model.obs_var(t + 1)) * rng.normal();
  }
  return out;
}

}  // namespace causal_bsts
