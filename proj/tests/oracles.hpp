#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the filter, smoother or sampler code.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "causal_bsts/components.hpp"
#include "causal_bsts/linalg.hpp"
#include "causal_bsts/random.hpp"

namespace oracle {

using causal_bsts::Index;
using causal_bsts::Matrix;
using causal_bsts::Vector;

// Joint Gaussian law of (a_1..a_n, y_1..y_n) written out densely, then
// conditioned on the observed y by textbook Gaussian algebra.
struct DenseGaussian {
  Index n = 0, d = 0;
  Vector mean_a;   // n*d, stacked by time
  Matrix cov_a;    // (n*d) x (n*d)
  Vector mean_y;   // n
  Matrix cov_y;    // n x n
  Matrix cov_ay;   // (n*d) x n
  std::vector<Index> observed;

  double log_likelihood = 0.0;
  Vector smoothed_mean;  // E(a | y_obs), stacked
  Matrix smoothed_cov;   // Cov(a | y_obs)
  Vector y_mean_given_obs;  // E(y | y_obs) for every step
  Matrix y_cov_given_obs;
};

inline DenseGaussian dense_gaussian(const std::vector<causal_bsts::SystemMatrices>& steps, const Vector& a1,
                                    const Matrix& P1, const Vector& y) {
  DenseGaussian g;
  g.n = static_cast<Index>(steps.size());
  g.d = a1.size();
  const Index n = g.n, d = g.d, N = n * d;
  g.mean_a.resize(N);
  g.cov_a = Matrix::Zero(N, N);
  g.mean_a.segment(0, d) = a1;
  g.cov_a.block(0, 0, d, d) = P1;
  for (Index t = 0; t + 1 < n; ++t) {
    const auto& s = steps[static_cast<std::size_t>(t)];
    g.mean_a.segment((t + 1) * d, d) = s.c + s.T * g.mean_a.segment(t * d, d);
    for (Index u = 0; u <= t; ++u) {
      const Matrix cross = s.T * g.cov_a.block(t * d, u * d, d, d);
      g.cov_a.block((t + 1) * d, u * d, d, d) = cross;
      g.cov_a.block(u * d, (t + 1) * d, d, d) = cross.transpose();
    }
    g.cov_a.block((t + 1) * d, (t + 1) * d, d, d) =
        s.T * g.cov_a.block(t * d, t * d, d, d) * s.T.transpose() + s.R * s.Q * s.R.transpose();
  }
  Matrix Zb = Matrix::Zero(n, N);
  Vector H(n);
  for (Index t = 0; t < n; ++t) {
    Zb.block(t, t * d, 1, d) = steps[static_cast<std::size_t>(t)].Z.transpose();
    H(t) = steps[static_cast<std::size_t>(t)].sigma_obs_sq;
  }
  g.mean_y = Zb * g.mean_a;
  g.cov_ay = g.cov_a * Zb.transpose();
  g.cov_y = Zb * g.cov_ay;
  g.cov_y.diagonal() += H;

  for (Index t = 0; t < n; ++t)
    if (!std::isnan(y(t))) g.observed.push_back(t);
  const Index k = static_cast<Index>(g.observed.size());
  if (k == 0) {
    g.smoothed_mean = g.mean_a;
    g.smoothed_cov = g.cov_a;
    g.y_mean_given_obs = g.mean_y;
    g.y_cov_given_obs = g.cov_y;
    return g;
  }
  Matrix S_oo(k, k), S_ao(N, k), S_yo(n, k);
  Vector r(k);
  for (Index i = 0; i < k; ++i) {
    const Index ti = g.observed[static_cast<std::size_t>(i)];
    r(i) = y(ti) - g.mean_y(ti);
    S_ao.col(i) = g.cov_ay.col(ti);
    S_yo.col(i) = g.cov_y.col(ti);
    for (Index j = 0; j < k; ++j) S_oo(i, j) = g.cov_y(ti, g.observed[static_cast<std::size_t>(j)]);
  }
  const Eigen::LLT<Matrix> llt(S_oo);
  const Vector w = llt.solve(r);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  g.log_likelihood = -0.5 * (static_cast<double>(k) * std::log(2.0 * M_PI) + logdet + r.dot(w));
  g.smoothed_mean = g.mean_a + S_ao * w;
  g.smoothed_cov = g.cov_a - S_ao * llt.solve(S_ao.transpose());
  g.y_mean_given_obs = g.mean_y + S_yo * w;
  g.y_cov_given_obs = g.cov_y - S_yo * llt.solve(S_yo.transpose());
  return g;
}

// Random time-varying model with d states, q disturbances and n steps.
struct RandomModel {
  std::vector<causal_bsts::SystemMatrices> steps;
  Vector a1;
  Matrix P1;
  Vector y;
};

inline RandomModel random_model(causal_bsts::Rng& rng, Index n, Index d, double missing_rate = 0.2) {
  RandomModel m;
  const Index q = 1 + static_cast<Index>(rng.uniform() * static_cast<double>(d));
  auto rand_matrix = [&](Index r, Index c, double scale) {
    Matrix a(r, c);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = scale * rng.normal();
    return a;
  };
  const bool time_varying = rng.uniform() < 0.5;
  Matrix T0 = rand_matrix(d, d, 0.5 / std::sqrt(static_cast<double>(d)));
  T0.diagonal().array() += 0.5;
  Matrix R0 = rand_matrix(d, q, 1.0);
  for (Index t = 0; t < n; ++t) {
    causal_bsts::SystemMatrices s;
    s.Z = rand_matrix(d, 1, 1.0);
    s.T = time_varying ? Matrix(T0 + rand_matrix(d, d, 0.1)) : T0;
    s.R = R0;
    s.Q = Matrix::Zero(q, q);
    for (Index k = 0; k < q; ++k) s.Q(k, k) = 0.05 + rng.uniform();
    s.c = rand_matrix(d, 1, 0.3);
    s.sigma_obs_sq = 0.1 + rng.uniform();
    m.steps.push_back(s);
  }
  m.a1 = rand_matrix(d, 1, 1.0);
  const Matrix L = rand_matrix(d, d, 1.0);
  m.P1 = L * L.transpose() + 0.1 * Matrix::Identity(d, d);
  // Simulate y from the model itself, then knock out some entries.
  Vector a = m.a1 + L * rand_matrix(d, 1, 1.0);
  m.y.resize(n);
  for (Index t = 0; t < n; ++t) {
    const auto& s = m.steps[static_cast<std::size_t>(t)];
    m.y(t) = s.Z.dot(a) + std::sqrt(s.sigma_obs_sq) * rng.normal();
    Vector eta(q);
    for (Index k = 0; k < q; ++k) eta(k) = std::sqrt(s.Q(k, k)) * rng.normal();
    a = s.c + s.T * a + s.R * eta;
    if (rng.uniform() < missing_rate) m.y(t) = causal_bsts::kNaN;
  }
  return m;
}

// Posterior model probabilities of the spike-and-slab regression by
// enumerating every inclusion pattern. For each pattern the marginal law of
// y is multivariate t: y ~ t_nu(X b, (s/nu)(I + X Omega X')), with Omega the
// inverse of the selected block of the prior precision.
struct EnumerationResult {
  std::vector<double> inclusion;  // marginal P(rho_j = 1 | y)
  std::vector<double> model_prob;  // indexed by bit pattern
};

inline double log_mvt_density(const Vector& y, const Vector& mu, const Matrix& scale, double nu) {
  const Index n = y.size();
  const Eigen::LLT<Matrix> llt(scale);
  const Vector r = y - mu;
  const double quad = r.dot(llt.solve(r));
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double nd = static_cast<double>(n);
  return std::lgamma(0.5 * (nu + nd)) - std::lgamma(0.5 * nu) - 0.5 * nd * std::log(nu * M_PI) - 0.5 * logdet -
         0.5 * (nu + nd) * std::log1p(quad / nu);
}

inline EnumerationResult enumerate_spike_slab(const Matrix& X, const Vector& y, const Vector& b,
                                              const Matrix& prior_precision, const std::vector<double>& pi,
                                              double nu, double s) {
  const Index J = X.cols(), n = X.rows();
  const std::size_t models = std::size_t{1} << J;
  std::vector<double> logw(models);
  for (std::size_t mask = 0; mask < models; ++mask) {
    std::vector<Index> inc;
    double lp = 0.0;
    for (Index j = 0; j < J; ++j) {
      const bool in = (mask >> j) & 1U;
      if (in) inc.push_back(j);
      lp += std::log(in ? pi[static_cast<std::size_t>(j)] : 1.0 - pi[static_cast<std::size_t>(j)]);
    }
    Matrix scale = Matrix::Identity(n, n);
    Vector mu = Vector::Zero(n);
    if (!inc.empty()) {
      const Index k = static_cast<Index>(inc.size());
      Matrix Xr(n, k), Pr(k, k);
      Vector br(k);
      for (Index a = 0; a < k; ++a) {
        Xr.col(a) = X.col(inc[static_cast<std::size_t>(a)]);
        br(a) = b(inc[static_cast<std::size_t>(a)]);
        for (Index c = 0; c < k; ++c) Pr(a, c) = prior_precision(inc[static_cast<std::size_t>(a)], inc[static_cast<std::size_t>(c)]);
      }
      const Matrix Omega = Pr.inverse();
      scale += Xr * Omega * Xr.transpose();
      mu = Xr * br;
    }
    logw[mask] = lp + log_mvt_density(y, mu, (s / nu) * scale, nu);
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double z = 0.0;
  for (double& w : logw) z += (w = std::exp(w - mx));
  EnumerationResult out;
  out.inclusion.assign(static_cast<std::size_t>(J), 0.0);
  out.model_prob.resize(models);
  for (std::size_t mask = 0; mask < models; ++mask) {
    out.model_prob[mask] = logw[mask] / z;
    for (Index j = 0; j < J; ++j)
      if ((mask >> j) & 1U) out.inclusion[static_cast<std::size_t>(j)] += out.model_prob[mask];
  }
  return out;
}

}  // namespace oracle
