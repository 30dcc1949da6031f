#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "causal_bsts/linalg.hpp"
#include "causal_bsts/random.hpp"

namespace causal_bsts {

// Conjugate prior 1/sigma^2 ~ Gamma(nu/2, s/2) (rate parameterisation).
// `s` is a prior sum of squares worth `nu` observations, so s/nu is the prior
// guess for sigma^2.
struct InverseGammaSpec {
  double nu = 0.0;
  double s = 0.0;

  double variance_guess() const { return s / nu; }
  bool valid() const { return nu > 0.0 && s > 0.0 && std::isfinite(nu) && std::isfinite(s); }
};

inline InverseGammaSpec inverse_gamma_from_sd_guess(double sd_guess, double nu) {
  return {nu, nu * sd_guess * sd_guess};
}

// Weak default used for trend and seasonal diffusions:
// 1/sigma^2 ~ Gamma(1e-2, 1e-2 * s_y^2).
inline InverseGammaSpec default_sigma_prior(double s_y_sq) {
  if (!(s_y_sq > 0.0) || !std::isfinite(s_y_sq))
    throw DegenerateInput("default variance prior needs a positive sample variance (series is constant?)");
  return {2e-2, 2e-2 * s_y_sq};
}

// Variance prior expressed relative to the data scale: the prior guess for
// sigma is sd_guess_rel * s_y, carried with weight nu. Resolved against the
// sample variance once the series is known.
struct ScaledVariancePrior {
  double nu = 2e-2;
  double sd_guess_rel = 1.0;

  InverseGammaSpec resolve(double s_y_sq) const {
    if (!(s_y_sq > 0.0) || !std::isfinite(s_y_sq))
      throw DegenerateInput("variance prior needs a positive sample variance (series is constant?)");
    return {nu, nu * sd_guess_rel * sd_guess_rel * s_y_sq};
  }

  static ScaledVariancePrior weak_default() { return {2e-2, 1.0}; }
  // Prior used for the local level and dynamic coefficients in the
  // simulation study: sigma guess 0.1 s_y worth 32 observations.
  static ScaledVariancePrior tight_level() { return {32.0, 0.1}; }
};

// Draws sigma^2 given the prior and `count` residuals with sum of squares
// `sum_sq`: 1/sigma^2 ~ Gamma((nu + count)/2, (s + sum_sq)/2).
inline double draw_variance(const InverseGammaSpec& prior, double sum_sq, Index count, Rng& rng) {
  const double shape = 0.5 * (prior.nu + static_cast<double>(count));
  const double rate = 0.5 * (prior.s + sum_sq);
  const double precision = rng.gamma(shape, rate);
  return 1.0 / precision;
}

// ---------------------------------------------------------------------------
// Spike-and-slab regression prior.

using Inclusion = std::vector<std::uint8_t>;

inline Index included_count(const Inclusion& rho) {
  Index k = 0;
  for (auto r : rho) k += r ? 1 : 0;
  return k;
}

inline std::vector<Index> included_indices(const Inclusion& rho) {
  std::vector<Index> idx;
  for (std::size_t j = 0; j < rho.size(); ++j)
    if (rho[j]) idx.push_back(static_cast<Index>(j));
  return idx;
}

struct SpikeSlabSpec {
  std::vector<double> pi;  // prior inclusion probabilities
  Vector b;                // prior coefficient means
  double g = 1.0;
  double w = 0.5;
  double nu_eps = 50.0;
  double expected_R2 = 0.8;

  double s_eps(double s_y_sq) const { return nu_eps * (1.0 - expected_R2) * s_y_sq; }

  // pi_j = M / J for every variable (clamped to 1), b = 0.
  static SpikeSlabSpec with_expected_model_size(Index J, double M) {
    SpikeSlabSpec spec;
    const double p = J > 0 ? std::min(1.0, M / static_cast<double>(J)) : 0.0;
    spec.pi.assign(static_cast<std::size_t>(J), p);
    spec.b = Vector::Zero(J);
    return spec;
  }
};

struct PriorPrecision {
  Matrix sigma_inv;
  std::vector<Index> zero_columns;  // all-zero covariates; callers force pi_j = 0
};

// Zellner-style prior precision averaged with its diagonal:
// (g/n) * (w X'X + (1-w) diag(X'X)).
inline PriorPrecision build_prior_precision(const Matrix& xtx, Index n, double g, double w) {
  if (n < 1) throw DegenerateInput("prior precision needs at least one observation");
  PriorPrecision out;
  Matrix avg = w * xtx;
  avg.diagonal() = xtx.diagonal();
  out.sigma_inv = (g / static_cast<double>(n)) * avg;
  for (Index j = 0; j < xtx.cols(); ++j)
    if (xtx(j, j) == 0.0) out.zero_columns.push_back(j);
  return out;
}

inline PriorPrecision build_prior_precision(const Matrix& x_pre, double g, double w) {
  Matrix xtx = x_pre.transpose() * x_pre;
  return build_prior_precision(xtx, x_pre.rows(), g, w);
}

// Data side of the conjugate regression, restricted to rows where the
// regression target is observed.
struct RegressionData {
  Matrix xtx;
  Vector xty;
  double yty = 0.0;
  Index n = 0;
};

inline RegressionData regression_data(const Matrix& x, const Vector& y_dot) {
  RegressionData d;
  const Index J = x.cols();
  d.xtx = Matrix::Zero(J, J);
  d.xty = Vector::Zero(J);
  std::vector<Index> rows;
  for (Index t = 0; t < y_dot.size(); ++t)
    if (!is_missing(y_dot(t))) rows.push_back(t);
  Matrix xs = x(rows, Eigen::all);
  Vector ys = y_dot(rows);
  d.xtx.selfadjointView<Eigen::Lower>().rankUpdate(xs.transpose());
  d.xtx = d.xtx.selfadjointView<Eigen::Lower>();
  d.xty = xs.transpose() * ys;
  d.yty = ys.squaredNorm();
  d.n = static_cast<Index>(rows.size());
  return d;
}

// Spike-and-slab prior with the data-dependent pieces resolved.
struct SlabPrior {
  std::vector<double> pi;
  Vector b;
  Matrix sigma_inv;
  double nu_eps = 0.0;
  double s_eps = 0.0;

  Index size() const { return static_cast<Index>(pi.size()); }
};

// Resolves the prior against the training covariates (`xtx` over n observed
// rows). All-zero columns are forced out of the model.
inline SlabPrior resolve_slab_prior(const SpikeSlabSpec& spec, const Matrix& xtx, Index n,
                                    double s_y_sq, std::vector<Index>* forced_out = nullptr) {
  const Index J = xtx.cols();
  if (static_cast<Index>(spec.pi.size()) != J || spec.b.size() != J)
    throw DimensionMismatch("spike-and-slab spec has " + std::to_string(spec.pi.size()) +
                            " inclusion probabilities for " + std::to_string(J) + " covariates");
  SlabPrior p;
  PriorPrecision prec = build_prior_precision(xtx, n, spec.g, spec.w);
  p.sigma_inv = std::move(prec.sigma_inv);
  p.pi = spec.pi;
  for (Index j : prec.zero_columns) p.pi[static_cast<std::size_t>(j)] = 0.0;
  if (forced_out) *forced_out = prec.zero_columns;
  p.b = spec.b;
  p.nu_eps = spec.nu_eps;
  p.s_eps = spec.s_eps(s_y_sq);
  return p;
}

// Posterior sufficient statistics for one inclusion pattern.
struct SlabSufficientStats {
  std::vector<Index> included;
  Matrix V_inv;
  Vector beta_tilde;
  double N = 0.0;
  double S = 0.0;
  double logdet_V_inv = 0.0;
  double logdet_sigma_inv = 0.0;
  Eigen::LLT<Matrix> V_inv_chol;
};

inline SlabSufficientStats slab_sufficient_stats(const RegressionData& data, const Inclusion& rho,
                                                 const SlabPrior& prior) {
  SlabSufficientStats st;
  st.included = included_indices(rho);
  const auto& idx = st.included;
  st.N = prior.nu_eps + static_cast<double>(data.n);
  if (idx.empty()) {
    st.V_inv = Matrix(0, 0);
    st.beta_tilde = Vector(0);
    st.S = prior.s_eps + data.yty;
    return st;
  }
  Matrix omega = prior.sigma_inv(idx, idx);
  Vector b = prior.b(idx);
  st.V_inv = data.xtx(idx, idx) + omega;
  st.V_inv_chol = checked_cholesky(st.V_inv, "posterior precision V^-1");
  Vector omega_b = omega * b;
  st.beta_tilde = st.V_inv_chol.solve(data.xty(idx) + omega_b);
  st.S = prior.s_eps + data.yty + b.dot(omega_b) - st.beta_tilde.dot(st.V_inv * st.beta_tilde);
  st.logdet_V_inv = spd_logdet(st.V_inv_chol);
  Eigen::LLT<Matrix> omega_chol(omega);
  st.logdet_sigma_inv =
      omega_chol.info() == Eigen::Success ? spd_logdet(omega_chol) : -kInf;
  return st;
}

// Convenience overload working directly from the design matrix and target.
inline SlabSufficientStats slab_sufficient_stats(const Matrix& x_pre, const Vector& y_dot,
                                                 const Inclusion& rho, const SlabPrior& prior) {
  return slab_sufficient_stats(regression_data(x_pre, y_dot), rho, prior);
}

inline double log_inclusion_prior(const Inclusion& rho, const std::vector<double>& pi) {
  double lp = 0.0;
  for (std::size_t j = 0; j < rho.size(); ++j) {
    const double p = rho[j] ? pi[j] : 1.0 - pi[j];
    if (p <= 0.0) return -kInf;
    lp += std::log(p);
  }
  return lp;
}

// Unnormalised log posterior weight of an inclusion pattern with beta and
// 1/sigma^2 integrated out:
//   0.5 log|Sigma^-1_rho| - 0.5 log|V^-1_rho| + log p(rho) - (N/2) log S_rho.
inline double log_model_weight(const Inclusion& rho, const SlabSufficientStats& stats,
                               const SlabPrior& prior) {
  const double lp = log_inclusion_prior(rho, prior.pi);
  if (lp == -kInf || !(stats.S > 0.0)) return -kInf;
  return 0.5 * (stats.logdet_sigma_inv - stats.logdet_V_inv) + lp - 0.5 * stats.N * std::log(stats.S);
}

}  // namespace causal_bsts
