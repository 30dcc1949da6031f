#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "causal_bsts/components.hpp"
#include "causal_bsts/config.hpp"
#include "causal_bsts/kalman.hpp"
#include "causal_bsts/priors.hpp"
#include "causal_bsts/random.hpp"
#include "causal_bsts/series.hpp"

namespace causal_bsts {

struct TraceMeta {
  std::uint64_t seed = 0;
  Index niter = 0;
  Index burn = 0;
  double wall_seconds = 0.0;
};

// Retained posterior draws. states[i] covers the pre-period (n x d).
struct McmcTrace {
  std::vector<ParameterDraw> params;
  std::vector<StateDraw> states;
  TraceMeta meta;
  std::vector<ComponentSpec> components;
  Index n = 0;
  std::vector<Index> forced_out;  // all-zero covariates dropped from the slab

  std::size_t size() const { return params.size(); }
  Vector final_state(std::size_t draw) const { return states[draw].alpha.row(n - 1).transpose(); }
};

// y minus the contribution of every state component other than the static
// regression. Missing y stays missing.
inline Vector regression_target(const Vector& y_pre, const StateDraw& states,
                                const std::vector<ComponentSpec>& specs, const Matrix& x_pre) {
  StateLayout layout(specs);
  const Index n = y_pre.size();
  Vector out = y_pre;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Index so = layout.state_offset[i], di = layout.dims[i].state;
    if (std::holds_alternative<StaticRegression>(specs[i])) continue;
    if (std::holds_alternative<DynamicRegression>(specs[i])) {
      for (Index t = 0; t < n; ++t) out(t) -= x_pre.row(t).dot(states.alpha.row(t).segment(so, di));
    } else {
      for (Index t = 0; t < n; ++t) out(t) -= states.alpha(t, so);
    }
  }
  return out;
}

struct RegressionDraw {
  Vector beta;  // included coefficients, in index order
  double sigma_sq = 0.0;
};

// (beta, sigma^2) | rho from the conjugate normal-inverse-Gamma posterior.
inline RegressionDraw draw_regression_given_rho(const SlabSufficientStats& stats, Rng& rng) {
  RegressionDraw out;
  const double precision = rng.gamma(0.5 * stats.N, 0.5 * stats.S);
  out.sigma_sq = 1.0 / precision;
  const Index k = static_cast<Index>(stats.included.size());
  out.beta = stats.beta_tilde;
  if (k == 0) return out;
  Vector z(k);
  for (Index i = 0; i < k; ++i) z(i) = rng.normal();
  // V^-1 = L L'  =>  L'^-1 z ~ N(0, V)
  Vector u = stats.V_inv_chol.matrixU().solve(z);
  out.beta += std::sqrt(out.sigma_sq) * u;
  return out;
}

namespace detail {

// Everything about a chain that does not change between iterations.
struct ChainSetup {
  std::vector<ComponentSpec> specs;
  StateLayout layout{std::vector<ComponentSpec>{}};
  Index n = 0;
  Index J = 0;
  Vector y_pre;
  Matrix x_pre;
  SampleMoments moments;
  InitialStateDistribution init;
  std::vector<std::vector<InverseGammaSpec>> variance_priors;  // per component, per noise term
  InverseGammaSpec observation_prior;
  int static_index = -1;
  SlabPrior slab;
  RegressionData slab_data;  // X'X over observed rows; X'y filled per iteration
  std::vector<Index> observed_rows;
  std::vector<Index> forced_out;
  FilterOptions filter;
};

inline ChainSetup make_setup(const ObservedSeries& series, const AnalysisConfig& config) {
  ChainSetup s;
  const ModelSpec& model = config.model;
  validate_model_spec(model, series.num_covariates());
  s.specs = model.components;
  s.layout = StateLayout(s.specs);
  s.n = series.n;
  s.J = series.num_covariates();
  s.y_pre = series.y.head(s.n);
  s.x_pre = series.x.topRows(s.n);
  s.moments = sample_moments(series);
  if (!(s.moments.s_y_sq > 0.0)) throw DegenerateInput("pre-period target is constant; the prior scale s_y^2 is zero");
  s.init = initial_state_distribution(s.specs, s.moments, first_observed(series));
  s.filter.variance_floor = 1e-12 * s.moments.s_y_sq;
  s.filter.keep_covariances = false;

  for (std::size_t i = 0; i < s.specs.size(); ++i) {
    std::vector<InverseGammaSpec> pri;
    const auto& c = s.specs[i];
    if (const auto* p = std::get_if<LocalLevel>(&c)) {
      pri.push_back(p->level_prior.resolve(s.moments.s_y_sq));
    } else if (const auto* p = std::get_if<LocalLinearTrend>(&c)) {
      pri.push_back(p->level_prior.resolve(s.moments.s_y_sq));
      pri.push_back(p->slope_prior.resolve(s.moments.s_y_sq));
    } else if (const auto* p = std::get_if<SemiLocalLinearTrend>(&c)) {
      pri.push_back(p->level_prior.resolve(s.moments.s_y_sq));
      pri.push_back(p->slope_prior.resolve(s.moments.s_y_sq));
    } else if (const auto* p = std::get_if<Seasonal>(&c)) {
      pri.push_back(p->prior.resolve(s.moments.s_y_sq));
    } else if (const auto* p = std::get_if<DynamicRegression>(&c)) {
      for (Index j = 0; j < p->num_covariates; ++j) pri.push_back(p->prior.resolve(s.moments.s_y_sq));
    } else if (std::holds_alternative<StaticRegression>(c)) {
      s.static_index = static_cast<int>(i);
    }
    s.variance_priors.push_back(std::move(pri));
  }
  s.observation_prior = model.observation_prior.resolve(s.moments.s_y_sq);

  for (Index t = 0; t < s.n; ++t)
    if (!is_missing(s.y_pre(t))) s.observed_rows.push_back(t);
  if (s.static_index >= 0) {
    Matrix xo = s.x_pre(s.observed_rows, Eigen::all);
    s.slab_data.xtx = xo.transpose() * xo;
    s.slab_data.n = static_cast<Index>(s.observed_rows.size());
    SpikeSlabSpec spec = model.regression.spec_for(s.J);
    s.slab = resolve_slab_prior(spec, s.slab_data.xtx, s.slab_data.n, s.moments.s_y_sq, &s.forced_out);
  }
  return s;
}

inline ParameterDraw initial_parameters(const ChainSetup& s) {
  ParameterDraw p;
  for (std::size_t i = 0; i < s.specs.size(); ++i) {
    Vector v(static_cast<Index>(s.variance_priors[i].size()));
    for (Index k = 0; k < v.size(); ++k) v(k) = s.variance_priors[i][static_cast<std::size_t>(k)].variance_guess();
    p.component_variances.push_back(v);
  }
  p.beta = Vector::Zero(s.J);
  p.rho.assign(static_cast<std::size_t>(s.J), 0);
  if (s.static_index >= 0) {
    for (Index j = 0; j < s.J; ++j)
      if (s.slab.pi[static_cast<std::size_t>(j)] >= 1.0) p.rho[static_cast<std::size_t>(j)] = 1;
    p.sigma_eps_sq = s.slab.s_eps / s.slab.nu_eps;
  } else {
    p.sigma_eps_sq = s.observation_prior.variance_guess();
  }
  return p;
}

// Conjugate updates of every diffusion variance from the state residuals
// a_{t+1} - c_t - T_t a_t. Seasonal terms only count at season starts.
inline void draw_state_variances(const ChainSetup& s, const StateSpaceModel& model, const StateDraw& states,
                                 ParameterDraw& p, Rng& rng) {
  const Index n = s.n;
  std::vector<std::vector<double>> ss(s.specs.size());
  std::vector<std::vector<Index>> counts(s.specs.size());
  for (std::size_t i = 0; i < s.specs.size(); ++i) {
    ss[i].assign(s.variance_priors[i].size(), 0.0);
    counts[i].assign(s.variance_priors[i].size(), 0);
  }
  Vector resid(model.state_dim());
  for (Index t = 0; t + 1 < n; ++t) {
    const auto& tr = model.transition(t);
    resid.noalias() = states.alpha.row(t + 1).transpose() - tr.c;
    resid.noalias() -= tr.T * states.alpha.row(t).transpose();
    for (std::size_t i = 0; i < s.specs.size(); ++i) {
      const auto& pri = s.variance_priors[i];
      if (pri.empty()) continue;
      const Index so = s.layout.state_offset[i];
      if (const auto* seas = std::get_if<Seasonal>(&s.specs[i])) {
        if (!starts_season(seas->duration, t + 2)) continue;
        ss[i][0] += resid(so) * resid(so);
        ++counts[i][0];
        continue;
      }
      for (std::size_t k = 0; k < pri.size(); ++k) {
        const double e = resid(so + static_cast<Index>(k));
        ss[i][k] += e * e;
        ++counts[i][k];
      }
    }
  }
  for (std::size_t i = 0; i < s.specs.size(); ++i) {
    for (std::size_t k = 0; k < s.variance_priors[i].size(); ++k) {
      const double v = draw_variance(s.variance_priors[i][k], ss[i][k], counts[i][k], rng);
      if (!std::isfinite(v) || !(v > 0.0))
        throw NumericalError("non-finite variance draw for component " + component_name(s.specs[i]));
      p.component_variances[i](static_cast<Index>(k)) = v;
    }
  }
}

inline void draw_observation_variance(const ChainSetup& s, const StateSpaceModel& model,
                                      const StateDraw& states, ParameterDraw& p, Rng& rng) {
  double ss = 0.0;
  for (Index t : s.observed_rows) {
    const double e = s.y_pre(t) - model.Z(t).dot(states.alpha.row(t));
    ss += e * e;
  }
  const double v = draw_variance(s.observation_prior, ss, static_cast<Index>(s.observed_rows.size()), rng);
  if (!std::isfinite(v) || !(v > 0.0)) throw NumericalError("non-finite observation variance draw");
  p.sigma_eps_sq = v;
}

// Single-site Gibbs over the inclusion indicators in random order, then the
// conjugate draw of (beta, sigma^2) given the final pattern.
inline void draw_regression(const ChainSetup& s, const Vector& y_dot, ParameterDraw& p, Rng& rng) {
  RegressionData data = s.slab_data;
  data.xty = Vector::Zero(s.J);
  data.yty = 0.0;
  for (Index t : s.observed_rows) {
    data.xty.noalias() += s.x_pre.row(t).transpose() * y_dot(t);
    data.yty += y_dot(t) * y_dot(t);
  }
  std::vector<Index> order(static_cast<std::size_t>(s.J));
  for (Index j = 0; j < s.J; ++j) order[static_cast<std::size_t>(j)] = j;
  rng.shuffle(order);
  for (Index j : order) {
    const auto uj = static_cast<std::size_t>(j);
    const double pi = s.slab.pi[uj];
    if (pi <= 0.0 || pi >= 1.0) {
      p.rho[uj] = pi >= 1.0 ? 1 : 0;
      continue;
    }
    p.rho[uj] = 0;
    const double w0 = log_model_weight(p.rho, slab_sufficient_stats(data, p.rho, s.slab), s.slab);
    p.rho[uj] = 1;
    const double w1 = log_model_weight(p.rho, slab_sufficient_stats(data, p.rho, s.slab), s.slab);
    double prob1;
    if (w1 == -kInf && w0 == -kInf) prob1 = 0.5;
    else prob1 = 1.0 / (1.0 + std::exp(w0 - w1));
    p.rho[uj] = rng.uniform() < prob1 ? 1 : 0;
  }
  const SlabSufficientStats stats = slab_sufficient_stats(data, p.rho, s.slab);
  const RegressionDraw draw = draw_regression_given_rho(stats, rng);
  if (!std::isfinite(draw.sigma_sq) || !(draw.sigma_sq > 0.0))
    throw NumericalError("non-finite observation variance draw in regression step");
  p.beta.setZero();
  for (std::size_t k = 0; k < stats.included.size(); ++k) p.beta(stats.included[k]) = draw.beta(static_cast<Index>(k));
  p.sigma_eps_sq = draw.sigma_sq;
}

}  // namespace detail

// Gibbs sampler over (theta, states) given the pre-period data only. Each
// sweep draws states by simulation smoothing, then diffusion variances, then
// either the observation variance or the spike-and-slab regression block.
inline McmcTrace run_chain(const ObservedSeries& series, const AnalysisConfig& config, Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  if (config.niter < 1) throw ValidationError("niter must be positive");
  if (!(config.burn_frac >= 0.0 && config.burn_frac < 1.0)) throw ValidationError("burn fraction must be in [0, 1)");
  const detail::ChainSetup s = detail::make_setup(series, config);

  McmcTrace trace;
  trace.components = s.specs;
  trace.n = s.n;
  trace.forced_out = s.forced_out;
  trace.meta.seed = config.seed;
  trace.meta.niter = config.niter;
  trace.meta.burn = config.burn_count();
  trace.params.reserve(static_cast<std::size_t>(config.retained_count()));
  trace.states.reserve(static_cast<std::size_t>(config.retained_count()));

  ParameterDraw theta = detail::initial_parameters(s);
  for (Index iter = 0; iter < config.niter; ++iter) {
    const StateSpaceModel model = StateSpaceModel::build(s.specs, s.x_pre, theta, s.n);
    StateDraw states = simulate_states(model, s.init, s.y_pre, rng, s.filter);
    detail::draw_state_variances(s, model, states, theta, rng);
    if (s.static_index >= 0) {
      const Vector y_dot = regression_target(s.y_pre, states, s.specs, s.x_pre);
      detail::draw_regression(s, y_dot, theta, rng);
    } else {
      detail::draw_observation_variance(s, model, states, theta, rng);
    }
    if (iter >= trace.meta.burn) {
      trace.params.push_back(theta);
      trace.states.push_back(std::move(states));
    }
  }
  trace.meta.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

// Binary trace dump for debugging. Layout (native endianness):
//   "CBSTRACE" magic, then u64 seed, niter, burn, draws, n, d, J, components;
//   per draw: the parameter block (per component: u64 count + doubles; u8 rho
//   x J; f64 beta x J; f64 sigma_eps_sq) followed by the state block
//   (n x d doubles, row-major by time).
// Not a stable format.
inline void write_trace(std::ostream& os, const McmcTrace& trace) {
  auto put_u64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto put_f64 = [&](double v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  os.write("CBSTRACE", 8);
  const std::uint64_t d = trace.states.empty() ? 0 : static_cast<std::uint64_t>(trace.states[0].alpha.cols());
  const std::uint64_t J = trace.params.empty() ? 0 : static_cast<std::uint64_t>(trace.params[0].beta.size());
  put_u64(trace.meta.seed);
  put_u64(static_cast<std::uint64_t>(trace.meta.niter));
  put_u64(static_cast<std::uint64_t>(trace.meta.burn));
  put_u64(trace.size());
  put_u64(static_cast<std::uint64_t>(trace.n));
  put_u64(d);
  put_u64(J);
  put_u64(trace.components.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& p = trace.params[i];
    for (const auto& v : p.component_variances) {
      put_u64(static_cast<std::uint64_t>(v.size()));
      for (Index k = 0; k < v.size(); ++k) put_f64(v(k));
    }
    for (auto r : p.rho) os.put(static_cast<char>(r));
    for (Index j = 0; j < p.beta.size(); ++j) put_f64(p.beta(j));
    put_f64(p.sigma_eps_sq);
    const auto& a = trace.states[i].alpha;
    for (Index t = 0; t < a.rows(); ++t)
      for (Index k = 0; k < a.cols(); ++k) put_f64(a(t, k));
  }
}

}  // namespace causal_bsts
