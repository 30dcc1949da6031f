#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/beta.hpp>

#include "causal_bsts/config.hpp"
#include "causal_bsts/gibbs.hpp"
#include "causal_bsts/impact.hpp"
#include "causal_bsts/random.hpp"
#include "causal_bsts/series.hpp"

namespace causal_bsts::simlab {

// Synthetic data-generating process: two sinusoidal covariates with
// random-walk coefficients, a random-walk level started at initial_level and
// Gaussian noise; the post-period is multiplied by (1 + effect_size).
struct SimConfig {
  Index m_pre = 365;
  Index m_post = 181;
  double beta_walk_sd = 0.01;
  double level_walk_sd = 0.1;
  double obs_sd = 0.1;
  std::array<double, 2> wavelengths{90.0, 360.0};
  // Keeps the series away from zero so a relative lift has a visible effect.
  double initial_level = 10.0;
  double effect_size = 0.0;
  Index n_sims = 100;
  std::uint64_t seed = 20130101;
  std::optional<Index> break_at;  // post-period step after which the beta walk sd is scaled
  double break_multiplier = 3.0;

  Index m() const { return m_pre + m_post; }
};

struct SyntheticData {
  ObservedSeries series;
  Vector true_counterfactual;  // length m
  Vector true_impact;          // observed - counterfactual, 0 before the intervention
};

inline SyntheticData generate_synthetic(const SimConfig& cfg, Rng& rng) {
  const Index m = cfg.m();
  Vector y_cf(m);
  Matrix x(m, 2);
  double beta[2] = {1.0, 1.0};
  double level = cfg.initial_level;
  for (Index t = 0; t < m; ++t) {
    const Index time = t + 1;
    double beta_sd = cfg.beta_walk_sd;
    if (cfg.break_at && time - cfg.m_pre > *cfg.break_at) beta_sd *= cfg.break_multiplier;
    // Fixed draw order keeps break and no-break runs paired.
    for (double& b : beta) b += beta_sd * rng.normal();
    level += cfg.level_walk_sd * rng.normal();
    const double eps = cfg.obs_sd * rng.normal();
    double mean = level;
    for (int j = 0; j < 2; ++j) {
      x(t, j) = std::sin(2.0 * std::numbers::pi * static_cast<double>(time) / cfg.wavelengths[static_cast<std::size_t>(j)]);
      mean += beta[j] * x(t, j);
    }
    y_cf(t) = mean + eps;
  }
  SyntheticData out;
  Vector y = y_cf;
  for (Index t = cfg.m_pre; t < m; ++t) y(t) = (1.0 + cfg.effect_size) * y_cf(t);
  out.series = make_series(y, x, cfg.m_pre);
  out.series.covariate_names = {"z1", "z2"};
  out.true_counterfactual = std::move(y_cf);
  out.true_impact = out.series.y - out.true_counterfactual;
  return out;
}

// Sampler settings for the replicates. The model is a local level plus a
// dynamic regression on both covariates.
struct EngineConfig {
  Index niter = 1200;
  double burn_frac = 1.0 / 6.0;
  double alpha = 0.05;
  ScaledVariancePrior level_prior{32.0, 0.1};
  ScaledVariancePrior coefficient_prior{32.0, 0.1};

  AnalysisConfig analysis_config(std::uint64_t seed) const {
    AnalysisConfig c;
    c.niter = niter;
    c.burn_frac = burn_frac;
    c.alpha = alpha;
    c.seed = seed;
    c.model.components.emplace_back(LocalLevel{level_prior});
    c.model.components.emplace_back(DynamicRegression{2, coefficient_prior});
    return c;
  }
};

inline std::uint64_t data_seed(std::uint64_t master, Index replicate) {
  return substream_seed(master, 2 * static_cast<std::uint64_t>(replicate));
}
inline std::uint64_t fit_seed(std::uint64_t master, Index replicate) {
  return substream_seed(master, 2 * static_cast<std::uint64_t>(replicate) + 1);
}

inline SyntheticData replicate_data(const SimConfig& cfg, Index replicate) {
  Rng rng(data_seed(cfg.seed, replicate));
  return generate_synthetic(cfg, rng);
}

// Fits the engine model to one replicate and returns the counterfactual
// draws. The fit only sees the pre-period, which the effect size and the
// structural break leave untouched, so replicates sharing a seed share a fit.
inline CounterfactualDraws fit_replicate(const SyntheticData& data, const EngineConfig& engine,
                                         std::uint64_t seed) {
  const AnalysisConfig config = engine.analysis_config(seed);
  Rng rng(seed);
  const McmcTrace trace = run_chain(data.series, config, rng);
  return posterior_predictive(trace, data.series, rng);
}

// Runs fn(i) for i in [0, count) on up to IMPACT_THREADS worker threads
// (default: hardware concurrency). Results must be written to slot i.
inline void parallel_for(Index count, const std::function<void(Index)>& fn) {
  unsigned threads = std::max(1U, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("IMPACT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) threads = static_cast<unsigned>(v);
  }
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<Index>(count, 1)));
  if (threads <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::jthread> pool;
  for (unsigned k = 0; k < threads; ++k)
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) fn(i);
    });
}

// Final cumulative-effect interval for an observed post-period path.
inline Interval cumulative_effect(const Matrix& ytilde, const Vector& y_post, double alpha) {
  std::vector<double> totals(static_cast<std::size_t>(ytilde.rows()));
  const double observed = y_post.sum();
  for (Index r = 0; r < ytilde.rows(); ++r) totals[static_cast<std::size_t>(r)] = observed - ytilde.row(r).sum();
  return summarize_values(std::move(totals), alpha);
}

inline bool detects_effect(const Matrix& ytilde, const Vector& y_post, double alpha) {
  const Interval iv = cumulative_effect(ytilde, y_post, alpha);
  return iv.lower > 0.0 || iv.upper < 0.0;
}

// Posterior 95% interval for a rate under a uniform Beta(1, 1) prior.
inline std::pair<double, double> beta_interval(Index successes, Index trials, double level = 0.95) {
  boost::math::beta_distribution<double> post(1.0 + static_cast<double>(successes),
                                              1.0 + static_cast<double>(trials - successes));
  return {boost::math::quantile(post, 0.5 * (1.0 - level)), boost::math::quantile(post, 0.5 * (1.0 + level))};
}

struct PowerRow {
  double effect_size = 0.0;
  Index detections = 0;
  Index replicates = 0;  // successful replicates
  Index failures = 0;
  double rate = kNaN;
  double lower = kNaN;
  double upper = kNaN;
};

// Detection frequency per effect size. Every replicate is fitted once and
// the fit is reused for all effect sizes (paired design).
inline std::vector<PowerRow> power_experiment(const std::vector<double>& effect_sizes, Index n_sims,
                                              const SimConfig& base_cfg, const EngineConfig& engine) {
  if (n_sims < 1) throw ValidationError("power experiment needs at least one replicate");
  std::vector<std::vector<std::int8_t>> detected(static_cast<std::size_t>(n_sims));
  parallel_for(n_sims, [&](Index i) {
    SimConfig cfg = base_cfg;
    cfg.effect_size = 0.0;
    auto& slot = detected[static_cast<std::size_t>(i)];
    try {
      const SyntheticData data = replicate_data(cfg, i);
      const CounterfactualDraws cf = fit_replicate(data, engine, fit_seed(cfg.seed, i));
      const Vector y_cf_post = data.true_counterfactual.tail(cfg.m_post);
      for (double e : effect_sizes)
        slot.push_back(detects_effect(cf.ytilde, (1.0 + e) * y_cf_post, engine.alpha) ? 1 : 0);
    } catch (const Error&) {
      slot.assign(effect_sizes.size(), -1);
    }
  });
  std::vector<PowerRow> rows;
  for (std::size_t k = 0; k < effect_sizes.size(); ++k) {
    PowerRow row;
    row.effect_size = effect_sizes[k];
    for (const auto& d : detected) {
      if (d[k] < 0) {
        ++row.failures;
        continue;
      }
      ++row.replicates;
      row.detections += d[k];
    }
    if (row.replicates > 0) {
      row.rate = static_cast<double>(row.detections) / static_cast<double>(row.replicates);
      std::tie(row.lower, row.upper) = beta_interval(row.detections, row.replicates);
    }
    rows.push_back(row);
  }
  return rows;
}

struct CoverageResult {
  Vector coverage;  // per post-period horizon
  Index replicates = 0;
  Index failures = 0;
};

// Fraction of replicates whose pointwise central (1 - alpha) interval
// contains the true impact, per horizon.
inline CoverageResult coverage_experiment(const SimConfig& cfg, const EngineConfig& engine) {
  if (cfg.n_sims < 1) throw ValidationError("coverage experiment needs at least one replicate");
  std::vector<std::vector<std::int8_t>> hits(static_cast<std::size_t>(cfg.n_sims));
  parallel_for(cfg.n_sims, [&](Index i) {
    auto& slot = hits[static_cast<std::size_t>(i)];
    try {
      const SyntheticData data = replicate_data(cfg, i);
      const CounterfactualDraws cf = fit_replicate(data, engine, fit_seed(cfg.seed, i));
      const Vector y_post = data.series.y.tail(cfg.m_post);
      const Band band = summarize_columns(pointwise_impact(cf, y_post), engine.alpha);
      for (Index t = 0; t < cfg.m_post; ++t) {
        const double truth = data.true_impact(cfg.m_pre + t);
        slot.push_back(truth >= band.lower(t) && truth <= band.upper(t) ? 1 : 0);
      }
    } catch (const Error&) {
      slot.clear();
    }
  });
  CoverageResult out;
  out.coverage = Vector::Zero(cfg.m_post);
  for (const auto& h : hits) {
    if (h.empty()) {
      ++out.failures;
      continue;
    }
    ++out.replicates;
    for (Index t = 0; t < cfg.m_post; ++t) out.coverage(t) += h[static_cast<std::size_t>(t)];
  }
  if (out.replicates > 0) out.coverage /= static_cast<double>(out.replicates);
  return out;
}

struct AccuracyResult {
  Vector mean_error;  // mean of a_{i,t} over replicates, per horizon
  Vector sem;         // standard error of that mean
  Matrix errors;      // replicates x horizon, a_{i,t}
  Index replicates = 0;
  Index failures = 0;

  Vector lower() const { return mean_error - 2.0 * sem; }
  Vector upper() const { return mean_error + 2.0 * sem; }
};

namespace detail {

inline AccuracyResult aggregate_errors(const std::vector<Vector>& rows, Index horizon) {
  AccuracyResult out;
  for (const auto& r : rows) (r.size() == 0 ? out.failures : out.replicates) += 1;
  out.errors.resize(out.replicates, horizon);
  Index k = 0;
  for (const auto& r : rows)
    if (r.size() > 0) out.errors.row(k++) = r.transpose();
  out.mean_error = out.errors.colwise().mean().transpose();
  out.sem = Vector::Zero(horizon);
  if (out.replicates > 1) {
    for (Index t = 0; t < horizon; ++t) {
      const double var = (out.errors.col(t).array() - out.mean_error(t)).square().sum() /
                         static_cast<double>(out.replicates - 1);
      out.sem(t) = std::sqrt(var / static_cast<double>(out.replicates));
    }
  }
  return out;
}

// a_{i,t} = |phi_hat - phi| / phi with phi_hat the posterior mean impact.
inline Vector absolute_percentage_error(const SyntheticData& data, const CounterfactualDraws& cf, Index m_pre) {
  const Index h = cf.ytilde.cols();
  const Vector cf_mean = cf.ytilde.colwise().mean().transpose();
  Vector a(h);
  for (Index t = 0; t < h; ++t) {
    const double phi = data.true_impact(m_pre + t);
    const double phi_hat = data.series.y(m_pre + t) - cf_mean(t);
    a(t) = std::abs(phi_hat - phi) / phi;
  }
  return a;
}

}  // namespace detail

// Absolute percentage estimation error per horizon (mean +- 2 sem).
inline AccuracyResult accuracy_experiment(const SimConfig& cfg, const EngineConfig& engine, bool with_break) {
  if (!(cfg.effect_size > 0.0)) throw ValidationError("accuracy experiment needs a positive effect size");
  SimConfig c = cfg;
  if (with_break && !c.break_at) c.break_at = 90;
  if (!with_break) c.break_at.reset();
  std::vector<Vector> rows(static_cast<std::size_t>(c.n_sims));
  parallel_for(c.n_sims, [&](Index i) {
    try {
      const SyntheticData data = replicate_data(c, i);
      const CounterfactualDraws cf = fit_replicate(data, engine, fit_seed(c.seed, i));
      rows[static_cast<std::size_t>(i)] = detail::absolute_percentage_error(data, cf, c.m_pre);
    } catch (const Error&) {
      rows[static_cast<std::size_t>(i)] = Vector();
    }
  });
  return detail::aggregate_errors(rows, c.m_post);
}

struct AccuracyComparison {
  AccuracyResult no_break;
  AccuracyResult with_break;
  Index break_at = 90;
};

// Both accuracy variants from one fit per replicate; identical to two
// accuracy_experiment calls because the break only touches the post-period.
inline AccuracyComparison accuracy_comparison(const SimConfig& cfg, const EngineConfig& engine) {
  if (!(cfg.effect_size > 0.0)) throw ValidationError("accuracy experiment needs a positive effect size");
  SimConfig plain = cfg, broken = cfg;
  plain.break_at.reset();
  if (!broken.break_at) broken.break_at = 90;
  std::vector<Vector> rows_plain(static_cast<std::size_t>(cfg.n_sims)), rows_break(rows_plain.size());
  parallel_for(cfg.n_sims, [&](Index i) {
    try {
      const SyntheticData a = replicate_data(plain, i);
      const SyntheticData b = replicate_data(broken, i);
      const CounterfactualDraws cf = fit_replicate(a, engine, fit_seed(cfg.seed, i));
      rows_plain[static_cast<std::size_t>(i)] = detail::absolute_percentage_error(a, cf, cfg.m_pre);
      rows_break[static_cast<std::size_t>(i)] = detail::absolute_percentage_error(b, cf, cfg.m_pre);
    } catch (const Error&) {
      rows_plain[static_cast<std::size_t>(i)] = Vector();
      rows_break[static_cast<std::size_t>(i)] = Vector();
    }
  });
  AccuracyComparison out;
  out.no_break = detail::aggregate_errors(rows_plain, cfg.m_post);
  out.with_break = detail::aggregate_errors(rows_break, cfg.m_post);
  out.break_at = *broken.break_at;
  return out;
}

// Least-squares slope of values against 1, 2, ..., len.
inline double trend_slope(const Vector& values) {
  const Index n = values.size();
  if (n < 2) return 0.0;
  const double xbar = 0.5 * static_cast<double>(n + 1);
  const double ybar = values.mean();
  double sxy = 0.0, sxx = 0.0;
  for (Index t = 0; t < n; ++t) {
    const double dx = static_cast<double>(t + 1) - xbar;
    sxy += dx * (values(t) - ybar);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace causal_bsts::simlab
