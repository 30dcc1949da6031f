#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "causal_bsts/config.hpp"
#include "causal_bsts/gibbs.hpp"
#include "causal_bsts/kalman.hpp"
#include "causal_bsts/series.hpp"

namespace causal_bsts {

// One counterfactual path per retained draw: draws x (m - n).
struct CounterfactualDraws {
  Matrix ytilde;
};

// Posterior predictive paths for the post-period. Each row continues one
// retained state/parameter draw forward through the observed covariates, so
// rows are joint trajectories.
inline CounterfactualDraws posterior_predictive(const McmcTrace& trace, const ObservedSeries& series, Rng& rng) {
  if (trace.size() == 0) throw ValidationError("posterior predictive needs a non-empty trace");
  const Index m = series.m(), n = trace.n;
  if (n != series.n) throw DimensionMismatch("trace was fit with a different intervention index");
  CounterfactualDraws out;
  out.ytilde.resize(static_cast<Index>(trace.size()), m - n);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const StateSpaceModel model = StateSpaceModel::build(trace.components, series.x, trace.params[i], m);
    out.ytilde.row(static_cast<Index>(i)) = simulate_forward(model, n, trace.final_state(i), rng).transpose();
  }
  return out;
}

// phi_t = y_t - y~_t per draw. Missing y_t gives a NaN column.
inline Matrix pointwise_impact(const CounterfactualDraws& draws, const Vector& y_post) {
  if (y_post.size() != draws.ytilde.cols())
    throw DimensionMismatch("post-period length does not match the counterfactual draws");
  Matrix phi = (-draws.ytilde).rowwise() + y_post.transpose();
  for (Index t = 0; t < y_post.size(); ++t)
    if (is_missing(y_post(t))) phi.col(t).setConstant(kNaN);
  return phi;
}

// Per-draw prefix sums over the post-period; NaN (missing) points are skipped.
inline Matrix cumulative_impact(const Matrix& phi) {
  Matrix cum(phi.rows(), phi.cols());
  for (Index r = 0; r < phi.rows(); ++r) {
    double acc = 0.0;
    for (Index t = 0; t < phi.cols(); ++t) {
      if (!is_missing(phi(r, t))) acc += phi(r, t);
      cum(r, t) = acc;
    }
  }
  return cum;
}

// Per-draw running mean of the impact since the intervention. The divisor is
// the number of observed points so far (t - n without gaps).
inline Matrix running_average_impact(const Matrix& phi) {
  Matrix avg(phi.rows(), phi.cols());
  for (Index r = 0; r < phi.rows(); ++r) {
    double acc = 0.0;
    Index count = 0;
    for (Index t = 0; t < phi.cols(); ++t) {
      if (!is_missing(phi(r, t))) {
        acc += phi(r, t);
        ++count;
      }
      avg(r, t) = count > 0 ? acc / static_cast<double>(count) : kNaN;
    }
  }
  return avg;
}

// Empirical quantile with linear interpolation between order statistics
// (the "type 7" definition). `sorted` must be ascending and non-empty.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

struct Interval {
  double mean = kNaN;
  double lower = kNaN;
  double upper = kNaN;
};

inline Interval summarize_values(std::vector<double> values, double alpha) {
  Interval out;
  std::erase_if(values, [](double v) { return is_missing(v); });
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  out.lower = quantile_sorted(values, 0.5 * alpha);
  out.upper = quantile_sorted(values, 1.0 - 0.5 * alpha);
  return out;
}

// Per-time-point mean and central interval of a draws x horizon matrix.
struct Band {
  Vector mean;
  Vector lower;
  Vector upper;

  Interval at(Index t) const { return {mean(t), lower(t), upper(t)}; }
};

inline Band summarize_columns(const Matrix& draws, double alpha) {
  Band b{Vector(draws.cols()), Vector(draws.cols()), Vector(draws.cols())};
  std::vector<double> col(static_cast<std::size_t>(draws.rows()));
  for (Index t = 0; t < draws.cols(); ++t) {
    for (Index r = 0; r < draws.rows(); ++r) col[static_cast<std::size_t>(r)] = draws(r, t);
    const Interval iv = summarize_values(col, alpha);
    b.mean(t) = iv.mean;
    b.lower(t) = iv.lower;
    b.upper(t) = iv.upper;
  }
  return b;
}

enum class QuantityKind { Flow, Stock };

struct ImpactSeries {
  Vector observed;
  Band counterfactual;
  Band pointwise;
  Band cumulative;
  Band running_avg;
};

struct ImpactReport {
  double alpha = 0.05;
  QuantityKind kind = QuantityKind::Flow;
  Interval abs_effect;      // total effect over the post-period
  Interval rel_effect;      // total effect / total counterfactual, per draw
  Interval average_effect;  // running average at the last point
  double tail_prob = kNaN;
  bool significant = false;
  bool cumulative_interpretable = true;
  Index draws = 0;
  Index excluded_relative_draws = 0;
  Index missing_post_points = 0;
  std::vector<std::string> warnings;
};

struct ImpactSummary {
  ImpactSeries series;
  ImpactReport report;
};

// Posterior summaries of the impact draws. The verdict is significant iff
// the central (1 - alpha) interval of the cumulative effect at the last
// post-period point excludes zero.
inline ImpactSummary summarize(const Matrix& phi, const Matrix& ytilde, double alpha,
                               QuantityKind kind = QuantityKind::Flow) {
  if (phi.rows() != ytilde.rows() || phi.cols() != ytilde.cols())
    throw DimensionMismatch("impact and counterfactual draws differ in shape");
  if (phi.rows() == 0 || phi.cols() == 0) throw ValidationError("no draws to summarize");
  ImpactSummary out;
  ImpactReport& rep = out.report;
  rep.alpha = alpha;
  rep.kind = kind;
  rep.draws = phi.rows();
  if (rep.draws < AnalysisConfig::kMinRetained)
    rep.warnings.push_back("only " + std::to_string(rep.draws) +
                           " posterior draws; interval end points are noisy below " +
                           std::to_string(AnalysisConfig::kMinRetained));

  const Index h = phi.cols();
  out.series.observed.resize(h);
  for (Index t = 0; t < h; ++t) {
    out.series.observed(t) = phi(0, t) + ytilde(0, t);
    if (is_missing(phi(0, t))) ++rep.missing_post_points;
  }
  if (rep.missing_post_points > 0)
    rep.warnings.push_back(std::to_string(rep.missing_post_points) +
                           " post-period observations are missing; they are gaps in the pointwise "
                           "series and skipped in cumulative sums");

  const Matrix cum = cumulative_impact(phi);
  const Matrix avg = running_average_impact(phi);
  out.series.counterfactual = summarize_columns(ytilde, alpha);
  out.series.pointwise = summarize_columns(phi, alpha);
  out.series.cumulative = summarize_columns(cum, alpha);
  out.series.running_avg = summarize_columns(avg, alpha);

  std::vector<double> totals(static_cast<std::size_t>(rep.draws));
  std::vector<double> rel;
  rel.reserve(totals.size());
  for (Index r = 0; r < rep.draws; ++r) {
    const double total = cum(r, h - 1);
    totals[static_cast<std::size_t>(r)] = total;
    double cf_total = 0.0;
    for (Index t = 0; t < h; ++t)
      if (!is_missing(phi(r, t))) cf_total += ytilde(r, t);
    if (cf_total > 0.0) rel.push_back(total / cf_total);
    else ++rep.excluded_relative_draws;
  }
  if (rep.excluded_relative_draws > 0)
    rep.warnings.push_back(std::to_string(rep.excluded_relative_draws) +
                           " draws with non-positive total counterfactual excluded from the relative effect");

  rep.abs_effect = out.series.cumulative.at(h - 1);
  rep.rel_effect = summarize_values(rel, alpha);
  rep.average_effect = out.series.running_avg.at(h - 1);
  Index below = 0, above = 0;
  for (double v : totals) {
    if (v <= 0.0) ++below;
    if (v >= 0.0) ++above;
  }
  rep.tail_prob = static_cast<double>(rep.abs_effect.mean >= 0.0 ? below : above) / static_cast<double>(rep.draws);
  rep.significant = rep.abs_effect.lower > 0.0 || rep.abs_effect.upper < 0.0;
  rep.cumulative_interpretable = kind == QuantityKind::Flow;
  if (!rep.cumulative_interpretable)
    rep.warnings.push_back("stock quantity: cumulative effects are not interpretable; use the running average");
  return out;
}

// Full pipeline result for one series.
struct AnalysisResult {
  McmcTrace trace;
  CounterfactualDraws counterfactual;
  ImpactSummary impact;
  SampleMoments moments;
};

// validate -> sample -> predict -> summarize. One seeded stream drives both
// the chain and the predictive draws.
inline AnalysisResult analyze(const ObservedSeries& series, const AnalysisConfig& config,
                              QuantityKind kind = QuantityKind::Flow) {
  const ValidationResult v = validate_series(series);
  if (!v.ok()) throw ValidationError(v.violations.front());
  AnalysisResult out;
  out.moments = sample_moments(series);
  Rng rng(config.seed);

  if (!config.standardize) {
    out.trace = run_chain(series, config, rng);
    out.counterfactual = posterior_predictive(out.trace, series, rng);
  } else {
    const double sd = out.moments.s_y();
    if (!(sd > 0.0)) throw DegenerateInput("cannot standardize a constant pre-period series");
    ObservedSeries scaled = series;
    scaled.y = (series.y.array() - out.moments.y_bar) / sd;
    out.trace = run_chain(scaled, config, rng);
    out.counterfactual = posterior_predictive(out.trace, scaled, rng);
    out.counterfactual.ytilde = (out.counterfactual.ytilde.array() * sd + out.moments.y_bar).matrix();
  }
  const Vector y_post = series.y.tail(series.post_length());
  const Matrix phi = pointwise_impact(out.counterfactual, y_post);
  out.impact = summarize(phi, out.counterfactual.ytilde, config.alpha, kind);
  out.impact.series.observed = y_post;
  return out;
}

struct PowerReport {
  Index pseudo_n = 0;
  Vector half_width;        // per horizon, (upper - lower) / 2 of the cumulative counterfactual
  Vector observed_cumsum;   // overlay of the observed post-period cumulative sum
  Band cumulative_counterfactual;
  double minimal_detectable_effect = kNaN;  // half width at the last horizon
};

// Retrospective power: treat `pseudo_n` as if it were the intervention and
// report how large a cumulative effect would have to be to leave the central
// counterfactual interval. Only data up to pseudo_n enter the fit.
inline PowerReport power_analysis(const ObservedSeries& series, const AnalysisConfig& config, Index pseudo_n) {
  if (pseudo_n < 1 || pseudo_n >= series.m())
    throw ValidationError("pseudo-intervention index must lie in [1, m)");
  const ObservedSeries shifted = series.with_intervention(pseudo_n);
  const ValidationResult v = validate_series(shifted);
  if (!v.ok()) throw ValidationError(v.violations.front());
  Rng rng(config.seed);
  const McmcTrace trace = run_chain(shifted, config, rng);
  const CounterfactualDraws cf = posterior_predictive(trace, shifted, rng);

  PowerReport out;
  out.pseudo_n = pseudo_n;
  Matrix cum(cf.ytilde.rows(), cf.ytilde.cols());
  for (Index r = 0; r < cf.ytilde.rows(); ++r) {
    double acc = 0.0;
    for (Index t = 0; t < cf.ytilde.cols(); ++t) cum(r, t) = acc += cf.ytilde(r, t);
  }
  out.cumulative_counterfactual = summarize_columns(cum, config.alpha);
  out.half_width = 0.5 * (out.cumulative_counterfactual.upper - out.cumulative_counterfactual.lower);
  out.minimal_detectable_effect = out.half_width(out.half_width.size() - 1);
  out.observed_cumsum.resize(cf.ytilde.cols());
  double acc = 0.0;
  for (Index t = 0; t < cf.ytilde.cols(); ++t) {
    const double y = series.y(pseudo_n + t);
    if (!is_missing(y)) acc += y;
    out.observed_cumsum(t) = acc;
  }
  return out;
}

}  // namespace causal_bsts
