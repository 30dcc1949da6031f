#include <cmath>
#include <cstdlib>
#include <numbers>

#include <gtest/gtest.h>

#include "causal_bsts/simlab.hpp"

using namespace causal_bsts;
using namespace causal_bsts::simlab;

namespace {

SimConfig tiny(double effect = 0.0) {
  SimConfig c;
  c.m_pre = 60;
  c.m_post = 20;
  c.effect_size = effect;
  c.n_sims = 4;
  c.seed = 77;
  return c;
}

EngineConfig quick_engine() {
  EngineConfig e;
  e.niter = 120;
  e.burn_frac = 0.25;
  return e;
}

}  // namespace

TEST(Synthetic, CovariatesAreSinusoidsAndEffectIsMultiplicative) {
  SimConfig cfg = tiny(0.25);
  const SyntheticData d = replicate_data(cfg, 0);
  ASSERT_EQ(d.series.m(), 80);
  EXPECT_EQ(d.series.n, 60);
  for (Index t = 0; t < 80; ++t) {
    const double time = static_cast<double>(t + 1);
    EXPECT_NEAR(d.series.x(t, 0), std::sin(2.0 * std::numbers::pi * time / 90.0), 1e-15);
    EXPECT_NEAR(d.series.x(t, 1), std::sin(2.0 * std::numbers::pi * time / 360.0), 1e-15);
    if (t < 60) {
      EXPECT_EQ(d.series.y(t), d.true_counterfactual(t));
      EXPECT_EQ(d.true_impact(t), 0.0);
    } else {
      EXPECT_NEAR(d.series.y(t), 1.25 * d.true_counterfactual(t), 1e-12);
      EXPECT_NEAR(d.true_impact(t), 0.25 * d.true_counterfactual(t), 1e-12);
    }
  }
  EXPECT_NEAR(d.true_counterfactual.head(5).mean(), cfg.initial_level, 1.5);
}

TEST(Synthetic, EffectSizeAndBreakLeaveThePrePeriodPaired) {
  const SyntheticData a = replicate_data(tiny(0.0), 2);
  const SyntheticData b = replicate_data(tiny(1.0), 2);
  SimConfig brk = tiny(0.0);
  brk.break_at = 5;
  const SyntheticData c = replicate_data(brk, 2);
  EXPECT_EQ(a.series.y.head(60), b.series.y.head(60));
  EXPECT_EQ(a.true_counterfactual, b.true_counterfactual);
  EXPECT_EQ(a.series.y.head(65), c.series.y.head(65));
  EXPECT_NE(a.series.y(79), c.series.y(79));
}

TEST(Synthetic, BreakTriplesCoefficientWalkAfterTheBreakPoint) {
  // With level and noise switched off, y - level is sum_j beta_j x_j; the
  // per-step beta increments recovered from y have the walk sd.
  SimConfig cfg;
  cfg.m_pre = 10;
  cfg.m_post = 4000;
  cfg.level_walk_sd = 0.0;
  cfg.obs_sd = 0.0;
  cfg.beta_walk_sd = 0.01;
  cfg.break_at = 2000;
  cfg.wavelengths = {4.0, 4.0};
  Rng rng(5);
  const SyntheticData d = generate_synthetic(cfg, rng);
  // Wavelength 4: x = sin(pi t / 2) cycles 1, 0, -1, 0, so y - 10 = (b1 + b2) x at odd t.
  double before = 0.0, after = 0.0;
  Index nb = 0, na = 0;
  double prev = kNaN;
  for (Index t = 0; t < cfg.m(); ++t) {
    const double x = d.series.x(t, 0);
    if (std::abs(x) < 0.5) continue;
    const double s = (d.series.y(t) - 10.0) / x;
    if (!std::isnan(prev)) {
      const double inc = s - prev;  // two steps of two walks: variance 4 sd^2
      if (t + 1 - cfg.m_pre > 2002 + 2) {
        after += inc * inc;
        ++na;
      } else if (t + 1 - cfg.m_pre <= 2000) {
        before += inc * inc;
        ++nb;
      }
    }
    prev = s;
  }
  const double sd_before = std::sqrt(before / static_cast<double>(nb) / 4.0);
  const double sd_after = std::sqrt(after / static_cast<double>(na) / 4.0);
  EXPECT_NEAR(sd_before, 0.01, 0.001);
  EXPECT_NEAR(sd_after, 0.03, 0.003);
}

TEST(Seeds, DataAndFitStreamsAreDistinct) {
  EXPECT_NE(data_seed(1, 0), fit_seed(1, 0));
  EXPECT_NE(data_seed(1, 1), data_seed(1, 0));
  EXPECT_EQ(data_seed(9, 3), substream_seed(9, 6));
  EXPECT_EQ(fit_seed(9, 3), substream_seed(9, 7));
}

TEST(Detection, CumulativeIntervalDecidesDetection) {
  Matrix ytilde(200, 3);
  Rng rng(1);
  for (Index i = 0; i < ytilde.size(); ++i) ytilde.data()[i] = rng.normal();
  EXPECT_FALSE(detects_effect(ytilde, Vector::Zero(3), 0.05));
  EXPECT_TRUE(detects_effect(ytilde, Vector::Constant(3, 4.0), 0.05));
  const Interval iv = cumulative_effect(ytilde, Vector::Constant(3, 1.0), 0.05);
  EXPECT_NEAR(iv.mean, 3.0 - ytilde.rowwise().sum().mean(), 1e-12);
}

TEST(Detection, BetaIntervalMatchesKnownQuantiles) {
  // Beta(1, 1) posterior with no data is uniform.
  const auto [lo0, hi0] = beta_interval(0, 0);
  EXPECT_NEAR(lo0, 0.025, 1e-12);
  EXPECT_NEAR(hi0, 0.975, 1e-12);
  // Beta(1, n + 1) after n failures has closed-form quantiles 1 - (1 - p)^(1/(n+1)).
  const auto [lo, hi] = beta_interval(0, 9);
  EXPECT_NEAR(lo, 1.0 - std::pow(0.975, 0.1), 1e-10);
  EXPECT_NEAR(hi, 1.0 - std::pow(0.025, 0.1), 1e-10);
  const auto [a, b] = beta_interval(50, 100);
  EXPECT_NEAR(0.5 * (a + b), 0.5, 1e-10);
}

TEST(Experiments, ThreadCountDoesNotChangeResults) {
  const SimConfig cfg = tiny();
  setenv("IMPACT_THREADS", "1", 1);
  const auto one = coverage_experiment(cfg, quick_engine());
  setenv("IMPACT_THREADS", "3", 1);
  const auto three = coverage_experiment(cfg, quick_engine());
  unsetenv("IMPACT_THREADS");
  EXPECT_EQ(one.coverage, three.coverage);
  EXPECT_EQ(one.replicates, 4);
  EXPECT_EQ(one.failures, 0);
  ASSERT_EQ(one.coverage.size(), 20);
  for (Index t = 0; t < 20; ++t) {
    EXPECT_GE(one.coverage(t), 0.0);
    EXPECT_LE(one.coverage(t), 1.0);
  }
}

TEST(Experiments, PowerRowsShareFitsAcrossEffects) {
  const auto rows = power_experiment({0.0, 5.0}, 3, tiny(), quick_engine());
  ASSERT_EQ(rows.size(), 2U);
  EXPECT_EQ(rows[0].replicates, 3);
  EXPECT_EQ(rows[1].detections, 3);  // a sixfold lift is always detected
  const auto [lo, hi] = beta_interval(rows[0].detections, rows[0].replicates);
  EXPECT_EQ(rows[0].lower, lo);
  EXPECT_EQ(rows[0].upper, hi);
  EXPECT_DOUBLE_EQ(rows[0].rate, static_cast<double>(rows[0].detections) / 3.0);
}

TEST(Experiments, AccuracyComparisonMatchesSeparateRuns) {
  SimConfig cfg = tiny(0.1);
  cfg.n_sims = 2;
  const auto both = accuracy_comparison(cfg, quick_engine());
  const auto plain = accuracy_experiment(cfg, quick_engine(), false);
  EXPECT_EQ(both.no_break.errors, plain.errors);
  EXPECT_EQ(both.with_break.errors.rows(), 2);
  // The break only acts after step break_at; the post-period here is shorter.
  EXPECT_EQ(both.with_break.errors, both.no_break.errors);
}

TEST(Aggregate, MeanAndStandardErrorPerHorizon) {
  Vector a(2), b(2), c(2);
  a << 1, 2;
  b << 3, 2;
  c << 5, 2;
  const auto r = simlab::detail::aggregate_errors({a, Vector(), b, c}, 2);
  EXPECT_EQ(r.replicates, 3);
  EXPECT_EQ(r.failures, 1);
  EXPECT_DOUBLE_EQ(r.mean_error(0), 3.0);
  EXPECT_DOUBLE_EQ(r.sem(0), 2.0 / std::sqrt(3.0));
  EXPECT_DOUBLE_EQ(r.sem(1), 0.0);
}

TEST(Aggregate, TrendSlopeIsLeastSquares) {
  Vector v(5);
  v << 1, 3, 5, 7, 9;
  EXPECT_DOUBLE_EQ(trend_slope(v), 2.0);
  v << 2, 2, 2, 2, 2;
  EXPECT_DOUBLE_EQ(trend_slope(v), 0.0);
}
