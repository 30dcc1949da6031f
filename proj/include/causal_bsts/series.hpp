#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "causal_bsts/linalg.hpp"

namespace causal_bsts {

// Target series, contemporaneous covariates and the intervention split.
// `n` is the 1-based index of the last pre-intervention time point, so the
// pre-period is rows [0, n) and the post-period rows [n, m) in 0-based terms.
// Missing target values are NaN.
struct ObservedSeries {
  std::vector<std::string> time_labels;  // raw text of the time column
  std::vector<std::int64_t> time_index;  // period units (days for ISO dates)
  Vector y;
  Matrix x;  // m x J
  Index n = 0;
  std::string target_name = "y";
  std::vector<std::string> covariate_names;

  Index m() const { return y.size(); }
  Index num_covariates() const { return x.cols(); }
  Index post_length() const { return m() - n; }

  // Same series with the intervention moved to `new_n`.
  ObservedSeries with_intervention(Index new_n) const {
    ObservedSeries s = *this;
    s.n = new_n;
    return s;
  }
};

// Builds a series with integer time index 1..m and generated covariate names.
inline ObservedSeries make_series(Vector y, Matrix x, Index n) {
  ObservedSeries s;
  s.y = std::move(y);
  s.x = x.rows() == 0 && x.cols() == 0 ? Matrix(s.y.size(), 0) : std::move(x);
  s.n = n;
  for (Index t = 0; t < s.y.size(); ++t) {
    s.time_index.push_back(t + 1);
    s.time_labels.push_back(std::to_string(t + 1));
  }
  for (Index j = 0; j < s.x.cols(); ++j) s.covariate_names.push_back("x" + std::to_string(j + 1));
  return s;
}

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

inline ValidationResult validate_series(const ObservedSeries& s) {
  ValidationResult r;
  auto fail = [&](std::string msg) { r.violations.push_back(std::move(msg)); };
  const Index m = s.m();

  if (m == 0) {
    fail("target series is empty");
    return r;
  }
  if (s.n >= m) fail("post-period empty: intervention index n=" + std::to_string(s.n) +
                     " must be < m=" + std::to_string(m));
  if (s.n < 1) fail("pre-period empty: intervention index n=" + std::to_string(s.n) + " must be >= 1");

  if (static_cast<Index>(s.time_index.size()) != m) {
    fail("time index length " + std::to_string(s.time_index.size()) + " does not match m=" +
         std::to_string(m));
  } else if (m >= 2) {
    const std::int64_t step = s.time_index[1] - s.time_index[0];
    for (Index t = 1; t < m; ++t) {
      const std::int64_t d = s.time_index[t] - s.time_index[t - 1];
      if (d <= 0) {
        fail("timestamps must be strictly increasing (row " + std::to_string(t + 1) + ")");
        break;
      }
      if (d != step) {
        fail("timestamps must be uniformly spaced (row " + std::to_string(t + 1) + ")");
        break;
      }
    }
  }

  if (s.x.rows() != m) {
    fail("covariate matrix has " + std::to_string(s.x.rows()) + " rows, expected " +
         std::to_string(m));
  } else {
    for (Index t = 0; t < m; ++t) {
      bool bad = false;
      for (Index j = 0; j < s.x.cols(); ++j) {
        if (!std::isfinite(s.x(t, j))) {
          fail("covariates must be complete: missing or non-finite value at row " +
               std::to_string(t + 1) + ", covariate " + std::to_string(j + 1));
          bad = true;
          break;
        }
      }
      if (bad) break;
    }
  }

  for (Index t = 0; t < m; ++t) {
    if (std::isinf(s.y(t))) {
      fail("target has a non-finite value at row " + std::to_string(t + 1));
      break;
    }
  }

  Index observed_pre = 0;
  for (Index t = 0; t < std::min(s.n, m); ++t)
    if (!is_missing(s.y(t))) ++observed_pre;
  if (observed_pre < 3) fail("insufficient pre-period data: need at least 3 observed values, have " +
                             std::to_string(observed_pre));
  return r;
}

struct SampleMoments {
  double s_y_sq = 0.0;  // pre-period sample variance
  double y_bar = 0.0;   // pre-period mean
  double s_y() const { return std::sqrt(s_y_sq); }
};

// Mean and unbiased variance of the observed pre-period target values.
inline SampleMoments sample_moments(const ObservedSeries& s) {
  double sum = 0.0;
  Index count = 0;
  const Index n = std::min(s.n, s.m());
  for (Index t = 0; t < n; ++t) {
    if (is_missing(s.y(t))) continue;
    sum += s.y(t);
    ++count;
  }
  if (count < 2) throw DegenerateInput("sample variance needs at least 2 observed pre-period values");
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (Index t = 0; t < n; ++t) {
    if (is_missing(s.y(t))) continue;
    ss += (s.y(t) - mean) * (s.y(t) - mean);
  }
  return {ss / static_cast<double>(count - 1), mean};
}

// First observed pre-period value; NaN when none exists.
inline double first_observed(const ObservedSeries& s) {
  for (Index t = 0; t < std::min(s.n, s.m()); ++t)
    if (!is_missing(s.y(t))) return s.y(t);
  return kNaN;
}

// Applies per-covariate lags: column j at time t takes the value at t - lag[j].
// Rows shifted past the start of the series repeat the first available value
// (and symmetrically for negative lags at the end).
inline Matrix shift_covariates(const Matrix& x, const std::vector<int>& lags) {
  if (lags.empty()) return x;
  if (static_cast<Index>(lags.size()) != x.cols())
    throw DimensionMismatch("covariate lag list has " + std::to_string(lags.size()) +
                            " entries, expected " + std::to_string(x.cols()));
  Matrix out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index t = 0; t < x.rows(); ++t) {
      Index src = std::clamp<Index>(t - lags[j], 0, x.rows() - 1);
      out(t, j) = x(src, j);
    }
  }
  return out;
}

}  // namespace causal_bsts
