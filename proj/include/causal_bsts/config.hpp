#pragma once

#include <cmath>
#include <cstdint>

#include "causal_bsts/components.hpp"

namespace causal_bsts {

// Run configuration for one analysis.
struct AnalysisConfig {
  Index niter = 10000;
  double burn_frac = 0.1;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  ModelSpec model;
  // Fit on (y - mean) / sd and map draws back. Diagnostic only.
  bool standardize = false;

  Index burn_count() const { return static_cast<Index>(std::floor(burn_frac * static_cast<double>(niter))); }
  Index retained_count() const { return niter - burn_count(); }
  // Interval reporting wants at least this many retained draws.
  static constexpr Index kMinRetained = 1000;
  bool enough_draws() const { return retained_count() >= kMinRetained; }
};

// The default model: a local level plus static regression when covariates
// are present.
inline ModelSpec default_model_spec(Index num_covariates) {
  ModelSpec spec;
  spec.components.emplace_back(LocalLevel{});
  if (num_covariates > 0) spec.components.emplace_back(StaticRegression{num_covariates});
  return spec;
}

}  // namespace causal_bsts
