#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "causal_bsts/linalg.hpp"
#include "causal_bsts/priors.hpp"
#include "causal_bsts/series.hpp"

namespace causal_bsts {

// ---------------------------------------------------------------------------
// Component specifications.

// Random-walk level.
struct LocalLevel {
  ScaledVariancePrior level_prior = ScaledVariancePrior::tight_level();
};

// Level plus random-walk slope.
struct LocalLinearTrend {
  ScaledVariancePrior level_prior = ScaledVariancePrior::weak_default();
  ScaledVariancePrior slope_prior = ScaledVariancePrior::weak_default();
};

// Level plus a slope that follows an AR(1) around the long-run slope D.
struct SemiLocalLinearTrend {
  double D = 0.0;
  double rho = 0.5;
  ScaledVariancePrior level_prior = ScaledVariancePrior::weak_default();
  ScaledVariancePrior slope_prior = ScaledVariancePrior::weak_default();
};

// S seasons per cycle, each lasting `duration` time steps.
struct Seasonal {
  int seasons = 2;
  int duration = 1;
  ScaledVariancePrior prior = ScaledVariancePrior::weak_default();
};

// beta' x_t with a constant unit state; coefficients carry a spike-and-slab
// prior configured in ModelSpec.
struct StaticRegression {
  Index num_covariates = 0;
};

// Random-walk coefficients, one diffusion variance per covariate.
struct DynamicRegression {
  Index num_covariates = 0;
  ScaledVariancePrior prior = ScaledVariancePrior::tight_level();
};

using ComponentSpec =
    std::variant<LocalLevel, LocalLinearTrend, SemiLocalLinearTrend, Seasonal, StaticRegression,
                 DynamicRegression>;

inline std::string component_name(const ComponentSpec& c) {
  struct {
    std::string operator()(const LocalLevel&) const { return "local_level"; }
    std::string operator()(const LocalLinearTrend&) const { return "local_linear_trend"; }
    std::string operator()(const SemiLocalLinearTrend&) const { return "semi_local_linear_trend"; }
    std::string operator()(const Seasonal&) const { return "seasonal"; }
    std::string operator()(const StaticRegression&) const { return "static_regression"; }
    std::string operator()(const DynamicRegression&) const { return "dynamic_regression"; }
  } v;
  return std::visit(v, c);
}

// Settings of the spike-and-slab prior that do not depend on the data.
struct RegressionPriorSettings {
  double expected_model_size = 3.0;
  std::vector<double> inclusion_probs;  // overrides expected_model_size when non-empty
  double g = 1.0;
  double w = 0.5;
  double nu_eps = 50.0;
  double expected_R2 = 0.8;

  SpikeSlabSpec spec_for(Index J) const {
    SpikeSlabSpec s = SpikeSlabSpec::with_expected_model_size(J, expected_model_size);
    if (!inclusion_probs.empty()) {
      if (static_cast<Index>(inclusion_probs.size()) != J)
        throw DimensionMismatch("inclusion probability list has " +
                                std::to_string(inclusion_probs.size()) + " entries, expected " +
                                std::to_string(J));
      s.pi = inclusion_probs;
    }
    s.g = g;
    s.w = w;
    s.nu_eps = nu_eps;
    s.expected_R2 = expected_R2;
    return s;
  }
};

struct ModelSpec {
  std::vector<ComponentSpec> components;
  // Prior on the observation variance when no static regression supplies one.
  ScaledVariancePrior observation_prior = ScaledVariancePrior::weak_default();
  RegressionPriorSettings regression;
};

struct ComponentDims {
  Index state = 0;
  Index noise = 0;
};

inline ComponentDims component_dims(const ComponentSpec& c) {
  struct {
    ComponentDims operator()(const LocalLevel&) const { return {1, 1}; }
    ComponentDims operator()(const LocalLinearTrend&) const { return {2, 2}; }
    ComponentDims operator()(const SemiLocalLinearTrend&) const { return {2, 2}; }
    ComponentDims operator()(const Seasonal& s) const { return {s.seasons - 1, 1}; }
    ComponentDims operator()(const StaticRegression&) const { return {1, 0}; }
    ComponentDims operator()(const DynamicRegression& r) const { return {r.num_covariates, r.num_covariates}; }
  } v;
  return std::visit(v, c);
}

// Offsets of each component's block within the stacked state and noise vectors.
struct StateLayout {
  std::vector<Index> state_offset;
  std::vector<Index> noise_offset;
  std::vector<ComponentDims> dims;
  Index state_dim = 0;
  Index noise_dim = 0;

  explicit StateLayout(const std::vector<ComponentSpec>& specs) {
    for (const auto& c : specs) {
      ComponentDims d = component_dims(c);
      state_offset.push_back(state_dim);
      noise_offset.push_back(noise_dim);
      dims.push_back(d);
      state_dim += d.state;
      noise_dim += d.noise;
    }
  }
};

// Checks the component list on its own and against the covariate count.
inline void validate_model_spec(const ModelSpec& spec, Index num_covariates) {
  if (spec.components.empty()) throw ValidationError("model has no state components");
  int regressions = 0;
  for (const auto& c : spec.components) {
    if (const auto* s = std::get_if<SemiLocalLinearTrend>(&c)) {
      if (!(std::abs(s->rho) < 1.0))
        throw ValidationError("semi-local linear trend requires |rho| < 1");
    } else if (const auto* s = std::get_if<Seasonal>(&c)) {
      if (s->seasons < 2) throw ValidationError("seasonal component requires at least 2 seasons");
      if (s->duration < 1) throw ValidationError("seasonal component requires duration >= 1");
    } else if (const auto* r = std::get_if<StaticRegression>(&c)) {
      ++regressions;
      if (r->num_covariates != num_covariates)
        throw DimensionMismatch("static regression declares " + std::to_string(r->num_covariates) +
                                " covariates, series has " + std::to_string(num_covariates));
    } else if (const auto* r = std::get_if<DynamicRegression>(&c)) {
      ++regressions;
      if (r->num_covariates != num_covariates)
        throw DimensionMismatch("dynamic regression declares " + std::to_string(r->num_covariates) +
                                " covariates, series has " + std::to_string(num_covariates));
      if (r->num_covariates == 0) throw ValidationError("dynamic regression needs covariates");
    }
  }
  if (regressions > 1)
    throw ValidationError("at most one static or dynamic regression component is allowed");
}

// ---------------------------------------------------------------------------
// Parameters and system matrices.

// One draw of the model parameters. component_variances[i] holds the q_i
// diffusion variances of component i (empty for static regression). beta has
// length J with exact zeros where rho_j = 0.
struct ParameterDraw {
  std::vector<Vector> component_variances;
  Inclusion rho;
  Vector beta;
  double sigma_eps_sq = 0.0;
};

// Matrices of y_t = Z_t' a_t + e_t, a_{t+1} = c_t + T_t a_t + R_t eta_t with
// e_t ~ N(0, sigma_obs_sq) and eta_t ~ N(0, Q_t). The intercept c_t is zero
// except for the semi-local trend slope.
struct SystemMatrices {
  Vector Z;
  Matrix T;
  Matrix R;
  Matrix Q;
  Vector c;
  double sigma_obs_sq = 0.0;
};

struct InitialStateDistribution {
  Vector mean;
  Matrix covariance;
};

// Seasonal transition block for the step that produces time t (1-based).
// Outside the first step of a season the state is carried unchanged and the
// disturbance is switched off.
struct SeasonalTransition {
  Matrix T;
  bool q_active = true;
};

inline bool starts_season(int duration, Index t) { return (t - 1) % duration == 0; }

inline SeasonalTransition seasonal_transition_at(const Seasonal& spec, Index t) {
  const Index k = spec.seasons - 1;
  SeasonalTransition out;
  if (!starts_season(spec.duration, t)) {
    out.T = Matrix::Identity(k, k);
    out.q_active = false;
    return out;
  }
  out.T = Matrix::Zero(k, k);
  out.T.row(0).setConstant(-1.0);
  for (Index i = 1; i < k; ++i) out.T(i, i - 1) = 1.0;
  return out;
}

inline double semi_local_slope_step(double delta, double D, double rho, double eta) {
  return D + rho * (delta - D) + eta;
}

namespace detail {

inline void check_params(const std::vector<ComponentSpec>& specs, const ParameterDraw& p) {
  if (p.component_variances.size() != specs.size())
    throw DimensionMismatch("parameter draw has " + std::to_string(p.component_variances.size()) +
                            " variance blocks for " + std::to_string(specs.size()) + " components");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (p.component_variances[i].size() != component_dims(specs[i]).noise)
      throw DimensionMismatch("variance block " + std::to_string(i) + " has wrong length");
  }
}

// Writes component i's transition block. `seasonal_active` selects the
// rotation for seasonal components.
inline void fill_transition(const ComponentSpec& spec, const Vector& variances, bool seasonal_active,
                            Eigen::Ref<Matrix> T, Eigen::Ref<Matrix> R, Eigen::Ref<Matrix> Q,
                            Eigen::Ref<Vector> c) {
  T.setZero();
  R.setZero();
  Q.setZero();
  c.setZero();
  if (std::holds_alternative<LocalLevel>(spec)) {
    T(0, 0) = 1.0;
    R(0, 0) = 1.0;
    Q(0, 0) = variances(0);
  } else if (std::holds_alternative<LocalLinearTrend>(spec)) {
    T << 1.0, 1.0, 0.0, 1.0;
    R.setIdentity();
    Q.diagonal() = variances;
  } else if (const auto* s = std::get_if<SemiLocalLinearTrend>(&spec)) {
    T << 1.0, 1.0, 0.0, s->rho;
    c(1) = (1.0 - s->rho) * s->D;
    R.setIdentity();
    Q.diagonal() = variances;
  } else if (const auto* s = std::get_if<Seasonal>(&spec)) {
    const Index k = s->seasons - 1;
    if (seasonal_active) {
      T.row(0).setConstant(-1.0);
      for (Index i = 1; i < k; ++i) T(i, i - 1) = 1.0;
      Q(0, 0) = variances(0);
    } else {
      T.setIdentity();
    }
    R(0, 0) = 1.0;
  } else if (std::holds_alternative<StaticRegression>(spec)) {
    T(0, 0) = 1.0;
  } else if (std::holds_alternative<DynamicRegression>(spec)) {
    T.setIdentity();
    R.setIdentity();
    Q.diagonal() = variances;
  }
}

}  // namespace detail

// System matrices at time t (1-based) for one covariate row. The transition
// returned is the one that moves the state from t to t+1.
inline SystemMatrices assemble(const std::vector<ComponentSpec>& specs,
                               const Eigen::Ref<const Vector>& x_row, const ParameterDraw& params,
                               Index t) {
  detail::check_params(specs, params);
  StateLayout layout(specs);
  SystemMatrices sm;
  const Index d = layout.state_dim, q = layout.noise_dim;
  sm.Z = Vector::Zero(d);
  sm.T = Matrix::Zero(d, d);
  sm.R = Matrix::Zero(d, q);
  sm.Q = Matrix::Zero(q, q);
  sm.c = Vector::Zero(d);
  sm.sigma_obs_sq = params.sigma_eps_sq;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Index so = layout.state_offset[i], no = layout.noise_offset[i];
    const Index di = layout.dims[i].state, qi = layout.dims[i].noise;
    bool active = true;
    if (const auto* s = std::get_if<Seasonal>(&specs[i])) active = starts_season(s->duration, t + 1);
    detail::fill_transition(specs[i], params.component_variances[i], active,
                            sm.T.block(so, so, di, di), sm.R.block(so, no, di, qi),
                            sm.Q.block(no, no, qi, qi), sm.c.segment(so, di));
    const auto& spec = specs[i];
    if (std::holds_alternative<StaticRegression>(spec)) {
      if (x_row.size() != params.beta.size())
        throw DimensionMismatch("covariate row has " + std::to_string(x_row.size()) +
                                " entries, coefficients have " + std::to_string(params.beta.size()));
      sm.Z(so) = params.beta.dot(x_row);
    } else if (const auto* r = std::get_if<DynamicRegression>(&spec)) {
      if (x_row.size() != r->num_covariates)
        throw DimensionMismatch("covariate row has " + std::to_string(x_row.size()) +
                                " entries, dynamic regression expects " +
                                std::to_string(r->num_covariates));
      sm.Z.segment(so, di) = x_row;
    } else {
      sm.Z(so) = 1.0;
    }
  }
  return sm;
}

// Per-step system matrices over a whole series, stored compactly: the
// observation vectors column by column and the (few) distinct transitions
// once each.
class StateSpaceModel {
 public:
  struct Transition {
    Matrix T;
    Matrix R;
    Vector q_diag;
    Vector c;
    Matrix RQR;  // R Q R'
    Matrix noise_factor;  // R * sqrt(Q); columns with zero variance dropped
  };

  StateSpaceModel() = default;

  static StateSpaceModel from_steps(const std::vector<SystemMatrices>& steps) {
    StateSpaceModel m;
    if (steps.empty()) return m;
    m.d_ = steps.front().Z.size();
    m.z_.resize(m.d_, static_cast<Index>(steps.size()));
    m.obs_var_.resize(static_cast<Index>(steps.size()));
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto& s = steps[t];
      if (s.Z.size() != m.d_ || s.T.rows() != m.d_ || s.T.cols() != m.d_ || s.R.rows() != m.d_ ||
          s.Q.rows() != s.R.cols() || s.c.size() != m.d_)
        throw DimensionMismatch("inconsistent system matrix shapes at step " + std::to_string(t));
      m.z_.col(static_cast<Index>(t)) = s.Z;
      m.obs_var_(static_cast<Index>(t)) = s.sigma_obs_sq;
      m.index_.push_back(static_cast<std::uint32_t>(m.transitions_.size()));
      m.transitions_.push_back(make_transition(s.T, s.R, s.Q.diagonal(), s.c));
    }
    return m;
  }

  // Model for the first `length` rows of `x` under the given components and
  // parameters.
  static StateSpaceModel build(const std::vector<ComponentSpec>& specs, const Matrix& x,
                               const ParameterDraw& params, Index length) {
    detail::check_params(specs, params);
    StateLayout layout(specs);
    StateSpaceModel m;
    m.d_ = layout.state_dim;
    const Index d = layout.state_dim, q = layout.noise_dim;
    m.z_ = Matrix::Zero(d, length);
    m.obs_var_ = Vector::Constant(length, params.sigma_eps_sq);

    for (std::size_t i = 0; i < specs.size(); ++i) {
      const Index so = layout.state_offset[i], di = layout.dims[i].state;
      if (std::holds_alternative<StaticRegression>(specs[i])) {
        if (x.cols() != params.beta.size())
          throw DimensionMismatch("covariates have " + std::to_string(x.cols()) +
                                  " columns, coefficients have " + std::to_string(params.beta.size()));
        m.z_.row(so) = (x.topRows(length) * params.beta).transpose();
      } else if (std::holds_alternative<DynamicRegression>(specs[i])) {
        if (x.cols() != di)
          throw DimensionMismatch("covariates have " + std::to_string(x.cols()) +
                                  " columns, dynamic regression expects " + std::to_string(di));
        m.z_.middleRows(so, di) = x.topRows(length).transpose();
      } else {
        m.z_.row(so).setConstant(1.0);
      }
    }

    // Distinct transitions keyed by which seasonal components rotate.
    std::map<std::uint64_t, std::uint32_t> seen;
    m.index_.resize(static_cast<std::size_t>(length));
    for (Index t = 0; t < length; ++t) {
      std::uint64_t mask = 0;
      int bit = 0;
      for (const auto& c : specs) {
        if (const auto* s = std::get_if<Seasonal>(&c)) {
          // 0-based step t moves 1-based time t+1 to t+2.
          if (starts_season(s->duration, t + 2)) mask |= (std::uint64_t{1} << bit);
          ++bit;
        }
      }
      auto it = seen.find(mask);
      if (it == seen.end()) {
        Matrix T = Matrix::Zero(d, d), R = Matrix::Zero(d, q), Q = Matrix::Zero(q, q);
        Vector c = Vector::Zero(d);
        int b = 0;
        for (std::size_t i = 0; i < specs.size(); ++i) {
          const Index so = layout.state_offset[i], no = layout.noise_offset[i];
          const Index di = layout.dims[i].state, qi = layout.dims[i].noise;
          bool active = true;
          if (std::holds_alternative<Seasonal>(specs[i])) active = (mask >> b++) & 1U;
          detail::fill_transition(specs[i], params.component_variances[i], active,
                                  T.block(so, so, di, di), R.block(so, no, di, qi),
                                  Q.block(no, no, qi, qi), c.segment(so, di));
        }
        it = seen.emplace(mask, static_cast<std::uint32_t>(m.transitions_.size())).first;
        m.transitions_.push_back(make_transition(T, R, Q.diagonal(), c));
      }
      m.index_[static_cast<std::size_t>(t)] = it->second;
    }
    return m;
  }

  Index size() const { return z_.cols(); }
  Index state_dim() const { return d_; }

  auto Z(Index t) const { return z_.col(t); }
  double obs_var(Index t) const { return obs_var_(t); }
  const Transition& transition(Index t) const { return transitions_[index_[static_cast<std::size_t>(t)]]; }

  SystemMatrices step(Index t) const {
    const auto& tr = transition(t);
    return {z_.col(t), tr.T, tr.R, Matrix(tr.q_diag.asDiagonal()), tr.c, obs_var_(t)};
  }

 private:
  static Transition make_transition(const Matrix& T, const Matrix& R, const Vector& q_diag,
                                    const Vector& c) {
    Transition tr{T, R, q_diag, c, R * q_diag.asDiagonal() * R.transpose(), {}};
    std::vector<Index> cols;
    for (Index k = 0; k < q_diag.size(); ++k)
      if (q_diag(k) > 0.0) cols.push_back(k);
    tr.noise_factor.resize(R.rows(), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k)
      tr.noise_factor.col(static_cast<Index>(k)) = R.col(cols[k]) * std::sqrt(q_diag(cols[k]));
    return tr;
  }

  Index d_ = 0;
  Matrix z_;
  Vector obs_var_;
  std::vector<Transition> transitions_;
  std::vector<std::uint32_t> index_;
};

// Vague Gaussian prior on the first state: the first trend component's level
// is centred at the first observed value, every other diffuse dimension at 0,
// all with variance s_y^2. The static-regression unit state is fixed at 1.
inline InitialStateDistribution initial_state_distribution(const std::vector<ComponentSpec>& specs,
                                                           const SampleMoments& moments,
                                                           double y_first) {
  StateLayout layout(specs);
  InitialStateDistribution init;
  init.mean = Vector::Zero(layout.state_dim);
  init.covariance = Matrix::Zero(layout.state_dim, layout.state_dim);
  bool level_done = false;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Index so = layout.state_offset[i], di = layout.dims[i].state;
    if (std::holds_alternative<StaticRegression>(specs[i])) {
      init.mean(so) = 1.0;
      continue;
    }
    for (Index k = 0; k < di; ++k) init.covariance(so + k, so + k) = moments.s_y_sq;
    const bool has_level = std::holds_alternative<LocalLevel>(specs[i]) ||
                           std::holds_alternative<LocalLinearTrend>(specs[i]) ||
                           std::holds_alternative<SemiLocalLinearTrend>(specs[i]);
    if (has_level && !level_done) {
      init.mean(so) = y_first;
      level_done = true;
    }
  }
  return init;
}

}  // namespace causal_bsts
