#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

namespace causal_bsts {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool is_missing(double v) { return std::isnan(v); }

// Error types. Every failure the library reports derives from Error so the
// CLI can map categories onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct DegenerateInput : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};

inline void symmetrize(Matrix& m) {
  m = 0.5 * (m + m.transpose()).eval();
}

// Log-determinant of a symmetric positive definite matrix via Cholesky.
// Empty matrices have log-determinant 0.
inline double spd_logdet(const Eigen::LLT<Matrix>& llt) {
  const auto& l = llt.matrixLLT();
  double sum = 0.0;
  for (Index i = 0; i < l.rows(); ++i) sum += std::log(l(i, i));
  return 2.0 * sum;
}

inline Eigen::LLT<Matrix> checked_cholesky(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (m.size() > 0 && llt.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + ": matrix is not positive definite");
  }
  return llt;
}

// Square-root factor S with S*S^T = m for a PSD matrix. Diagonal inputs take
// the fast path; anything else goes through an eigendecomposition with
// negative eigenvalues clipped to zero.
inline Matrix psd_factor(const Matrix& m) {
  const Index d = m.rows();
  bool diagonal = true;
  for (Index j = 0; j < d && diagonal; ++j)
    for (Index i = 0; i < d; ++i)
      if (i != j && m(i, j) != 0.0) {
        diagonal = false;
        break;
      }
  if (diagonal) {
    Matrix s = Matrix::Zero(d, d);
    for (Index i = 0; i < d; ++i) s(i, i) = std::sqrt(std::max(0.0, m(i, i)));
    return s;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

}  // namespace causal_bsts
