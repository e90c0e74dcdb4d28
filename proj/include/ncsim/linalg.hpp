#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "ncsim/error.hpp"

namespace ncsim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix scalar_matrix(double v) { return Matrix::Constant(1, 1, v); }
inline Vector scalar_vector(double v) { return Vector::Constant(1, v); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline bool is_square(const Matrix& m) { return m.rows() == m.cols(); }

inline bool is_symmetric(const Matrix& m, double tol = 1e-10) {
  if (!is_square(m)) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

// Smallest eigenvalue of the symmetric part of m.
inline double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline bool is_psd(const Matrix& m, double tol = 1e-12) {
  return is_symmetric(m) && min_eigenvalue(m) >= -tol;
}

inline bool is_pd(const Matrix& m) {
  if (!is_symmetric(m)) return false;
  Eigen::LLT<Matrix> llt(symmetrize(m));
  return llt.info() == Eigen::Success && min_eigenvalue(m) > 0.0;
}

// Symmetric square root R^{1/2} of a PSD matrix; eigenvalues down to -1e-12
// are clipped to zero, anything more negative is rejected.
inline Matrix psd_sqrt(const Matrix& cov) {
  if (!is_symmetric(cov)) throw ConfigError("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(cov));
  Vector ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-12) throw ConfigError("covariance is not positive semi-definite");
    ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace ncsim
