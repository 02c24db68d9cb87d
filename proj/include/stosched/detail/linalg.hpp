#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>

namespace stosched::detail {

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

inline bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

// Eigenvalues of the symmetric part, ascending.
inline Eigen::VectorXd sym_eigenvalues(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  return sym_eigenvalues(m).minCoeff();
}

inline bool is_positive_definite(const Eigen::MatrixXd& m) {
  return is_symmetric(m) && m.rows() > 0 && min_eigenvalue(m) > 0.0;
}

// min eigenvalue >= -rel_tol * max(|max eigenvalue|, 1e-300)
inline bool is_psd(const Eigen::MatrixXd& m, double rel_tol = 1e-9) {
  if (!is_symmetric(m)) return false;
  const Eigen::VectorXd ev = sym_eigenvalues(m);
  const double top = std::max(std::abs(ev.maxCoeff()), 1e-300);
  return ev.minCoeff() >= -rel_tol * top;
}

// Symmetric square root with negative eigenvalues clamped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

inline double spectral_radius(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues().cwiseAbs().maxCoeff();
}

// Numerical rank with singular values compared against rel_tol * sigma_max.
inline Eigen::Index numerical_rank(const Eigen::MatrixXcd& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  const Eigen::VectorXd sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * sv(0)) ++r;
  return r;
}

}  // namespace stosched::detail
