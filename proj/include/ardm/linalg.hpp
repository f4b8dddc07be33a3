#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>

#include "ardm/error.hpp"

namespace ardm {

using Vector = Eigen::VectorXd;
/// Column-major; batches store one sample per column.
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require_dim(std::ptrdiff_t actual, std::ptrdiff_t expected, const char* what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                     ", got " + std::to_string(actual));
  }
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

/// Lower Cholesky factor; throws ConfigError when the matrix is not positive definite.
inline Matrix cholesky_lower(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw ConfigError(std::string(what) + " is not symmetric positive definite");
  }
  return llt.matrixL();
}

/// Largest eigenvalue modulus.
inline double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(m, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace ardm
