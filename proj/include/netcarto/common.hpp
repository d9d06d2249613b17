#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace netcarto {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

using Rng = std::mt19937_64;

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                              double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

inline Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                             double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

// Spectral-norm upper-bound estimate of a symmetric PSD matrix via power
// iteration (50 rounds, 1.05 safety factor).
inline double power_iteration_sym(const Matrix& s, int iters = 50) {
  if (s.rows() == 0) return 0.0;
  Vector v = Vector::Ones(s.rows());
  v.normalize();
  double lam = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vector w = s * v;
    lam = w.norm();
    if (lam <= 0.0) return 0.0;
    v = w / lam;
  }
  return 1.05 * lam;
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace netcarto
