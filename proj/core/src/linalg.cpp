#include "kernelcf/linalg.hpp"

#include <string>

namespace kcf {

Matrix par_gemm(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ConfigError("par_gemm: inner dimensions disagree");
  Matrix c(a.rows(), b.cols());
  Eigen::Index tiles = (b.cols() + kColTile - 1) / kColTile;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index t = 0; t < tiles; ++t) {
    Eigen::Index o = t * kColTile;
    Eigen::Index w = std::min(kColTile, b.cols() - o);
    c.middleCols(o, w).noalias() = a * b.middleCols(o, w);
  }
  return c;
}

Matrix par_gemm_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw ConfigError("par_gemm_at_b: inner dimensions disagree");
  Matrix c(a.cols(), b.cols());
  Eigen::Index tiles = (b.cols() + kColTile - 1) / kColTile;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index t = 0; t < tiles; ++t) {
    Eigen::Index o = t * kColTile;
    Eigen::Index w = std::min(kColTile, b.cols() - o);
    c.middleCols(o, w).noalias() = a.transpose() * b.middleCols(o, w);
  }
  return c;
}

Vector row_normalize(Matrix& m) {
  Vector norms(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double n = m.row(r).norm();
    norms[r] = n;
    if (n > 0) m.row(r) /= n;
  }
  return norms;
}

SpdSolver::SpdSolver(const Matrix& base, double ridge, double jitter_base)
    : ridge_(ridge) {
  if (base.rows() != base.cols())
    throw ConfigError("SpdSolver needs a square matrix");
  double jitter = 0;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Matrix a = base;
    a.diagonal().array() += ridge + jitter;
    llt_.compute(a);
    if (llt_.info() == Eigen::Success) {
      jitter_ = jitter;
      return;
    }
    jitter = (attempt == 0) ? jitter_base : jitter * 10.0;
  }
  throw NumericalError(
      "Cholesky factorization failed for a " + std::to_string(base.rows()) + "x" +
      std::to_string(base.cols()) + " system (ridge " + std::to_string(ridge) +
      ", jitter up to " + std::to_string(jitter / 10.0) + ")");
}

void SpdSolver::solve_in_place(Matrix& b) const {
  Eigen::Index tiles = (b.cols() + kColTile - 1) / kColTile;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index t = 0; t < tiles; ++t) {
    Eigen::Index o = t * kColTile;
    Eigen::Index w = std::min(kColTile, b.cols() - o);
    auto blk = b.middleCols(o, w);
    llt_.matrixL().solveInPlace(blk);
    llt_.matrixU().solveInPlace(blk);
  }
}

Vector SpdSolver::solve(const Vector& b) const {
  Vector x = b;
  llt_.matrixL().solveInPlace(x);
  llt_.matrixU().solveInPlace(x);
  return x;
}

}  // namespace kcf
