#pragma once

#include <Eigen/Cholesky>

#include "kernelcf/types.hpp"

namespace kcf {

// Deterministic parallel kernels. Work is cut on a fixed tile grid that does
// not depend on the thread count, each tile is computed by sequential Eigen,
// and tiles write disjoint outputs, so results are byte-identical for any
// worker-pool size.

inline constexpr Eigen::Index kColTile = 512;

// C = A * B, tiled over columns of B.
Matrix par_gemm(const Matrix& a, const Matrix& b);

// C = A^T * B, tiled over columns of B.
Matrix par_gemm_at_b(const Matrix& a, const Matrix& b);

// Row-normalize in place; returns the original L2 norms (0 rows stay 0).
Vector row_normalize(Matrix& m);

// Symmetric positive-definite solver with jitter escalation. Factors
// base + (ridge + jitter) I, where jitter starts at 0 and escalates through
// jitter_base * {1, 10, 100} when the Cholesky factorization fails. Throws
// NumericalError after the retries are exhausted.
class SpdSolver {
 public:
  SpdSolver(const Matrix& base, double ridge, double jitter_base);

  double ridge_used() const { return ridge_; }
  double jitter_used() const { return jitter_; }

  // X = A^{-1} B, B overwritten; column tiles solved independently.
  void solve_in_place(Matrix& b) const;
  Matrix solve(Matrix b) const { solve_in_place(b); return b; }
  Vector solve(const Vector& b) const;

 private:
  Eigen::LLT<Matrix> llt_;
  double ridge_ = 0;
  double jitter_ = 0;
};

}  // namespace kcf
