#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

#include "kernelcf/dataset.hpp"
#include "kernelcf/types.hpp"

namespace kcf {

enum class Activation { relu };

struct KernelConfig {
  int depth = 1;  // number of hidden layers in the equivalent network
  Activation activation = Activation::relu;
};

// Dual activation of ReLU and its derivatives for unit-norm inputs.
// All take the cosine similarity and guard it into [-1, 1].
inline double clamp_rho(double rho) { return rho < -1.0 ? -1.0 : (rho > 1.0 ? 1.0 : rho); }

inline double relu_dual(double rho) {
  rho = clamp_rho(rho);
  return (std::sqrt(1.0 - rho * rho) + rho * (std::numbers::pi - std::acos(rho))) /
         std::numbers::pi;
}

inline double relu_dual_derivative(double rho) {
  rho = clamp_rho(rho);
  return (std::numbers::pi - std::acos(rho)) / std::numbers::pi;
}

// d/drho of relu_dual_derivative; unbounded at |rho| -> 1, callers mask
// clamped entries so 0 is returned there instead of inf.
inline double relu_dual_second(double rho) {
  rho = clamp_rho(rho);
  double t = 1.0 - rho * rho;
  return t > 0.0 ? 1.0 / (std::numbers::pi * std::sqrt(t)) : 0.0;
}

// Tangent-kernel value for one cosine similarity. depth 1 reduces exactly to
// relu_dual(rho) + rho * relu_dual_derivative(rho); deeper networks stack the
// layer recursion sigma_l = dual(sigma_{l-1}),
// theta_l = sigma_l + theta_{l-1} * dual'(sigma_{l-1}).
double ntk_scalar(double rho, int depth);

// Same value plus d(theta_depth)/d(rho), for differentiating through the
// kernel. The derivative is reported as 0 when |rho| sits on the clamp
// boundary (exact subgradient of the guard).
double ntk_scalar_grad(double rho, int depth, double* deriv);

// Kernel between two sparse binary rows over a shared item universe.
// Rows are L2-normalized; an empty row has cosine 0 against everything.
double ntk_pair(std::span<const std::uint32_t> x, std::span<const std::uint32_t> y,
                const KernelConfig& cfg);

// Dense row-normalized image of a dataset, laid out so that item columns are
// contiguous: basis.cols is |users| x |items| column-major with row v scaled
// by 1/||x_v||. Reused across gramian and per-query kernel rows.
struct KernelBasis {
  Matrix cols;
  std::vector<double> inv_norm;  // 0 for empty rows
  const InteractionDataset* source = nullptr;
};

KernelBasis make_kernel_basis(const InteractionDataset& ds);

// Kernel values between one query row and every basis row.
Vector kernel_row(std::span<const std::uint32_t> items, const KernelBasis& basis,
                  const KernelConfig& cfg);

struct Gramian {
  Matrix matrix;  // |A| x |B| kernel values
  const InteractionDataset* row_basis = nullptr;
  const InteractionDataset* col_basis = nullptr;
};

// All pairwise kernel values. Requires a shared item universe. When a and b
// are the same object the result is made exactly symmetric by mirroring the
// upper triangle.
Gramian gramian(const InteractionDataset& a, const InteractionDataset& b,
                const KernelConfig& cfg);

// Same, reusing a prebuilt basis for the column side.
Matrix gramian_against_basis(const InteractionDataset& a, const KernelBasis& basis,
                             const KernelConfig& cfg);

// Dense-input path used by distillation: rows may be real-valued. Returns
// kappa(clamp(rho)) for rho = row_normalize(a) * row_normalize(b)^T, and
// optionally d(kappa)/d(rho) with the clamp subgradient applied (0 where the
// raw value left the open interval).
Matrix gramian_dense(const Matrix& a, const Matrix& b, const KernelConfig& cfg,
                     Matrix* dkernel_drho = nullptr);

}  // namespace kcf
