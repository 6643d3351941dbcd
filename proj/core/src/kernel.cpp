#include "kernelcf/kernel.hpp"

#include <algorithm>

#include "kernelcf/linalg.hpp"

namespace kcf {

double ntk_scalar(double rho, int depth) {
  if (depth < 1) throw ConfigError("kernel depth must be >= 1");
  rho = clamp_rho(rho);
  double sigma = rho;
  double theta = rho;
  for (int l = 0; l < depth; ++l) {
    double sp = relu_dual_derivative(sigma);
    double s1 = relu_dual(sigma);
    theta = s1 + theta * sp;
    sigma = s1;
  }
  return theta;
}

double ntk_scalar_grad(double rho, int depth, double* deriv) {
  if (depth < 1) throw ConfigError("kernel depth must be >= 1");
  double rc = clamp_rho(rho);
  bool clamped = rho <= -1.0 || rho >= 1.0;
  double sigma = rc, dsigma = 1.0;
  double theta = rc, dtheta = 1.0;
  for (int l = 0; l < depth; ++l) {
    double sp = relu_dual_derivative(sigma);
    double s1 = relu_dual(sigma);
    double s2 = relu_dual_second(sigma);
    double theta_new = s1 + theta * sp;
    double dtheta_new = sp * dsigma + dtheta * sp + theta * s2 * dsigma;
    theta = theta_new;
    dtheta = dtheta_new;
    dsigma = sp * dsigma;
    sigma = s1;
  }
  if (deriv) *deriv = clamped ? 0.0 : dtheta;
  return theta;
}

double ntk_pair(std::span<const std::uint32_t> x, std::span<const std::uint32_t> y,
                const KernelConfig& cfg) {
  double rho = 0.0;
  if (!x.empty() && !y.empty()) {
    // same accumulation order as the gramian row kernel, so the two agree
    // bit for bit: walk x ascending, add 1/||y|| on membership, scale by 1/||x||
    double inv_ry = 1.0 / std::sqrt(static_cast<double>(y.size()));
    double acc = 0.0;
    for (auto i : x)
      if (std::binary_search(y.begin(), y.end(), i)) acc += inv_ry;
    rho = acc / std::sqrt(static_cast<double>(x.size()));
  }
  return ntk_scalar(clamp_rho(rho), cfg.depth);
}

KernelBasis make_kernel_basis(const InteractionDataset& ds) {
  KernelBasis basis;
  basis.source = &ds;
  basis.inv_norm.resize(ds.num_users());
  basis.cols = Matrix::Zero(ds.num_users(), ds.num_items());
  for (std::size_t v = 0; v < ds.num_users(); ++v) {
    auto deg = ds.rows[v].size();
    double inv = deg ? 1.0 / std::sqrt(static_cast<double>(deg)) : 0.0;
    basis.inv_norm[v] = inv;
    for (auto i : ds.rows[v]) basis.cols(static_cast<Eigen::Index>(v), i) = inv;
  }
  return basis;
}

Vector kernel_row(std::span<const std::uint32_t> items, const KernelBasis& basis,
                  const KernelConfig& cfg) {
  const auto n = basis.cols.rows();
  Vector acc = Vector::Zero(n);
  if (!items.empty()) {
    for (auto i : items) {
      if (static_cast<Eigen::Index>(i) >= basis.cols.cols())
        throw ConfigError("query item index out of range for kernel basis");
      acc += basis.cols.col(i);
    }
    acc /= std::sqrt(static_cast<double>(items.size()));
  }
  for (Eigen::Index v = 0; v < n; ++v) acc[v] = ntk_scalar(clamp_rho(acc[v]), cfg.depth);
  return acc;
}

Matrix gramian_against_basis(const InteractionDataset& a, const KernelBasis& basis,
                             const KernelConfig& cfg) {
  if (a.num_items() != static_cast<std::size_t>(basis.cols.cols()))
    throw ConfigError("gramian operands live in different item universes");
  Matrix k(a.num_users(), basis.cols.rows());
  const auto n_rows = static_cast<Eigen::Index>(a.num_users());
#pragma omp parallel for schedule(dynamic, 16)
  for (Eigen::Index u = 0; u < n_rows; ++u) {
    Vector row = kernel_row(a.row(static_cast<std::size_t>(u)), basis, cfg);
    k.row(u) = row.transpose();
  }
  return k;
}

Gramian gramian(const InteractionDataset& a, const InteractionDataset& b,
                const KernelConfig& cfg) {
  if (a.num_items() != b.num_items() || a.item_ids != b.item_ids)
    throw ConfigError("gramian operands live in different item universes");
  Gramian g;
  g.row_basis = &a;
  g.col_basis = &b;
  KernelBasis basis = make_kernel_basis(b);
  g.matrix = gramian_against_basis(a, basis, cfg);
  if (&a == &b) {
    // exact symmetry: mirror the upper triangle into the lower
    for (Eigen::Index u = 0; u < g.matrix.rows(); ++u)
      for (Eigen::Index v = 0; v < u; ++v) g.matrix(u, v) = g.matrix(v, u);
  }
  return g;
}

Matrix gramian_dense(const Matrix& a, const Matrix& b, const KernelConfig& cfg,
                     Matrix* dkernel_drho) {
  if (a.cols() != b.cols())
    throw ConfigError("gramian operands live in different item universes");
  Matrix an = a, bn = b;
  row_normalize(an);
  row_normalize(bn);
  Matrix k = par_gemm(an, Matrix(bn.transpose()));
  if (dkernel_drho) dkernel_drho->resize(k.rows(), k.cols());
  for (Eigen::Index c = 0; c < k.cols(); ++c) {
    for (Eigen::Index r = 0; r < k.rows(); ++r) {
      double rho = k(r, c);
      if (dkernel_drho) {
        double d = 0;
        k(r, c) = ntk_scalar_grad(rho, cfg.depth, &d);
        (*dkernel_drho)(r, c) = d;
      } else {
        k(r, c) = ntk_scalar(clamp_rho(rho), cfg.depth);
      }
    }
  }
  return k;
}

}  // namespace kcf
