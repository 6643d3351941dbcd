#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <random>

#include "kernelcf/kernel.hpp"
#include "support.hpp"

using namespace kcf;

TEST_SUITE("kernel") {

TEST_CASE("dual activation closed-form anchor points") {
  const double pi = std::numbers::pi;
  CHECK(relu_dual(0.0) == doctest::Approx(1.0 / pi).epsilon(1e-15));
  CHECK(relu_dual(1.0) == 1.0);   // pi/pi exactly
  CHECK(relu_dual(-1.0) == 0.0);
  CHECK(relu_dual(0.5) == doctest::Approx(0.608997781044229).epsilon(1e-12));

  CHECK(relu_dual_derivative(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(relu_dual_derivative(1.0) == 1.0);
  CHECK(relu_dual_derivative(-1.0) == 0.0);
  CHECK(relu_dual_derivative(0.5) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  CHECK(relu_dual_second(0.0) == doctest::Approx(1.0 / pi).epsilon(1e-15));
  CHECK(relu_dual_second(1.0) == 0.0);  // masked at the boundary

  // out-of-range cosines are guarded into [-1, 1]
  CHECK(relu_dual(1.5) == relu_dual(1.0));
  CHECK(relu_dual(-1.5) == relu_dual(-1.0));
}

TEST_CASE("tangent kernel frozen values") {
  CHECK(ntk_scalar(0.5, 1) == doctest::Approx(0.942331114377563).epsilon(1e-12));
  CHECK(ntk_scalar(0.0, 1) ==
        doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-15));
  // rho=1: every layer has dual value and slope 1, so theta grows by 1
  for (int d = 1; d <= 4; ++d) CHECK(ntk_scalar(1.0, d) == double(d + 1));
  CHECK_THROWS_AS(ntk_scalar(0.5, 0), ConfigError);
}

TEST_CASE("depth-1 recursion equals the direct formula bitwise") {
  std::mt19937 gen(17);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    double rho = U(gen);
    double direct = relu_dual(rho) + rho * relu_dual_derivative(rho);
    CHECK(ntk_scalar(rho, 1) == direct);  // bitwise
  }
}

TEST_CASE("kernel derivative matches central differences away from the clamp") {
  std::mt19937 gen(23);
  std::uniform_real_distribution<double> U(-0.95, 0.95);
  for (int depth : {1, 2, 3}) {
    for (int t = 0; t < 200; ++t) {
      double rho = U(gen);
      double d = 0;
      double v = ntk_scalar_grad(rho, depth, &d);
      CHECK(v == ntk_scalar(rho, depth));
      const double h = 1e-6;
      double fd = (ntk_scalar(rho + h, depth) - ntk_scalar(rho - h, depth)) / (2 * h);
      CHECK(d == doctest::Approx(fd).epsilon(1e-5));
    }
  }
  double d = 1;
  ntk_scalar_grad(1.0, 2, &d);
  CHECK(d == 0.0);  // clamp boundary reports the guard subgradient
  ntk_scalar_grad(-1.0, 2, &d);
  CHECK(d == 0.0);
  ntk_scalar_grad(1.0 + 1e-9, 1, &d);
  CHECK(d == 0.0);
}

TEST_CASE("two disjoint singleton users give the textbook 2x2 gramian") {
  auto ds = testsup::from_rows({{0}, {1}}, 2);
  auto g = gramian(ds, ds, {});
  REQUIRE(g.matrix.rows() == 2);
  CHECK(g.matrix(0, 0) == 2.0);  // kappa(1) at depth 1, exactly
  CHECK(g.matrix(1, 1) == 2.0);
  CHECK(g.matrix(0, 1) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-15));
  CHECK(g.matrix(0, 1) == g.matrix(1, 0));
}

TEST_CASE("gramian is exactly symmetric and PSD on random 50x50 inputs") {
  auto ds = testsup::blocks(50, 120, 15, 29);
  auto g = gramian(ds, ds, {});
  for (Eigen::Index i = 0; i < 50; ++i) {
    CHECK(std::abs(g.matrix(i, i) - 2.0) < 1e-7);  // self-cosine rounds near 1
    for (Eigen::Index j = 0; j < i; ++j)
      CHECK(g.matrix(i, j) == g.matrix(j, i));  // bitwise
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g.matrix);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("pairwise kernel agrees with the gramian bit for bit") {
  auto ds = testsup::blocks(20, 40, 8, 31);
  auto g = gramian(ds, ds, {});
  for (std::size_t u = 0; u < 20; ++u)
    for (std::size_t v = u; v < 20; ++v)
      CHECK(ntk_pair(ds.row(u), ds.row(v), {}) ==
            g.matrix(Eigen::Index(u), Eigen::Index(v)));
}

TEST_CASE("empty rows fall back to cosine zero") {
  auto ds = testsup::from_rows({{}, {0, 1}}, 4);
  auto g = gramian(ds, ds, {});
  const double k0 = ntk_scalar(0.0, 1);
  CHECK(g.matrix(0, 0) == k0);
  CHECK(g.matrix(0, 1) == k0);
  CHECK(ntk_pair(ds.row(0), ds.row(1), {}) == k0);
}

TEST_CASE("dense path reproduces the sparse gramian on binary inputs") {
  auto ds = testsup::blocks(15, 30, 6, 37);
  for (int depth : {1, 3}) {
    KernelConfig cfg;
    cfg.depth = depth;
    auto g = gramian(ds, ds, cfg);
    Matrix x = to_dense(ds);
    Matrix k = gramian_dense(x, x, cfg);
    // agreement is sqrt(eps)-limited: acos'(rho) blows up as rho -> 1 on the
    // diagonal, amplifying the paths' different rounding of rho ~ 1 - O(eps)
    CHECK((k - g.matrix).cwiseAbs().maxCoeff() < 2e-7);

    Matrix dk;
    Matrix k2 = gramian_dense(x, x, cfg, &dk);
    CHECK((k2.array() == k.array()).all());  // derivative request keeps values
    CHECK(dk.rows() == 15);
    CHECK(dk.allFinite());  // the clamp mask keeps the second dual bounded
  }
}

TEST_CASE("mismatched item universes are rejected") {
  auto a = testsup::from_rows({{0}}, 3);
  auto b = testsup::from_rows({{0}}, 4);
  CHECK_THROWS_AS(gramian(a, b, {}), ConfigError);
}

}  // TEST_SUITE
