#include <benchmark/benchmark.h>

#include <string>
#include <utility>
#include <vector>

#include "kernelcf/dataset.hpp"
#include "kernelcf/distill.hpp"
#include "kernelcf/infae.hpp"
#include "kernelcf/kernel.hpp"
#include "kernelcf/linalg.hpp"
#include "kernelcf/rng.hpp"

using namespace kcf;

namespace {

InteractionDataset random_dataset(std::size_t n_users, std::size_t n_items,
                                  std::size_t per_user, std::uint64_t seed) {
  std::vector<std::string> users, items;
  for (std::size_t u = 0; u < n_users; ++u) users.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < n_items; ++i) items.push_back("i" + std::to_string(i));
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;
  RngStream rng(seed, "bench-data");
  for (std::uint32_t u = 0; u < n_users; ++u)
    for (std::size_t t = 0; t < per_user; ++t)
      entries.emplace_back(u, static_cast<std::uint32_t>(rng.next_below(n_items)));
  return dataset_from_entries(std::move(users), std::move(items), entries);
}

}  // namespace

static void BM_KernelScalar(benchmark::State& state) {
  int depth = static_cast<int>(state.range(0));
  RngStream rng(1, "rho");
  std::vector<double> rhos(4096);
  for (auto& r : rhos) r = 2.0 * rng.next_double() - 1.0;
  for (auto _ : state) {
    double acc = 0;
    for (double r : rhos) acc += ntk_scalar(r, depth);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rhos.size()));
}
BENCHMARK(BM_KernelScalar)->Arg(1)->Arg(2)->Arg(4);

static void BM_GramianSparse(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  auto ds = random_dataset(n, 2000, 60, 2);
  for (auto _ : state) {
    Gramian g = gramian(ds, ds, {});
    benchmark::DoNotOptimize(g.matrix.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_GramianSparse)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_GramianDense(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  RngStream rng(3, "dense");
  Matrix a(static_cast<Eigen::Index>(n), 512);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.next_double();
  for (auto _ : state) {
    Matrix k = gramian_dense(a, a, {});
    benchmark::DoNotOptimize(k.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_GramianDense)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_RidgeSolve(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  auto ds = random_dataset(n, 2000, 60, 4);
  Matrix k = train_gramian(ds, {});
  Matrix x = to_dense(ds);
  for (auto _ : state) {
    SpdSolver solver(k, 5.0, 1e-10);
    Matrix alpha = solver.solve(x);
    benchmark::DoNotOptimize(alpha.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n / 3));
}
BENCHMARK(BM_RidgeSolve)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_ParGemm(benchmark::State& state) {
  auto n = static_cast<Eigen::Index>(state.range(0));
  RngStream rng(5, "gemm");
  Matrix a(n, n), b(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      a(i, j) = rng.next_double();
      b(i, j) = rng.next_double();
    }
  for (auto _ : state) {
    Matrix c = par_gemm(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(BM_ParGemm)->Arg(256)->Arg(768)->Unit(benchmark::kMillisecond);

static void BM_RelaxedSummary(benchmark::State& state) {
  int gamma = static_cast<int>(state.range(0));
  SupportPrior prior;
  for (int i = 0; i < 512; ++i) prior.item_ids.push_back("i" + std::to_string(i));
  prior.logits.resize(64, 512);
  RngStream rng(6, "prior");
  for (Eigen::Index u = 0; u < 64; ++u)
    for (Eigen::Index j = 0; j < 512; ++j)
      prior.logits(u, j) = 2.0 * rng.next_double() - 1.0;
  std::uint64_t idx = 0;
  for (auto _ : state) {
    RelaxedSample s = gumbel_relaxed_summary(prior, 0.5, gamma, 7, ++idx);
    benchmark::DoNotOptimize(s.raw_sum.data());
  }
  state.SetItemsProcessed(state.iterations() * 64 * 512 * gamma);
}
BENCHMARK(BM_RelaxedSummary)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

static void BM_DistillStep(benchmark::State& state) {
  auto ds = random_dataset(256, 512, 30, 8);
  DistillConfig cfg;
  cfg.mu = 32;
  cfg.gamma = 10;
  cfg.seed = 9;
  SupportPrior prior = init_prior(ds, cfg);
  Matrix batch = to_dense(ds).topRows(128);
  std::uint64_t idx = 0;
  for (auto _ : state) {
    DistillStep step = distill_loss_grad(prior, batch, cfg, 1.0, 1e-4, ++idx);
    benchmark::DoNotOptimize(step.grad.data());
  }
}
BENCHMARK(BM_DistillStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
