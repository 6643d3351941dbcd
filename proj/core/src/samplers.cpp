#include "kernelcf/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>

#include "kernelcf/baselines.hpp"
#include "kernelcf/rng.hpp"

namespace kcf {

std::size_t SampleBudget::resolve(std::size_t total) const {
  if (absolute) {
    if (*absolute == 0) throw ConfigError("sample budget must be positive");
    return *absolute;
  }
  if (!(p_percent > 0.0) || p_percent > 100.0)
    throw ConfigError("sample percentage must lie in (0, 100]");
  auto n = static_cast<std::size_t>(std::ceil(p_percent * double(total) / 100.0));
  return std::max<std::size_t>(1, std::min(n, total));
}

namespace {

// Rebuild a dataset from a subset of whole users, rows kept in original order.
InteractionDataset take_users(const InteractionDataset& ds,
                              std::vector<std::uint32_t> keep) {
  std::sort(keep.begin(), keep.end());
  InteractionDataset out;
  out.item_ids = ds.item_ids;
  out.user_ids.reserve(keep.size());
  out.rows.reserve(keep.size());
  for (auto u : keep) {
    out.user_ids.push_back(ds.user_ids[u]);
    out.rows.push_back(ds.rows[u]);
    out.n_interactions += ds.rows[u].size();
  }
  if (out.n_interactions == 0) throw ConfigError("sample is empty");
  return out;
}

// Add whole users following `order` while the sample is under budget.
InteractionDataset add_until_budget(const InteractionDataset& ds,
                                    std::span<const std::uint32_t> order,
                                    const SampleBudget& budget) {
  std::size_t target = budget.unit == SampleBudget::Unit::users
                           ? budget.resolve(ds.num_users())
                           : budget.resolve(ds.n_interactions);
  std::vector<std::uint32_t> keep;
  std::size_t size = 0;
  for (auto u : order) {
    if (size >= target) break;
    keep.push_back(u);
    size += budget.unit == SampleBudget::Unit::users ? 1 : ds.rows[u].size();
  }
  return take_users(ds, std::move(keep));
}

}  // namespace

InteractionDataset interaction_rns(const InteractionDataset& ds,
                                   const SampleBudget& budget, std::uint64_t seed) {
  SampleBudget as_entries = budget;
  if (budget.unit == SampleBudget::Unit::users && !budget.absolute)
    as_entries.unit = SampleBudget::Unit::interactions;
  std::size_t target =
      std::min(as_entries.resolve(ds.n_interactions), ds.n_interactions);
  RngStream rng(seed, "interaction-rns");
  auto picks = rng.sample_without_replacement(ds.n_interactions, target);
  std::sort(picks.begin(), picks.end());

  // entry k in row-major enumeration order -> (user, item)
  std::vector<std::size_t> row_start(ds.num_users() + 1, 0);
  for (std::size_t u = 0; u < ds.num_users(); ++u)
    row_start[u + 1] = row_start[u] + ds.rows[u].size();

  InteractionDataset out;
  out.item_ids = ds.item_ids;
  std::size_t u = 0;
  std::vector<std::uint32_t> row;
  auto flush = [&](std::size_t user) {
    if (row.empty()) return;
    out.user_ids.push_back(ds.user_ids[user]);
    out.n_interactions += row.size();
    out.rows.push_back(std::move(row));
    row.clear();
  };
  for (auto k : picks) {
    while (row_start[u + 1] <= k) {
      flush(u);
      ++u;
    }
    row.push_back(ds.rows[u][k - row_start[u]]);
  }
  flush(u);
  if (out.n_interactions == 0) throw ConfigError("sample is empty");
  return out;
}

InteractionDataset user_rns(const InteractionDataset& ds, const SampleBudget& budget,
                            std::uint64_t seed) {
  std::vector<std::uint32_t> order(ds.num_users());
  std::iota(order.begin(), order.end(), 0u);
  RngStream rng(seed, "user-rns");
  rng.shuffle(order);
  return add_until_budget(ds, order, budget);
}

InteractionDataset head_user(const InteractionDataset& ds, const SampleBudget& budget) {
  std::vector<std::uint32_t> order(ds.num_users());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (ds.rows[a].size() != ds.rows[b].size())
      return ds.rows[a].size() > ds.rows[b].size();
    return a < b;
  });
  return add_until_budget(ds, order, budget);
}

InteractionDataset svp_cf_user(const InteractionDataset& ds, const SampleBudget& budget,
                               int proxy_epochs, std::uint64_t seed,
                               double proxy_l2, double proxy_lr) {
  if (proxy_epochs < 1) throw ConfigError("svp-cf needs at least one proxy epoch");
  BiasModel proxy = bias_fit_stochastic(ds, proxy_l2, proxy_lr, proxy_epochs, seed);
  std::vector<std::uint32_t> order(ds.num_users());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (proxy.svp_score[a] != proxy.svp_score[b])
      return proxy.svp_score[a] > proxy.svp_score[b];
    return a < b;
  });
  return add_until_budget(ds, order, budget);
}

SamplerKind parse_sampler(const std::string& name) {
  if (name == "interaction-rns") return SamplerKind::interaction_rns;
  if (name == "user-rns") return SamplerKind::user_rns;
  if (name == "head-user") return SamplerKind::head_user;
  if (name == "svp-cf") return SamplerKind::svp_cf;
  throw ConfigError("unknown sampler '" + name +
                    "' (expected interaction-rns, user-rns, head-user or svp-cf)");
}

const char* sampler_name(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::interaction_rns: return "interaction-rns";
    case SamplerKind::user_rns: return "user-rns";
    case SamplerKind::head_user: return "head-user";
    case SamplerKind::svp_cf: return "svp-cf";
  }
  return "?";
}

InteractionDataset run_sampler(SamplerKind kind, const InteractionDataset& ds,
                               const SampleBudget& budget, std::uint64_t seed,
                               int proxy_epochs) {
  switch (kind) {
    case SamplerKind::interaction_rns: return interaction_rns(ds, budget, seed);
    case SamplerKind::user_rns: return user_rns(ds, budget, seed);
    case SamplerKind::head_user: return head_user(ds, budget);
    case SamplerKind::svp_cf: return svp_cf_user(ds, budget, proxy_epochs, seed);
  }
  throw ConfigError("unknown sampler kind");
}

}  // namespace kcf
