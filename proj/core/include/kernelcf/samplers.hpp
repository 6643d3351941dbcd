#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "kernelcf/dataset.hpp"
#include "kernelcf/types.hpp"

namespace kcf {

// Down-sampling budget: p percent of the dataset, measured either in
// interactions or in whole users. An absolute count overrides the percentage
// when set.
struct SampleBudget {
  double p_percent = 100.0;
  enum class Unit { interactions, users } unit = Unit::interactions;
  std::optional<std::size_t> absolute;

  std::size_t resolve(std::size_t total) const;
};

// Uniform entry sample without replacement; users left empty are dropped.
// A user-unit budget is translated to the equivalent interaction fraction.
InteractionDataset interaction_rns(const InteractionDataset& ds,
                                   const SampleBudget& budget, std::uint64_t seed);

// Whole users in uniform random order, added while the sample is below
// budget; the last user may overshoot an interaction budget.
InteractionDataset user_rns(const InteractionDataset& ds, const SampleBudget& budget,
                            std::uint64_t seed);

// Whole users in descending interaction count (ties by ascending index).
InteractionDataset head_user(const InteractionDataset& ds, const SampleBudget& budget);

// Whole users in descending difficulty, where difficulty is the per-user mean
// over proxy training epochs of (1 - AUC) under the stochastic bias-only
// proxy (ties by ascending index).
InteractionDataset svp_cf_user(const InteractionDataset& ds, const SampleBudget& budget,
                               int proxy_epochs, std::uint64_t seed,
                               double proxy_l2 = 1.0, double proxy_lr = 0.01);

enum class SamplerKind { interaction_rns, user_rns, head_user, svp_cf };
SamplerKind parse_sampler(const std::string& name);
const char* sampler_name(SamplerKind kind);

// Dispatch on kind with the module defaults for svp-cf.
InteractionDataset run_sampler(SamplerKind kind, const InteractionDataset& ds,
                               const SampleBudget& budget, std::uint64_t seed,
                               int proxy_epochs = 5);

}  // namespace kcf
