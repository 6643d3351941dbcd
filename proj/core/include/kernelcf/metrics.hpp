#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kernelcf/dataset.hpp"
#include "kernelcf/types.hpp"

namespace kcf {

// Inverse-propensity weights phi(i) = 1 / (1 + C * exp(-A * ln(n_i + B)))
// with C = (ln N - 1) * (B + 1)^A, fitted from item frequencies. N must
// exceed e so that C stays positive.
struct PropensityModel {
  double a = 0.55;
  double b = 1.5;
  double c = 0;
  std::vector<double> phi;

  static PropensityModel from_frequencies(const std::vector<std::uint32_t>& freq,
                                          std::size_t n_interactions);
  static PropensityModel from_dataset(const InteractionDataset& train);
};

struct MetricsReport {
  std::vector<std::pair<std::string, double>> values;  // stable order
  std::size_t n_users = 0;

  bool has(const std::string& name) const;
  double get(const std::string& name) const;  // throws ConfigError if absent
  std::string to_json() const;
};

struct EvalOptions {
  std::vector<int> ks{10, 100};
  bool mask_history = true;   // hide already-consumed items from the ranking
  bool standard_ndcg = false; // truncate the ideal DCG at k
};

// Produces a (|users| x |items|) score block for the given query users.
using BlockScorer = std::function<Matrix(std::span<const std::uint32_t>)>;

// Ranks every item for each user with a non-empty positive row and averages
// per-user AUC, HR@k, nDCG@k and (when a propensity model is given) PSP@k.
// history supplies the rows hidden by mask_history; positives are the
// held-out items. All metrics are invariant under strictly monotone
// transforms of the scores. Averaging order is fixed, so results do not
// depend on the worker-pool size.
MetricsReport evaluate_ranking(const InteractionDataset& history,
                               const InteractionDataset& positives,
                               const BlockScorer& scorer, const EvalOptions& opt,
                               const PropensityModel* prop = nullptr);

enum class StrataAxis { users, items };

struct StratumReport {
  std::size_t index = 0;
  std::uint32_t freq_lo = 0;  // train-frequency range covered by the bucket
  std::uint32_t freq_hi = 0;
  std::size_t size = 0;  // users or items in the bucket
  MetricsReport metrics;
};

// Equisized coldness buckets. Users are binned by history degree; items by
// train frequency, with per-user positives restricted to the bucket (the
// ranking universe stays global).
std::vector<StratumReport> evaluate_strata(
    const InteractionDataset& history, const InteractionDataset& positives,
    const std::vector<std::uint32_t>& item_train_freq, StrataAxis axis,
    std::size_t n_buckets, const BlockScorer& scorer, const EvalOptions& opt,
    const PropensityModel* prop = nullptr);

// Single-list primitives, exposed for reuse and direct testing.
// mask may be null; masked items are excluded from ranking and from the
// AUC negative set. Ties rank by ascending item index; AUC counts ties 0.5.
std::vector<std::uint32_t> top_k_items(const Vector& scores, int k,
                                       const std::vector<char>* mask);
double metric_auc(const Vector& scores, std::span<const std::uint32_t> positives,
                  const std::vector<char>* mask);
double metric_hr(const Vector& scores, std::span<const std::uint32_t> positives,
                 int k, const std::vector<char>* mask);
double metric_ndcg(const Vector& scores, std::span<const std::uint32_t> positives,
                   int k, const std::vector<char>* mask, bool standard_idcg = false);
double metric_psp(const Vector& scores, std::span<const std::uint32_t> positives,
                  int k, const std::vector<char>* mask, const PropensityModel& prop);

}  // namespace kcf
