#pragma once

#include <span>
#include <utility>
#include <vector>

#include "kernelcf/dataset.hpp"
#include "kernelcf/kernel.hpp"
#include "kernelcf/metrics.hpp"
#include "kernelcf/model_io.hpp"
#include "kernelcf/types.hpp"

namespace kcf {

// Closed-form dual weights of the infinite-width autoencoder: for gramian K
// over the training users, alpha = (K + lambda I)^{-1} X. Inference for any
// binary history h scores items as softmax(k(h, train) . alpha).
struct DualParameters {
  Matrix alpha;  // |train users| x |items|
  double lambda = 0;
  double jitter = 0;  // extra ridge the solver had to add, usually 0
  KernelConfig kernel;
  InteractionDataset train;
  std::uint64_t train_hash = 0;
};

Matrix train_gramian(const InteractionDataset& train, const KernelConfig& cfg);

// Fit with a precomputed training gramian (reused across a lambda grid).
DualParameters fit_with_gramian(const Matrix& k, const InteractionDataset& train,
                                double lambda, const KernelConfig& cfg);
DualParameters fit(const InteractionDataset& train, double lambda,
                   const KernelConfig& cfg = {});

// Probability scores over all items for one history (softmax, sums to 1).
Vector predict(const DualParameters& dp, std::span<const std::uint32_t> history);

// Raw dual scores k . alpha for evaluation; monotone-equivalent to predict.
// The returned scorer reads query rows from `history` (which may contain
// users the model never trained on).
BlockScorer make_scorer(const DualParameters& dp, const InteractionDataset& history);

MetricsReport evaluate(const DualParameters& dp, const InteractionDataset& history,
                       const InteractionDataset& positives, const EvalOptions& opt,
                       const PropensityModel* prop = nullptr);

struct LambdaSelection {
  double lambda = 0;
  double score = 0;                              // validation nDCG@100
  std::vector<std::pair<double, double>> grid;   // (lambda, score) per grid point
};

// Grid-search lambda by validation nDCG@100: fit on `train`, score each
// candidate by ranking val positives with query rows from `history`.
std::pair<DualParameters, LambdaSelection> fit_select_lambda(
    const InteractionDataset& train, const InteractionDataset& history,
    const InteractionDataset& val_positives, std::span<const double> grid,
    const KernelConfig& cfg);

void save_dual(const std::string& path, const DualParameters& dp);
DualParameters load_dual(const std::string& path);

}  // namespace kcf
