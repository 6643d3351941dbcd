#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kernelcf/dataset.hpp"
#include "kernelcf/metrics.hpp"
#include "kernelcf/model_io.hpp"
#include "kernelcf/types.hpp"

namespace kcf {

// ---- popularity ----

struct PopRecModel {
  std::vector<double> item_score;  // train frequency; ties rank by item index
  std::vector<std::string> item_ids;
};

PopRecModel poprec_fit(const InteractionDataset& train);
BlockScorer make_scorer(const PopRecModel& m, const InteractionDataset& history);

// ---- bias-only least squares: r_hat = alpha + beta_u + beta_i ----

struct BiasModel {
  double alpha = 0;
  Vector user_bias;  // aligned with train users
  Vector item_bias;
  double l2 = 0;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  // filled by the stochastic trainer: per-user mean over epochs of (1 - AUC),
  // the SVP-CF difficulty score
  std::vector<double> svp_score;
};

// Squared loss over the observed positives (target 1) plus
// negatives_per_positive sampled unobserved items per positive (target 0),
// with l2 on both bias vectors. Alternating exact coordinate updates run
// until the loss improves by less than tol.
BiasModel bias_fit(const InteractionDataset& train, double l2, std::uint64_t seed,
                   int negatives_per_positive = 1, double tol = 1e-8,
                   int max_sweeps = 500);

// Epoch-wise SGD on the same objective; after every epoch each user's train
// positives are scored against 100 sampled negatives and (1 - AUC) is
// accumulated into svp_score. This is the SVP-CF proxy.
BiasModel bias_fit_stochastic(const InteractionDataset& train, double l2, double lr,
                              int epochs, std::uint64_t seed);

// Training loss of a model on its reconstructed design (positives plus the
// deterministically re-sampled negatives).
double bias_loss(const BiasModel& m, const InteractionDataset& train,
                 std::uint64_t seed, int negatives_per_positive = 1);

BlockScorer make_scorer(const BiasModel& m, const InteractionDataset& history);

// ---- EASE: item-item weights B = I - P diag(1/diag P), P = (X^T X + lambda I)^{-1}

struct EaseModel {
  Matrix weights_t;  // B^T, so a history row's scores are sums of columns
  double lambda = 0;
  std::vector<std::string> item_ids;
};

EaseModel ease_fit(const InteractionDataset& train, double lambda);

struct EaseSelection {
  double lambda = 0;
  double score = 0;
  std::vector<std::pair<double, double>> grid;
};

std::pair<EaseModel, EaseSelection> ease_select_lambda(
    const InteractionDataset& train, const InteractionDataset& history,
    const InteractionDataset& val_positives, std::span<const double> grid);

BlockScorer make_scorer(const EaseModel& m, const InteractionDataset& history);

// ---- persistence (same container as the dual-parameter model) ----

void save_pop(const std::string& path, const PopRecModel& m);
PopRecModel load_pop(const std::string& path);
void save_bias(const std::string& path, const BiasModel& m);
BiasModel load_bias(const std::string& path);
void save_ease(const std::string& path, const EaseModel& m);
EaseModel load_ease(const std::string& path);

}  // namespace kcf
