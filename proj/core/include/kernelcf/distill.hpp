#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kernelcf/dataset.hpp"
#include "kernelcf/summary.hpp"
#include "kernelcf/types.hpp"

namespace kcf {

// Learnable per-(synthetic user, item) logits from which binary summaries are
// sampled.
struct SupportPrior {
  Matrix logits;  // mu x |items|
  std::vector<std::string> item_ids;

  std::size_t mu() const { return static_cast<std::size_t>(logits.rows()); }
};

struct DistillConfig {
  std::size_t mu = 500;       // synthetic users
  int gamma = 200;            // relaxed draws per user, also the hard-draw count
  double tau = 0.5;           // Gumbel-softmax temperature
  double lambda = 1.0;        // initial inner ridge; re-selected at validation
  double lambda2 = -1.0;      // L1 weight; negative = 1e-3 / avg user degree
  std::size_t batch_size = 512;
  double step_size = 0.04;
  int max_outer = 500;
  int val_every = 20;
  int patience = 5;           // non-improving validation cycles before stopping
  std::uint64_t seed = 0;
  std::vector<double> lambda_grid = {1e-5, 1e-3, 0.1, 1.0, 5.0, 50.0};
  bool adam = false;          // adaptive-moment optimizer; plain SGD by default
  bool final_hard_draw = true;  // false: threshold the prior instead (no-op path)
  double init_scale = 5.0;
  double init_noise = 0.01;
  std::string checkpoint_path;  // empty = never checkpoint

  void validate() const;
};

// Prior seeded from mu real users drawn without replacement: scaled history
// row plus small Gaussian noise.
SupportPrior init_prior(const InteractionDataset& train, const DistillConfig& cfg);

// One multi-draw relaxed sample. noise_index keys the per-iteration noise
// streams; the same (seed, noise_index) replays the identical draws, which is
// how the backward pass revisits them without storing per-draw activations.
struct RelaxedSample {
  Matrix raw_sum;   // sum of gamma relaxed one-hot rows, in [0, gamma]
  Matrix clamped;   // min(raw_sum, 1); entries in [0, 1]
  std::uint64_t noise_index = 0;
};

RelaxedSample gumbel_relaxed_summary(const SupportPrior& prior, double tau, int gamma,
                                     std::uint64_t seed, std::uint64_t noise_index);

// Union of gamma categorical draws per row (Gumbel-argmax, with replacement).
SampledSummary gumbel_hard_summary(const SupportPrior& prior, int gamma,
                                   std::uint64_t seed, std::uint64_t noise_index);

struct DistillStep {
  double loss = 0;  // bce + l1
  double bce = 0;
  double l1 = 0;
  Matrix grad;      // d loss / d logits, mu x |items|
};

// Loss of the inner kernel fit on a fresh relaxed summary, scored against a
// batch of real user rows, plus the exact reverse-mode gradient through the
// whole chain (BCE, softmax, cross-kernel, ridge solve, row normalization,
// clamp, Gumbel-softmax draws).
DistillStep distill_loss_grad(const SupportPrior& prior, const Matrix& batch,
                              const DistillConfig& cfg, double lambda,
                              double lambda2, std::uint64_t noise_index);

struct DistillResult {
  SampledSummary summary;
  SupportPrior prior;     // prior that produced the summary
  double val_score = -1;  // best validation ndcg@100 (-1 if never validated)
  double lambda = 0;      // inner ridge in effect at the end
  int iterations = 0;
  bool diverged = false;
  std::vector<std::pair<int, double>> val_history;  // (iteration, ndcg@100)
};

// Full outer optimization: init, SGD on the logits with per-cycle validation
// and on-the-fly inner-lambda selection, early exit, divergence abort to the
// last good state, and a final hard draw. resume=true continues from
// cfg.checkpoint_path; the stored config wins over the passed one except for
// max_outer and patience, so a finished run can be extended.
DistillResult synthesize(const SplitDataset& split, const DistillConfig& cfg,
                         bool resume = false);

}  // namespace kcf
