#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kernelcf/baselines.hpp"
#include "kernelcf/dataset.hpp"
#include "kernelcf/distill.hpp"
#include "kernelcf/infae.hpp"
#include "kernelcf/metrics.hpp"
#include "kernelcf/model_io.hpp"

namespace kcf {

// One structured key=value config drives every experiment. Unknown keys are
// errors; list values are comma-separated; '#' starts a comment.
struct ExperimentConfig {
  // data
  std::string dataset;  // raw interaction file, or a prepared split directory
  std::string format = "tsv";
  std::optional<double> rating_threshold;
  std::vector<double> split_ratios = {0.8, 0.1, 0.1};
  std::uint64_t seed = 42;

  // what to run and where to write
  std::string kind = "table1";  // table1 | sample-sweep | noise-sweep |
                                // transfer | depth | strata
  std::string output_dir = ".";

  // models and selection grids
  std::vector<std::string> models = {"infae", "ease", "bias", "poprec"};
  std::vector<double> infae_lambda_grid = {0.0, 1.0, 5.0, 20.0, 50.0, 100.0};
  std::vector<double> ease_lambda_grid = {1.0, 10.0, 100.0, 1000.0, 10000.0};
  std::vector<double> bias_l2_grid = {0.1, 1.0, 10.0};
  std::size_t max_train_users = 0;  // cap on kernel training rows; 0 = all
  std::vector<int> eval_ks = {10, 100};
  bool standard_ndcg = false;

  // sweep axes
  std::vector<std::string> samplers = {"user-rns", "head-user", "svp-cf",
                                       "interaction-rns"};
  std::vector<double> budgets = {1, 5, 10, 25, 50, 100};  // percent by default
  bool budget_absolute = false;  // budgets are absolute counts instead
  std::string budget_unit = "users";
  int sweep_seeds = 3;
  std::string sweep_model = "infae";
  std::vector<double> noise_levels = {0, 1, 5};
  std::vector<int> depths = {1, 2, 3, 4};
  std::size_t strata_buckets = 5;

  // distillation knobs (mu is taken from the budget inside sweeps)
  DistillConfig distill;

  static ExperimentConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  void validate() const;
};

// Load the configured dataset and split it (or read a prepared split dir).
SplitDataset load_split(const ExperimentConfig& cfg);

// Full-data comparison of the configured models; writes report_<model>.json
// and table1.csv under output_dir, returns the reports keyed by model name.
std::map<std::string, MetricsReport> run_table1(const ExperimentConfig& cfg,
                                                const SplitDataset& split);

// Sampler x budget sweep of sweep_model, median over sweep_seeds repetitions;
// writes sample_sweep.csv (schema: sampler,budget,metric,value). "distill-cf"
// in the sampler list synthesizes a summary at the budget's user count.
std::string run_sample_sweep(const ExperimentConfig& cfg, const SplitDataset& split,
                             const std::string& csv_name = "sample_sweep.csv");

// Noise x sampler x budget sweep per model; writes noise_sweep_<model>.csv
// (schema: noise,sampler,budget,metric,value,drop_pct) with drops relative to
// that model's clean full-data run. Returns the written paths.
std::vector<std::string> run_noise_sweep(const ExperimentConfig& cfg,
                                         const SplitDataset& split);

// Kernel depth study of the dual model; writes depth.csv (depth,metric,value).
std::string run_depth_study(const ExperimentConfig& cfg, const SplitDataset& split);

// Cold-start strata of sweep_model; writes strata.csv
// (axis,bucket,freq_lo,freq_hi,size,metric,value).
std::string run_strata(const ExperimentConfig& cfg, const SplitDataset& split);

// Dispatch on cfg.kind ("transfer" = sample sweep with the EASE model);
// returns the files written.
std::vector<std::string> run_experiment(const ExperimentConfig& cfg);

}  // namespace kcf
