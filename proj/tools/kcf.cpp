// Command-line front end: prepare / train / evaluate / sample / distill /
// experiment. Exit codes: 0 success, 2 configuration error, 3 numerical
// failure.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kernelcf/baselines.hpp"
#include "kernelcf/dataset.hpp"
#include "kernelcf/distill.hpp"
#include "kernelcf/harness.hpp"
#include "kernelcf/infae.hpp"
#include "kernelcf/metrics.hpp"
#include "kernelcf/model_io.hpp"
#include "kernelcf/rng.hpp"
#include "kernelcf/samplers.hpp"
#include "kernelcf/summary.hpp"

namespace {

using namespace kcf;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void print_metrics(const MetricsReport& rep) {
  for (const auto& [metric, value] : rep.values) {
    char buf[64];
    if (metric == "auc")
      std::snprintf(buf, sizeof buf, "%-10s %.4f", metric.c_str(), value);
    else
      std::snprintf(buf, sizeof buf, "%-10s %.2f", metric.c_str(), value * 100.0);
    std::cout << buf << '\n';
  }
  std::cout << "users     " << rep.n_users << '\n';
}

InteractionDataset load_train_part(const std::string& data, const std::string& format,
                                   std::optional<double> threshold) {
  if (std::filesystem::is_directory(data)) return read_split_dir(data).train;
  return load_interactions(data, parse_format(format), threshold);
}

// ---- prepare ----

struct PrepareArgs {
  std::string input, format = "tsv", out;
  std::optional<double> threshold;
  std::vector<double> ratios = {0.8, 0.1, 0.1};
  std::uint64_t seed = 42;
  std::uint32_t min_interactions = 3;
};

void run_prepare(const PrepareArgs& a) {
  if (a.ratios.size() != 3) throw ConfigError("--ratios needs three values");
  InteractionDataset ds = load_interactions(a.input, parse_format(a.format), a.threshold);
  SplitDataset sp = split_per_user(ds, {a.ratios[0], a.ratios[1], a.ratios[2]},
                                   a.seed, a.min_interactions);
  write_split_dir(sp, a.out);
  std::cout << "users " << sp.train.num_users() << "  items " << sp.train.num_items()
            << "  train " << sp.train.n_interactions << "  val "
            << sp.val.n_interactions << "  test " << sp.test.n_interactions
            << "  -> " << a.out << '\n';
}

// ---- train ----

struct TrainArgs {
  std::string data, model, out, summary;
  std::optional<double> lambda, l2;
  std::vector<double> grid;
  int depth = 1;
  std::uint64_t seed = 42;
  std::size_t max_train_users = 0;
};

void run_train(const TrainArgs& a) {
  SplitDataset split = read_split_dir(a.data);
  InteractionDataset train_on =
      a.summary.empty() ? split.train : summary_to_dataset(read_summary(a.summary));
  ModelKind kind = parse_model_kind(a.model);

  switch (kind) {
    case ModelKind::infae: {
      KernelConfig kc;
      kc.depth = a.depth;
      InteractionDataset capped = train_on;
      if (a.max_train_users && capped.num_users() > a.max_train_users) {
        RngStream rng(a.seed, "max-train-users");
        auto keep = rng.sample_without_replacement(
            static_cast<std::uint32_t>(capped.num_users()),
            static_cast<std::uint32_t>(a.max_train_users));
        std::sort(keep.begin(), keep.end());
        InteractionDataset sub;
        sub.item_ids = capped.item_ids;
        for (auto u : keep) {
          sub.user_ids.push_back(capped.user_ids[u]);
          sub.rows.push_back(capped.rows[u]);
          sub.n_interactions += capped.rows[u].size();
        }
        capped = std::move(sub);
      }
      if (a.lambda) {
        save_dual(a.out, fit(capped, *a.lambda, kc));
        std::cout << "lambda " << fmt_g(*a.lambda) << "  -> " << a.out << '\n';
      } else {
        std::vector<double> grid =
            a.grid.empty() ? std::vector<double>{0, 1, 5, 20, 50, 100} : a.grid;
        auto [dp, sel] = fit_select_lambda(capped, split.train, split.val, grid, kc);
        save_dual(a.out, dp);
        std::cout << "selected lambda " << fmt_g(sel.lambda) << " (val ndcg@100 "
                  << fmt_g(sel.score) << ")  -> " << a.out << '\n';
      }
      break;
    }
    case ModelKind::ease: {
      if (a.lambda) {
        save_ease(a.out, ease_fit(train_on, *a.lambda));
        std::cout << "lambda " << fmt_g(*a.lambda) << "  -> " << a.out << '\n';
      } else {
        std::vector<double> grid =
            a.grid.empty() ? std::vector<double>{1, 10, 100, 1000, 10000} : a.grid;
        auto [em, sel] = ease_select_lambda(train_on, split.train, split.val, grid);
        save_ease(a.out, em);
        std::cout << "selected lambda " << fmt_g(sel.lambda) << " (val ndcg@100 "
                  << fmt_g(sel.score) << ")  -> " << a.out << '\n';
      }
      break;
    }
    case ModelKind::bias: {
      if (a.l2) {
        save_bias(a.out, bias_fit(train_on, *a.l2, a.seed));
        std::cout << "l2 " << fmt_g(*a.l2) << "  -> " << a.out << '\n';
      } else {
        std::vector<double> grid =
            a.grid.empty() ? std::vector<double>{0.1, 1, 10} : a.grid;
        EvalOptions vopt;
        vopt.ks = {100};
        std::optional<BiasModel> best;
        double best_score = -1, best_l2 = 0;
        for (double l2 : grid) {
          BiasModel c = bias_fit(train_on, l2, a.seed);
          auto rep =
              evaluate_ranking(split.train, split.val, make_scorer(c, split.train), vopt);
          double score = rep.get("ndcg@100");
          if (!best || score > best_score) {
            best_score = score;
            best_l2 = l2;
            best = std::move(c);
          }
        }
        save_bias(a.out, *best);
        std::cout << "selected l2 " << fmt_g(best_l2) << " (val ndcg@100 "
                  << fmt_g(best_score) << ")  -> " << a.out << '\n';
      }
      break;
    }
    case ModelKind::poprec:
      save_pop(a.out, poprec_fit(train_on));
      std::cout << "-> " << a.out << '\n';
      break;
  }
}

// ---- evaluate ----

struct EvalArgs {
  std::string data, model, report, strata, part = "test";
  std::vector<int> ks = {10, 100};
  bool standard_ndcg = false;
  std::size_t buckets = 5;
};

void run_evaluate(const EvalArgs& a) {
  SplitDataset split = read_split_dir(a.data);
  const InteractionDataset* positives = nullptr;
  if (a.part == "test") positives = &split.test;
  else if (a.part == "val") positives = &split.val;
  else throw ConfigError("--split must be 'test' or 'val'");

  ModelKind kind = peek_model_kind(a.model);
  BlockScorer scorer;
  std::optional<DualParameters> dual;
  std::optional<EaseModel> ease;
  std::optional<BiasModel> bias;
  std::optional<PopRecModel> pop;
  switch (kind) {
    case ModelKind::infae:
      dual = load_dual(a.model);
      scorer = make_scorer(*dual, split.train);
      break;
    case ModelKind::ease:
      ease = load_ease(a.model);
      scorer = make_scorer(*ease, split.train);
      break;
    case ModelKind::bias:
      bias = load_bias(a.model);
      scorer = make_scorer(*bias, split.train);
      break;
    case ModelKind::poprec:
      pop = load_pop(a.model);
      scorer = make_scorer(*pop, split.train);
      break;
  }

  PropensityModel prop = PropensityModel::from_dataset(split.train);
  EvalOptions opt;
  opt.ks = a.ks;
  opt.standard_ndcg = a.standard_ndcg;

  if (!a.strata.empty()) {
    StrataAxis axis;
    if (a.strata == "users") axis = StrataAxis::users;
    else if (a.strata == "items") axis = StrataAxis::items;
    else throw ConfigError("--strata must be 'users' or 'items'");
    auto strata = evaluate_strata(split.train, *positives, split.train.item_frequencies(),
                                  axis, a.buckets, scorer, opt, &prop);
    std::cout << "bucket,freq_lo,freq_hi,size,metric,value\n";
    for (const auto& s : strata)
      for (const auto& [metric, value] : s.metrics.values)
        std::cout << s.index << ',' << s.freq_lo << ',' << s.freq_hi << ','
                  << s.size << ',' << metric << ',' << fmt_g(value) << '\n';
    return;
  }

  MetricsReport rep = evaluate_ranking(split.train, *positives, scorer, opt, &prop);
  std::cout << model_kind_name(kind) << " on " << a.part << ":\n";
  print_metrics(rep);
  if (!a.report.empty()) {
    std::ofstream out(a.report, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + a.report);
    out << rep.to_json() << '\n';
  }
}

// ---- sample ----

struct SampleArgs {
  std::string data, format = "tsv", strategy, out, unit = "users";
  double budget = 100;
  std::optional<std::size_t> absolute;
  std::optional<double> threshold;
  std::uint64_t seed = 42;
  int proxy_epochs = 5;
};

void run_sample(const SampleArgs& a) {
  InteractionDataset ds = load_train_part(a.data, a.format, a.threshold);
  SampleBudget b;
  b.p_percent = a.budget;
  b.absolute = a.absolute;
  if (a.unit == "users") b.unit = SampleBudget::Unit::users;
  else if (a.unit == "interactions") b.unit = SampleBudget::Unit::interactions;
  else throw ConfigError("--unit must be 'users' or 'interactions'");
  InteractionDataset sample =
      run_sampler(parse_sampler(a.strategy), ds, b, a.seed, a.proxy_epochs);
  write_interactions(sample, a.out);
  std::cout << sample.num_users() << " users, " << sample.n_interactions
            << " interactions  -> " << a.out << '\n';
}

// ---- distill ----

struct DistillArgs {
  std::string data, out, checkpoint, grid;
  DistillConfig cfg;
  bool resume = false;
  bool no_final_draw = false;
};

void run_distill(DistillArgs a) {
  SplitDataset split = read_split_dir(a.data);
  a.cfg.checkpoint_path = a.checkpoint;
  a.cfg.final_hard_draw = !a.no_final_draw;
  if (!a.grid.empty()) {
    a.cfg.lambda_grid.clear();
    std::size_t start = 0;
    while (start <= a.grid.size()) {
      auto comma = a.grid.find(',', start);
      if (comma == std::string::npos) comma = a.grid.size();
      std::string piece = a.grid.substr(start, comma - start);
      if (!piece.empty()) a.cfg.lambda_grid.push_back(std::stod(piece));
      start = comma + 1;
    }
  }
  DistillResult res = synthesize(split, a.cfg, a.resume);
  write_summary(res.summary, a.out);
  if (res.diverged)
    std::cerr << "warning: optimization diverged; wrote the last good state\n";
  std::cout << res.summary.rows.size() << " synthetic users, "
            << res.summary.entry_count() << " entries (lambda "
            << fmt_g(res.lambda) << ", " << res.iterations << " iterations";
  if (res.val_score >= 0) std::cout << ", val ndcg@100 " << fmt_g(res.val_score);
  std::cout << ")  -> " << a.out << '\n';
}

// ---- experiment ----

struct ExperimentArgs {
  std::string config, kind, output_dir;
  std::vector<std::string> sets;
};

void run_experiment_cmd(const ExperimentArgs& a) {
  ExperimentConfig cfg = ExperimentConfig::from_file(a.config);
  for (const auto& kv : a.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!a.kind.empty()) cfg.kind = a.kind;
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  for (const auto& path : run_experiment(cfg)) std::cout << "wrote " << path << '\n';
}

}  // namespace

int main(int argc, char** argv) try {
  CLI::App app{"kernel collaborative filtering toolkit"};
  app.require_subcommand(1);

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "split a raw interaction file");
  prepare->add_option("--input", pa.input, "raw interaction file")->required();
  prepare->add_option("--format", pa.format, "tsv | csv | ml-delim");
  double pa_threshold = 0;
  auto* pa_thr = prepare->add_option("--rating-threshold", pa_threshold,
                                     "keep ratings >= threshold");
  prepare->add_option("--ratios", pa.ratios, "train,val,test fractions")
      ->delimiter(',')->expected(3);
  prepare->add_option("--seed", pa.seed, "split seed");
  prepare->add_option("--min-interactions", pa.min_interactions,
                      "drop users with fewer interactions");
  prepare->add_option("--out", pa.out, "output split directory")->required();
  prepare->callback([&] {
    if (*pa_thr) pa.threshold = pa_threshold;
    run_prepare(pa);
  });

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "fit a model on a prepared split");
  train->add_option("--data", ta.data, "split directory")->required();
  train->add_option("--model", ta.model, "infae | ease | bias | poprec")->required();
  train->add_option("--out", ta.out, "model output file")->required();
  train->add_option("--summary", ta.summary,
                    "train on this synthetic summary instead of the train part");
  double ta_lambda = 0, ta_l2 = 0;
  auto* ta_lam = train->add_option("--lambda", ta_lambda, "fixed ridge strength");
  auto* ta_l2o = train->add_option("--l2", ta_l2, "fixed bias-model l2");
  train->add_option("--grid", ta.grid, "selection grid (overrides the default)")
      ->delimiter(',');
  train->add_option("--depth", ta.depth, "kernel depth");
  train->add_option("--seed", ta.seed, "seed for stochastic pieces");
  train->add_option("--max-train-users", ta.max_train_users,
                    "cap on kernel training rows (0 = all)");
  train->callback([&] {
    if (*ta_lam) ta.lambda = ta_lambda;
    if (*ta_l2o) ta.l2 = ta_l2;
    run_train(ta);
  });

  EvalArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "rank and score a saved model");
  evaluate->add_option("--data", ea.data, "split directory")->required();
  evaluate->add_option("--model", ea.model, "saved model file")->required();
  evaluate->add_option("--ks", ea.ks, "cutoffs")->delimiter(',');
  evaluate->add_option("--split", ea.part, "test | val");
  evaluate->add_option("--report", ea.report, "write metrics as JSON");
  evaluate->add_flag("--standard-ndcg", ea.standard_ndcg,
                     "truncate the ideal DCG at k");
  evaluate->add_option("--strata", ea.strata, "stratified report: users | items");
  evaluate->add_option("--buckets", ea.buckets, "strata bucket count");
  evaluate->callback([&] { run_evaluate(ea); });

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "down-sample a dataset");
  sample->add_option("--data", sa.data, "split directory or raw file")->required();
  sample->add_option("--format", sa.format, "raw file format");
  sample->add_option("--strategy", sa.strategy,
                     "interaction-rns | user-rns | head-user | svp-cf")->required();
  sample->add_option("--budget", sa.budget, "percent to keep");
  std::size_t sa_abs = 0;
  auto* sa_abso = sample->add_option("--absolute", sa_abs, "absolute count instead");
  sample->add_option("--unit", sa.unit, "users | interactions");
  sample->add_option("--seed", sa.seed, "sampling seed");
  sample->add_option("--proxy-epochs", sa.proxy_epochs, "svp-cf proxy epochs");
  sample->add_option("--out", sa.out, "output TSV")->required();
  sample->callback([&] {
    if (*sa_abso) sa.absolute = sa_abs;
    run_sample(sa);
  });

  DistillArgs da;
  auto* distill = app.add_subcommand("distill", "learn a synthetic data summary");
  distill->add_option("--data", da.data, "split directory")->required();
  distill->add_option("--out", da.out, "output summary file")->required();
  distill->add_option("--mu", da.cfg.mu, "synthetic users");
  distill->add_option("--gamma", da.cfg.gamma, "draws per user");
  distill->add_option("--tau", da.cfg.tau, "softmax temperature");
  distill->add_option("--lambda", da.cfg.lambda, "initial inner ridge");
  distill->add_option("--lambda2", da.cfg.lambda2,
                      "sparsity weight (negative = auto)");
  distill->add_option("--batch", da.cfg.batch_size, "real users per step");
  distill->add_option("--lr", da.cfg.step_size, "step size");
  distill->add_option("--iters", da.cfg.max_outer, "outer iteration cap");
  distill->add_option("--val-every", da.cfg.val_every, "validation period");
  distill->add_option("--patience", da.cfg.patience,
                      "non-improving cycles before stopping");
  distill->add_option("--seed", da.cfg.seed, "noise seed");
  distill->add_option("--grid", da.grid, "inner ridge selection grid");
  distill->add_flag("--adam", da.cfg.adam, "adaptive-moment optimizer");
  distill->add_flag("--no-final-draw", da.no_final_draw,
                    "threshold the prior instead of a final hard draw");
  distill->add_option("--checkpoint", da.checkpoint, "checkpoint file");
  distill->add_flag("--resume", da.resume, "continue from the checkpoint");
  distill->callback([&] { run_distill(da); });

  ExperimentArgs xa;
  auto* experiment = app.add_subcommand("experiment", "run a configured experiment");
  experiment->add_option("--config", xa.config, "key=value config file")->required();
  experiment->add_option("--set", xa.sets, "override a config key (key=value)");
  experiment->add_option("--kind", xa.kind, "override the experiment kind");
  experiment->add_option("--output-dir", xa.output_dir, "override the output dir");
  experiment->callback([&] { run_experiment_cmd(xa); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return 0;
} catch (const kcf::ConfigError& e) {
  std::cerr << "config error: " << e.what() << '\n';
  return 2;
} catch (const kcf::NumericalError& e) {
  std::cerr << "numerical failure: " << e.what() << '\n';
  return 3;
} catch (const std::exception& e) {
  std::cerr << "error: " << e.what() << '\n';
  return 3;
}
