#include "kernelcf/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "kernelcf/rng.hpp"
#include "kernelcf/samplers.hpp"
#include "kernelcf/summary.hpp"

namespace kcf {

namespace fs = std::filesystem;

namespace {

// ---- small parsing/formatting utilities ----

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto comma = value.find(',', start);
    if (comma == std::string::npos) comma = value.size();
    auto piece = trim(std::string_view(value).substr(start, comma - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    start = comma + 1;
  }
  return out;
}

double parse_f64(const std::string& s, const std::string& key) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("config key '" + key + "': bad number '" + s + "'");
  return v;
}

std::int64_t parse_i64(const std::string& s, const std::string& key) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("config key '" + key + "': bad integer '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "': bad boolean '" + s + "'");
}

std::vector<double> parse_f64_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  for (const auto& piece : split_list(s)) out.push_back(parse_f64(piece, key));
  return out;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  for (const auto& piece : split_list(s))
    out.push_back(static_cast<int>(parse_i64(piece, key)));
  return out;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

// Deterministic run seed for a sweep cell repetition.
std::uint64_t derive_seed(std::uint64_t base, const std::string& tag,
                          std::uint64_t rep) {
  return fnv1a64_u64(rep, fnv1a64(tag, fnv1a64_u64(base)));
}

InteractionDataset subset_users(const InteractionDataset& ds,
                                std::vector<std::uint32_t> keep) {
  std::sort(keep.begin(), keep.end());
  InteractionDataset out;
  out.item_ids = ds.item_ids;
  for (auto u : keep) {
    out.user_ids.push_back(ds.user_ids[u]);
    out.rows.push_back(ds.rows[u]);
    out.n_interactions += ds.rows[u].size();
  }
  return out;
}

InteractionDataset cap_train_users(const InteractionDataset& train, std::size_t cap,
                                   std::uint64_t seed) {
  if (cap == 0 || train.num_users() <= cap) return train;
  RngStream rng(seed, "max-train-users");
  auto keep = rng.sample_without_replacement(
      static_cast<std::uint32_t>(train.num_users()), static_cast<std::uint32_t>(cap));
  return subset_users(train, std::move(keep));
}

// ---- model dispatch ----

struct AnyModel {
  ModelKind kind = ModelKind::poprec;
  std::optional<DualParameters> dual;
  std::optional<EaseModel> ease;
  std::optional<BiasModel> bias;
  std::optional<PopRecModel> pop;
  double chosen = 0;  // selected lambda / l2, 0 when the model has none

  BlockScorer scorer(const InteractionDataset& history) const {
    switch (kind) {
      case ModelKind::infae: return make_scorer(*dual, history);
      case ModelKind::ease: return make_scorer(*ease, history);
      case ModelKind::bias: return make_scorer(*bias, history);
      case ModelKind::poprec: return make_scorer(*pop, history);
    }
    throw ConfigError("unknown model kind");
  }
};

AnyModel train_any(ModelKind kind, const InteractionDataset& train_on,
                   const InteractionDataset& history, const InteractionDataset& val,
                   const ExperimentConfig& cfg, std::uint64_t seed, int depth) {
  AnyModel m;
  m.kind = kind;
  switch (kind) {
    case ModelKind::infae: {
      KernelConfig kc;
      kc.depth = depth;
      InteractionDataset capped = cap_train_users(train_on, cfg.max_train_users, seed);
      auto [dp, sel] =
          fit_select_lambda(capped, history, val, cfg.infae_lambda_grid, kc);
      m.dual = std::move(dp);
      m.chosen = sel.lambda;
      break;
    }
    case ModelKind::ease: {
      auto [em, sel] = ease_select_lambda(train_on, history, val, cfg.ease_lambda_grid);
      m.ease = std::move(em);
      m.chosen = sel.lambda;
      break;
    }
    case ModelKind::bias: {
      EvalOptions vopt;
      vopt.ks = {100};
      double best = -1;
      for (double l2 : cfg.bias_l2_grid) {
        BiasModel c = bias_fit(train_on, l2, seed);
        auto rep = evaluate_ranking(history, val, make_scorer(c, history), vopt);
        double score = rep.get("ndcg@100");
        if (!m.bias || score > best) {
          best = score;
          m.bias = std::move(c);
          m.chosen = l2;
        }
      }
      break;
    }
    case ModelKind::poprec:
      m.pop = poprec_fit(train_on);
      break;
  }
  return m;
}

EvalOptions eval_options(const ExperimentConfig& cfg) {
  EvalOptions opt;
  opt.ks = cfg.eval_ks;
  opt.standard_ndcg = cfg.standard_ndcg;
  return opt;
}

// Training set for one sweep cell; "none" means the input itself and
// "distill-cf" synthesizes a summary at the budget's user count.
InteractionDataset cell_training_set(const std::string& sampler, double budget,
                                     const SplitDataset& split,
                                     const ExperimentConfig& cfg,
                                     std::uint64_t run_seed) {
  if (sampler == "none") return split.train;
  if (sampler == "distill-cf") {
    std::size_t mu;
    if (cfg.budget_absolute) {
      mu = static_cast<std::size_t>(budget);
    } else {
      SampleBudget b;
      b.p_percent = budget;
      b.unit = SampleBudget::Unit::users;
      mu = b.resolve(split.train.num_users());
    }
    DistillConfig dc = cfg.distill;
    dc.mu = mu;
    dc.seed = run_seed;
    if (!cfg.output_dir.empty()) {
      std::uint64_t h = fnv1a64_u64(split.train.content_hash(),
                                    fnv1a64_u64(run_seed, fnv1a64_u64(mu)));
      dc.checkpoint_path =
          (fs::path(cfg.output_dir) / ("distill_" + hex_u64(h) + ".ck")).string();
    }
    bool resume = !dc.checkpoint_path.empty() && fs::exists(dc.checkpoint_path);
    DistillResult res = synthesize(split, dc, resume);
    return summary_to_dataset(res.summary);
  }
  SampleBudget b;
  if (cfg.budget_absolute)
    b.absolute = static_cast<std::size_t>(budget);
  else
    b.p_percent = budget;
  b.unit = cfg.budget_unit == "interactions" ? SampleBudget::Unit::interactions
                                             : SampleBudget::Unit::users;
  return run_sampler(parse_sampler(sampler), split.train, b, run_seed);
}

void print_report(const std::string& name, const MetricsReport& rep, double chosen) {
  std::cout << name;
  if (chosen != 0) std::cout << " (selected " << fmt_g(chosen) << ")";
  std::cout << ":\n";
  for (const auto& [metric, value] : rep.values) {
    char buf[64];
    if (metric == "auc")
      std::snprintf(buf, sizeof buf, "  %-10s %.4f", metric.c_str(), value);
    else
      std::snprintf(buf, sizeof buf, "  %-10s %.2f", metric.c_str(), value * 100.0);
    std::cout << buf << '\n';
  }
}

}  // namespace

// ---- configuration ----

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "dataset") dataset = value;
  else if (key == "format") format = value;
  else if (key == "rating_threshold") rating_threshold = parse_f64(value, key);
  else if (key == "split") {
    auto v = parse_f64_list(value, key);
    if (v.size() != 3) throw ConfigError("config key 'split' needs three ratios");
    split_ratios = std::move(v);
  } else if (key == "seed") seed = static_cast<std::uint64_t>(parse_i64(value, key));
  else if (key == "kind") kind = value;
  else if (key == "output_dir") output_dir = value;
  else if (key == "models") models = split_list(value);
  else if (key == "infae_lambda_grid") infae_lambda_grid = parse_f64_list(value, key);
  else if (key == "ease_lambda_grid") ease_lambda_grid = parse_f64_list(value, key);
  else if (key == "bias_l2_grid") bias_l2_grid = parse_f64_list(value, key);
  else if (key == "max_train_users")
    max_train_users = static_cast<std::size_t>(parse_i64(value, key));
  else if (key == "eval_ks") eval_ks = parse_int_list(value, key);
  else if (key == "standard_ndcg") standard_ndcg = parse_bool(value, key);
  else if (key == "samplers") samplers = split_list(value);
  else if (key == "budgets") budgets = parse_f64_list(value, key);
  else if (key == "budget_absolute") budget_absolute = parse_bool(value, key);
  else if (key == "budget_unit") budget_unit = value;
  else if (key == "sweep_seeds") sweep_seeds = static_cast<int>(parse_i64(value, key));
  else if (key == "sweep_model") sweep_model = value;
  else if (key == "noise_levels") noise_levels = parse_f64_list(value, key);
  else if (key == "depths") depths = parse_int_list(value, key);
  else if (key == "strata_buckets")
    strata_buckets = static_cast<std::size_t>(parse_i64(value, key));
  else if (key == "distill_mu")
    distill.mu = static_cast<std::size_t>(parse_i64(value, key));
  else if (key == "distill_gamma") distill.gamma = static_cast<int>(parse_i64(value, key));
  else if (key == "distill_tau") distill.tau = parse_f64(value, key);
  else if (key == "distill_lambda") distill.lambda = parse_f64(value, key);
  else if (key == "distill_lambda2") distill.lambda2 = parse_f64(value, key);
  else if (key == "distill_batch")
    distill.batch_size = static_cast<std::size_t>(parse_i64(value, key));
  else if (key == "distill_lr") distill.step_size = parse_f64(value, key);
  else if (key == "distill_iters")
    distill.max_outer = static_cast<int>(parse_i64(value, key));
  else if (key == "distill_val_every")
    distill.val_every = static_cast<int>(parse_i64(value, key));
  else if (key == "distill_patience")
    distill.patience = static_cast<int>(parse_i64(value, key));
  else if (key == "distill_grid") distill.lambda_grid = parse_f64_list(value, key);
  else if (key == "distill_adam") distill.adam = parse_bool(value, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    cfg.set(trim(std::string_view(t).substr(0, eq)),
            trim(std::string_view(t).substr(eq + 1)));
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  if (dataset.empty()) throw ConfigError("config needs a dataset path");
  if (split_ratios.size() != 3) throw ConfigError("split needs three ratios");
  static const std::vector<std::string> kinds = {
      "table1", "sample-sweep", "noise-sweep", "transfer", "depth", "strata"};
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
    throw ConfigError("unknown experiment kind '" + kind + "'");
  if (models.empty()) throw ConfigError("model list is empty");
  for (const auto& m : models) parse_model_kind(m);
  if (infae_lambda_grid.empty() || ease_lambda_grid.empty() || bias_l2_grid.empty())
    throw ConfigError("selection grids must be nonempty");
  if (eval_ks.empty()) throw ConfigError("eval_ks is empty");
  if (budgets.empty()) throw ConfigError("budget list is empty");
  if (sweep_seeds < 1) throw ConfigError("sweep_seeds must be positive");
  if (budget_unit != "users" && budget_unit != "interactions")
    throw ConfigError("budget_unit must be 'users' or 'interactions'");
  if (sweep_model != "infae" && sweep_model != "ease")
    throw ConfigError("sweep_model must be 'infae' or 'ease'");
  for (double n : noise_levels)
    if (n < 0 || n > 100) throw ConfigError("noise levels must lie in [0, 100]");
  if (depths.empty()) throw ConfigError("depth list is empty");
  for (int d : depths)
    if (d < 1) throw ConfigError("depths must be >= 1");
  if (strata_buckets < 1) throw ConfigError("strata_buckets must be positive");
}

SplitDataset load_split(const ExperimentConfig& cfg) {
  if (fs::is_directory(cfg.dataset)) return read_split_dir(cfg.dataset);
  InteractionDataset ds =
      load_interactions(cfg.dataset, parse_format(cfg.format), cfg.rating_threshold);
  if (cfg.split_ratios.size() != 3) throw ConfigError("split needs three ratios");
  std::array<double, 3> ratios;
  std::copy(cfg.split_ratios.begin(), cfg.split_ratios.end(), ratios.begin());
  return split_per_user(ds, ratios, cfg.seed);
}

// ---- experiment drivers ----

std::map<std::string, MetricsReport> run_table1(const ExperimentConfig& cfg,
                                                const SplitDataset& split) {
  fs::create_directories(cfg.output_dir);
  PropensityModel prop = PropensityModel::from_dataset(split.train);
  EvalOptions opt = eval_options(cfg);

  std::map<std::string, MetricsReport> reports;
  auto csv = open_out((fs::path(cfg.output_dir) / "table1.csv").string());
  csv << "model,metric,value\n";
  for (const auto& name : cfg.models) {
    AnyModel m = train_any(parse_model_kind(name), split.train, split.train,
                           split.val, cfg, cfg.seed, 1);
    MetricsReport rep = evaluate_ranking(split.train, split.test,
                                         m.scorer(split.train), opt, &prop);
    print_report(name, rep, m.chosen);
    std::ofstream jr =
        open_out((fs::path(cfg.output_dir) / ("report_" + name + ".json")).string());
    jr << rep.to_json() << '\n';
    for (const auto& [metric, value] : rep.values)
      csv << name << ',' << metric << ',' << fmt_g(value) << '\n';
    reports.emplace(name, std::move(rep));
  }
  return reports;
}

std::string run_sample_sweep(const ExperimentConfig& cfg, const SplitDataset& split,
                             const std::string& csv_name) {
  fs::create_directories(cfg.output_dir);
  PropensityModel prop = PropensityModel::from_dataset(split.train);
  EvalOptions opt = eval_options(cfg);
  ModelKind kind = parse_model_kind(cfg.sweep_model);

  std::string path = (fs::path(cfg.output_dir) / csv_name).string();
  auto csv = open_out(path);
  csv << "sampler,budget,metric,value\n";
  for (const auto& sampler : cfg.samplers) {
    for (double budget : cfg.budgets) {
      std::vector<MetricsReport> reps;
      for (int rep = 0; rep < cfg.sweep_seeds; ++rep) {
        std::uint64_t run_seed = derive_seed(cfg.seed, sampler, rep);
        InteractionDataset train_on =
            cell_training_set(sampler, budget, split, cfg, run_seed);
        AnyModel m = train_any(kind, train_on, split.train, split.val, cfg,
                               run_seed, 1);
        reps.push_back(evaluate_ranking(split.train, split.test,
                                        m.scorer(split.train), opt, &prop));
      }
      for (std::size_t i = 0; i < reps[0].values.size(); ++i) {
        std::vector<double> vals;
        for (const auto& r : reps) vals.push_back(r.values[i].second);
        csv << sampler << ',' << fmt_g(budget) << ',' << reps[0].values[i].first
            << ',' << fmt_g(median(std::move(vals))) << '\n';
      }
    }
  }
  return path;
}

std::vector<std::string> run_noise_sweep(const ExperimentConfig& cfg,
                                         const SplitDataset& split) {
  fs::create_directories(cfg.output_dir);
  PropensityModel prop = PropensityModel::from_dataset(split.train);
  EvalOptions opt = eval_options(cfg);

  std::vector<std::string> paths;
  for (const auto& name : cfg.models) {
    ModelKind kind = parse_model_kind(name);
    std::string path =
        (fs::path(cfg.output_dir) / ("noise_sweep_" + name + ".csv")).string();
    auto csv = open_out(path);
    csv << "noise,sampler,budget,metric,value,drop_pct\n";

    // clean full-data reference for the drop column
    AnyModel ref = train_any(kind, split.train, split.train, split.val, cfg,
                             cfg.seed, 1);
    MetricsReport ref_rep = evaluate_ranking(split.train, split.test,
                                             ref.scorer(split.train), opt, &prop);
    auto emit = [&](double noise, const std::string& sampler, double budget,
                    const MetricsReport& rep) {
      for (std::size_t i = 0; i < rep.values.size(); ++i) {
        double v = rep.values[i].second;
        double r = ref_rep.values[i].second;
        double drop = r != 0 ? 100.0 * (r - v) / r : 0.0;
        csv << fmt_g(noise) << ',' << sampler << ',' << fmt_g(budget) << ','
            << rep.values[i].first << ',' << fmt_g(v) << ',' << fmt_g(drop) << '\n';
      }
    };

    for (double noise : cfg.noise_levels) {
      SplitDataset noisy = split;
      if (noise > 0) noisy.train = inject_noise(split.train, noise, cfg.seed);
      // full noisy data first, then each sampler x budget cell
      if (noise == 0) {
        emit(noise, "none", 100, ref_rep);
      } else {
        AnyModel m = train_any(kind, noisy.train, noisy.train, noisy.val, cfg,
                               cfg.seed, 1);
        emit(noise, "none", 100,
             evaluate_ranking(noisy.train, split.test, m.scorer(noisy.train), opt,
                              &prop));
      }
      for (const auto& sampler : cfg.samplers) {
        if (sampler == "none") continue;
        for (double budget : cfg.budgets) {
          std::uint64_t run_seed = derive_seed(cfg.seed, sampler, 0);
          InteractionDataset train_on =
              cell_training_set(sampler, budget, noisy, cfg, run_seed);
          AnyModel m = train_any(kind, train_on, noisy.train, noisy.val, cfg,
                                 run_seed, 1);
          emit(noise, sampler, budget,
               evaluate_ranking(noisy.train, split.test, m.scorer(noisy.train), opt,
                                &prop));
        }
      }
    }
    paths.push_back(path);
  }
  return paths;
}

std::string run_depth_study(const ExperimentConfig& cfg, const SplitDataset& split) {
  fs::create_directories(cfg.output_dir);
  PropensityModel prop = PropensityModel::from_dataset(split.train);
  EvalOptions opt = eval_options(cfg);

  std::string path = (fs::path(cfg.output_dir) / "depth.csv").string();
  auto csv = open_out(path);
  csv << "depth,metric,value\n";
  for (int d : cfg.depths) {
    AnyModel m = train_any(ModelKind::infae, split.train, split.train, split.val,
                           cfg, cfg.seed, d);
    MetricsReport rep = evaluate_ranking(split.train, split.test,
                                         m.scorer(split.train), opt, &prop);
    print_report("depth " + std::to_string(d), rep, m.chosen);
    for (const auto& [metric, value] : rep.values)
      csv << d << ',' << metric << ',' << fmt_g(value) << '\n';
  }
  return path;
}

std::string run_strata(const ExperimentConfig& cfg, const SplitDataset& split) {
  fs::create_directories(cfg.output_dir);
  PropensityModel prop = PropensityModel::from_dataset(split.train);
  EvalOptions opt = eval_options(cfg);

  AnyModel m = train_any(parse_model_kind(cfg.sweep_model), split.train, split.train,
                         split.val, cfg, cfg.seed, 1);
  BlockScorer scorer = m.scorer(split.train);
  auto freq = split.train.item_frequencies();

  std::string path = (fs::path(cfg.output_dir) / "strata.csv").string();
  auto csv = open_out(path);
  csv << "axis,bucket,freq_lo,freq_hi,size,metric,value\n";
  for (auto axis : {StrataAxis::users, StrataAxis::items}) {
    const char* axis_name = axis == StrataAxis::users ? "users" : "items";
    auto strata = evaluate_strata(split.train, split.test, freq, axis,
                                  cfg.strata_buckets, scorer, opt, &prop);
    for (const auto& s : strata)
      for (const auto& [metric, value] : s.metrics.values)
        csv << axis_name << ',' << s.index << ',' << s.freq_lo << ',' << s.freq_hi
            << ',' << s.size << ',' << metric << ',' << fmt_g(value) << '\n';
  }
  return path;
}

std::vector<std::string> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  SplitDataset split = load_split(cfg);

  std::vector<std::string> written;
  if (cfg.kind == "table1") {
    auto reports = run_table1(cfg, split);
    for (const auto& [name, rep] : reports)
      written.push_back((fs::path(cfg.output_dir) / ("report_" + name + ".json")).string());
    written.push_back((fs::path(cfg.output_dir) / "table1.csv").string());
  } else if (cfg.kind == "sample-sweep") {
    written.push_back(run_sample_sweep(cfg, split));
  } else if (cfg.kind == "transfer") {
    ExperimentConfig c = cfg;
    c.sweep_model = "ease";
    written.push_back(run_sample_sweep(c, split, "transfer.csv"));
  } else if (cfg.kind == "noise-sweep") {
    written = run_noise_sweep(cfg, split);
  } else if (cfg.kind == "depth") {
    written.push_back(run_depth_study(cfg, split));
  } else if (cfg.kind == "strata") {
    written.push_back(run_strata(cfg, split));
  } else {
    throw ConfigError("unknown experiment kind '" + cfg.kind + "'");
  }
  return written;
}

}  // namespace kcf
