#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernelcf/harness.hpp"
#include "support.hpp"

using namespace kcf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// parse a CSV body into rows of fields (no quoting needed for our files)
std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    rows.push_back(std::move(f));
  }
  return rows;
}

// write a prepared split of the block dataset and return a config aimed at it
ExperimentConfig block_config(const std::string& tag, std::size_t n_users = 30) {
  auto dir = testsup::scratch_dir(tag);
  auto ds = testsup::blocks(n_users, 20, 6, 77);
  auto sp = split_per_user(ds, {0.8, 0.1, 0.1}, 7);
  write_split_dir(sp, dir + "/split");

  ExperimentConfig cfg;
  cfg.dataset = dir + "/split";
  cfg.output_dir = dir + "/out";
  cfg.seed = 19;
  cfg.models = {"poprec", "ease"};
  cfg.infae_lambda_grid = {1.0, 20.0};
  cfg.ease_lambda_grid = {1.0, 100.0};
  cfg.bias_l2_grid = {1.0};
  cfg.eval_ks = {5, 10};
  cfg.samplers = {"user-rns", "head-user"};
  cfg.budgets = {50, 100};
  cfg.sweep_seeds = 2;
  cfg.sweep_model = "ease";
  cfg.noise_levels = {0, 20};
  cfg.depths = {1, 2};
  cfg.strata_buckets = 3;
  return cfg;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config keys parse into typed fields") {
  ExperimentConfig c;
  c.set("dataset", "somewhere.tsv");
  c.set("format", "csv");
  c.set("rating_threshold", "3.5");
  c.set("split", "0.7, 0.2, 0.1");
  c.set("seed", "99");
  c.set("models", "ease, poprec");
  c.set("infae_lambda_grid", "0,5");
  c.set("eval_ks", "1,5,10");
  c.set("standard_ndcg", "true");
  c.set("budget_absolute", "false");
  c.set("budgets", "10,100");
  c.set("distill_mu", "40");
  c.set("distill_grid", "0.1,5");

  CHECK(c.dataset == "somewhere.tsv");
  CHECK(c.format == "csv");
  CHECK(*c.rating_threshold == 3.5);
  CHECK(c.split_ratios == std::vector<double>{0.7, 0.2, 0.1});
  CHECK(c.seed == 99);
  CHECK(c.models == std::vector<std::string>{"ease", "poprec"});
  CHECK(c.infae_lambda_grid == std::vector<double>{0, 5});
  CHECK(c.eval_ks == std::vector<int>{1, 5, 10});
  CHECK(c.standard_ndcg);
  CHECK(!c.budget_absolute);
  CHECK(c.distill.mu == 40);
  CHECK(c.distill.lambda_grid == std::vector<double>{0.1, 5});

  CHECK_THROWS_AS(c.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("seed", "abc"), ConfigError);
  CHECK_THROWS_AS(c.set("split", "0.5,0.5"), ConfigError);
  CHECK_THROWS_AS(c.set("budgets", "1,abc"), ConfigError);
  CHECK_THROWS_AS(c.set("standard_ndcg", "maybe"), ConfigError);
}

TEST_CASE("config files allow comments and report the offending line") {
  auto dir = testsup::scratch_dir("harness_cfg");
  {
    std::ofstream out(dir + "/good.cfg");
    out << "# full comparison\n"
        << "dataset = d.tsv\n"
        << "\n"
        << "kind = table1   # trailing comment\n"
        << "eval_ks = 10, 100\n";
  }
  auto c = ExperimentConfig::from_file(dir + "/good.cfg");
  CHECK(c.dataset == "d.tsv");
  CHECK(c.kind == "table1");
  CHECK(c.eval_ks == std::vector<int>{10, 100});

  {
    std::ofstream out(dir + "/bad.cfg");
    out << "dataset = d.tsv\nthis line has no equals\n";
  }
  try {
    ExperimentConfig::from_file(dir + "/bad.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK_THROWS_AS(ExperimentConfig::from_file(dir + "/missing.cfg"), ConfigError);
}

TEST_CASE("validation rejects inconsistent settings") {
  ExperimentConfig base;
  base.dataset = "d.tsv";
  base.validate();  // defaults are fine once a dataset is set

  auto bad = [&](auto&& tweak) {
    ExperimentConfig c = base;
    tweak(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](ExperimentConfig& c) { c.dataset.clear(); });
  bad([](ExperimentConfig& c) { c.kind = "tableau"; });
  bad([](ExperimentConfig& c) { c.models = {"resnet"}; });
  bad([](ExperimentConfig& c) { c.models.clear(); });
  bad([](ExperimentConfig& c) { c.infae_lambda_grid.clear(); });
  bad([](ExperimentConfig& c) { c.eval_ks.clear(); });
  bad([](ExperimentConfig& c) { c.budgets.clear(); });
  bad([](ExperimentConfig& c) { c.sweep_seeds = 0; });
  bad([](ExperimentConfig& c) { c.budget_unit = "ratings"; });
  bad([](ExperimentConfig& c) { c.sweep_model = "poprec"; });
  bad([](ExperimentConfig& c) { c.noise_levels = {101}; });
  bad([](ExperimentConfig& c) { c.depths = {0}; });
  bad([](ExperimentConfig& c) { c.split_ratios = {0.5, 0.5}; });
  bad([](ExperimentConfig& c) { c.strata_buckets = 0; });
}

TEST_CASE("full-data comparison writes one report per model plus a table") {
  auto cfg = block_config("harness_table1");
  cfg.models = {"poprec", "bias", "ease", "infae"};
  auto split = load_split(cfg);
  auto reports = run_table1(cfg, split);
  REQUIRE(reports.size() == 4);

  auto rows = csv_rows(slurp(cfg.output_dir + "/table1.csv"));
  REQUIRE(!rows.empty());
  CHECK(rows[0] == std::vector<std::string>{"model", "metric", "value"});
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 3);
    seen.insert(rows[i][0]);
  }
  CHECK(seen == std::set<std::string>{"poprec", "bias", "ease", "infae"});

  for (const auto& name : {"poprec", "bias", "ease", "infae"}) {
    CHECK(fs::exists(cfg.output_dir + "/report_" + std::string(name) + ".json"));
    const auto& rep = reports.at(name);
    CHECK(rep.has("auc"));
    CHECK(rep.has("hr@10"));
    CHECK(rep.has("ndcg@10"));
    CHECK(rep.has("psp@10"));  // propensity model comes from the train split
  }
  // the structured data beats popularity on this clustered toy set
  CHECK(reports.at("ease").get("hr@10") > reports.at("poprec").get("hr@10"));
}

TEST_CASE("sampler sweep covers every cell with finite medians") {
  auto cfg = block_config("harness_sweep");
  auto split = load_split(cfg);
  auto path = run_sample_sweep(cfg, split);
  auto rows = csv_rows(slurp(path));
  REQUIRE(!rows.empty());
  CHECK(rows[0] == std::vector<std::string>{"sampler", "budget", "metric", "value"});

  std::set<std::pair<std::string, std::string>> cells;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 4);
    cells.insert({rows[i][0], rows[i][1]});
    double v = std::stod(rows[i][3]);
    CHECK(std::isfinite(v));
  }
  CHECK(cells == std::set<std::pair<std::string, std::string>>{
                     {"user-rns", "50"}, {"user-rns", "100"},
                     {"head-user", "50"}, {"head-user", "100"}});
}

TEST_CASE("distillation inside a sweep caches its checkpoint in the output dir") {
  auto cfg = block_config("harness_sweep_dcf");
  cfg.samplers = {"distill-cf"};
  cfg.budgets = {50};
  cfg.sweep_seeds = 1;
  cfg.distill.max_outer = 2;
  cfg.distill.val_every = 1;
  cfg.distill.gamma = 3;
  cfg.distill.batch_size = 16;
  cfg.distill.lambda_grid = {0.1, 5.0};
  auto split = load_split(cfg);
  auto path = run_sample_sweep(cfg, split);
  auto first = slurp(path);
  CHECK(csv_rows(first).size() > 1);

  bool found = false;
  for (const auto& e : fs::directory_iterator(cfg.output_dir))
    if (e.path().filename().string().rfind("distill_", 0) == 0 &&
        e.path().extension() == ".ck")
      found = true;
  CHECK(found);

  // a second run resumes from the finished checkpoint and reproduces the CSV
  auto again = slurp(run_sample_sweep(cfg, split));
  CHECK(again == first);
}

TEST_CASE("noise sweep reports drops against the clean full-data reference") {
  auto cfg = block_config("harness_noise");
  cfg.models = {"ease"};
  cfg.samplers = {"user-rns"};
  cfg.budgets = {50};
  cfg.sweep_seeds = 1;
  auto split = load_split(cfg);
  auto paths = run_noise_sweep(cfg, split);
  REQUIRE(paths.size() == 1);
  CHECK(paths[0].find("noise_sweep_ease.csv") != std::string::npos);

  auto rows = csv_rows(slurp(paths[0]));
  REQUIRE(!rows.empty());
  CHECK(rows[0] == std::vector<std::string>{"noise", "sampler", "budget", "metric",
                                            "value", "drop_pct"});
  bool saw_ref = false;
  std::set<std::string> noises;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 6);
    noises.insert(rows[i][0]);
    if (rows[i][0] == "0" && rows[i][1] == "none") {
      saw_ref = true;
      CHECK(std::stod(rows[i][5]) == 0.0);  // the reference cannot drop
    }
  }
  CHECK(saw_ref);
  CHECK(noises == std::set<std::string>{"0", "20"});
}

TEST_CASE("depth study and strata emit their tables") {
  auto cfg = block_config("harness_depth", 20);
  cfg.models = {"infae"};
  auto split = load_split(cfg);

  auto dpath = run_depth_study(cfg, split);
  auto drows = csv_rows(slurp(dpath));
  CHECK(drows[0] == std::vector<std::string>{"depth", "metric", "value"});
  std::set<std::string> depths;
  for (std::size_t i = 1; i < drows.size(); ++i) depths.insert(drows[i][0]);
  CHECK(depths == std::set<std::string>{"1", "2"});

  auto spath = run_strata(cfg, split);
  auto srows = csv_rows(slurp(spath));
  CHECK(srows[0] == std::vector<std::string>{"axis", "bucket", "freq_lo", "freq_hi",
                                             "size", "metric", "value"});
  std::set<std::string> axes;
  for (std::size_t i = 1; i < srows.size(); ++i) {
    REQUIRE(srows[i].size() == 7);
    axes.insert(srows[i][0]);
  }
  CHECK(axes == std::set<std::string>{"users", "items"});
}

TEST_CASE("the dispatcher routes kinds and the transfer sweep forces ease") {
  auto cfg = block_config("harness_dispatch");
  cfg.kind = "transfer";
  cfg.sweep_model = "infae";  // must be overridden by the transfer kind
  auto written = run_experiment(cfg);
  REQUIRE(written.size() == 1);
  CHECK(written[0].find("transfer.csv") != std::string::npos);
  CHECK(fs::exists(written[0]));

  cfg.kind = "does-not-exist";
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

#ifdef _OPENMP
TEST_CASE("experiment outputs are byte-identical across worker-pool sizes") {
  auto cfg = block_config("harness_threads");
  cfg.models = {"ease", "infae"};
  auto split = load_split(cfg);

  int saved = omp_get_max_threads();
  cfg.output_dir += "/t1";
  omp_set_num_threads(1);
  run_table1(cfg, split);
  auto run1_table = slurp(cfg.output_dir + "/table1.csv");
  auto run1_rep = slurp(cfg.output_dir + "/report_infae.json");

  cfg.output_dir = cfg.output_dir.substr(0, cfg.output_dir.size() - 3) + "/t4";
  omp_set_num_threads(4);
  run_table1(cfg, split);
  omp_set_num_threads(saved);

  CHECK(slurp(cfg.output_dir + "/table1.csv") == run1_table);
  CHECK(slurp(cfg.output_dir + "/report_infae.json") == run1_rep);
}
#endif

}  // TEST_SUITE
