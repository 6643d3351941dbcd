#include "kernelcf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "kernelcf/rng.hpp"

namespace kcf {

namespace fs = std::filesystem;
using nlohmann::json;

LoadFormat parse_format(std::string_view name) {
  if (name == "tsv") return LoadFormat::tsv;
  if (name == "csv") return LoadFormat::csv;
  if (name == "ml-delim") return LoadFormat::ml_delim;
  throw ConfigError("unknown dataset format '" + std::string(name) +
                    "' (expected tsv, csv or ml-delim)");
}

bool InteractionDataset::has_entry(std::size_t u, std::uint32_t i) const {
  const auto& r = rows[u];
  return std::binary_search(r.begin(), r.end(), i);
}

std::vector<std::uint32_t> InteractionDataset::item_frequencies() const {
  std::vector<std::uint32_t> freq(num_items(), 0);
  for (const auto& r : rows)
    for (auto i : r) ++freq[i];
  return freq;
}

std::vector<std::uint32_t> InteractionDataset::user_degrees() const {
  std::vector<std::uint32_t> deg(num_users());
  for (std::size_t u = 0; u < rows.size(); ++u)
    deg[u] = static_cast<std::uint32_t>(rows[u].size());
  return deg;
}

std::uint64_t InteractionDataset::content_hash() const {
  std::uint64_t h = kFnvOffset;
  h = fnv1a64_u64(num_users(), h);
  h = fnv1a64_u64(num_items(), h);
  for (std::size_t u = 0; u < rows.size(); ++u) {
    h = fnv1a64_u64(rows[u].size(), h);
    for (auto i : rows[u]) h = fnv1a64_u64(i, h);
  }
  return h;
}

InteractionDataset dataset_from_entries(
    std::vector<std::string> user_ids, std::vector<std::string> item_ids,
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& entries) {
  InteractionDataset ds;
  ds.user_ids = std::move(user_ids);
  ds.item_ids = std::move(item_ids);
  ds.rows.resize(ds.user_ids.size());
  for (auto [u, i] : entries) {
    if (u >= ds.rows.size() || i >= ds.item_ids.size())
      throw ConfigError("entry index out of range while building dataset");
    ds.rows[u].push_back(i);
  }
  ds.n_interactions = 0;
  for (auto& r : ds.rows) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    ds.n_interactions += r.size();
  }
  return ds;
}

namespace {

// splits on a one-or-two character delimiter; keeps empty fields
void split_fields(std::string_view line, std::string_view delim,
                  std::vector<std::string_view>& out) {
  out.clear();
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(delim, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + delim.size();
  }
}

double parse_rating(std::string_view field, const std::string& path, std::size_t lineno) {
  double v = 0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || p != field.data() + field.size())
    throw ConfigError(path + ":" + std::to_string(lineno) +
                      ": malformed rating field '" + std::string(field) + "'");
  return v;
}

}  // namespace

InteractionDataset load_interactions(const std::string& path, LoadFormat format,
                                     std::optional<double> rating_threshold) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);

  std::string_view delim = format == LoadFormat::tsv   ? "\t"
                           : format == LoadFormat::csv ? ","
                                                       : "::";

  InteractionDataset ds;
  std::unordered_map<std::string, std::uint32_t> umap, imap;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;

  std::string line;
  std::vector<std::string_view> f;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    split_fields(line, delim, f);
    if (f.size() < 3 || f.size() > 4 || f[0].empty() || f[1].empty())
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": malformed record (want user, item, rating[, timestamp])");
    double rating = parse_rating(f[2], path, lineno);
    if (rating_threshold && rating < *rating_threshold) continue;

    auto [uit, unew] = umap.try_emplace(std::string(f[0]),
                                        static_cast<std::uint32_t>(umap.size()));
    if (unew) ds.user_ids.emplace_back(f[0]);
    auto [iit, inew] = imap.try_emplace(std::string(f[1]),
                                        static_cast<std::uint32_t>(imap.size()));
    if (inew) ds.item_ids.emplace_back(f[1]);
    entries.emplace_back(uit->second, iit->second);
  }
  if (entries.empty())
    throw ConfigError("dataset is empty after loading: " + path);

  return dataset_from_entries(std::move(ds.user_ids), std::move(ds.item_ids), entries);
}

SplitDataset split_per_user(const InteractionDataset& ds,
                            std::array<double, 3> ratios, std::uint64_t seed,
                            std::uint32_t min_interactions) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split ratios must be positive and sum to 1");

  std::vector<std::uint32_t> keep;
  for (std::size_t u = 0; u < ds.num_users(); ++u)
    if (ds.rows[u].size() >= min_interactions)
      keep.push_back(static_cast<std::uint32_t>(u));
  if (keep.empty())
    throw ConfigError("no users left after pruning (min interactions " +
                      std::to_string(min_interactions) + ")");

  SplitDataset sp;
  sp.ratios = ratios;
  sp.seed = seed;
  for (auto& part : {&sp.train, &sp.val, &sp.test}) {
    part->item_ids = ds.item_ids;
    part->rows.resize(keep.size());
  }
  sp.train.user_ids.reserve(keep.size());
  for (auto u : keep) sp.train.user_ids.push_back(ds.user_ids[u]);
  sp.val.user_ids = sp.train.user_ids;
  sp.test.user_ids = sp.train.user_ids;

  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto& items = ds.rows[keep[r]];
    auto n = items.size();
    auto n_test = std::max<std::size_t>(1, std::llround(ratios[2] * double(n)));
    auto n_val = std::max<std::size_t>(1, std::llround(ratios[1] * double(n)));
    if (n_test + n_val >= n)
      throw ConfigError("split ratios leave no train interactions for user '" +
                        sp.train.user_ids[r] + "'");

    std::vector<std::uint32_t> order(items.begin(), items.end());
    RngStream rng(seed, "split", r);
    rng.shuffle(order);

    auto& test = sp.test.rows[r];
    auto& val = sp.val.rows[r];
    auto& train = sp.train.rows[r];
    test.assign(order.begin(), order.begin() + n_test);
    val.assign(order.begin() + n_test, order.begin() + n_test + n_val);
    train.assign(order.begin() + n_test + n_val, order.end());
    for (auto* part : {&test, &val, &train}) std::sort(part->begin(), part->end());
  }
  for (auto* part : {&sp.train, &sp.val, &sp.test}) {
    part->n_interactions = 0;
    for (const auto& r : part->rows) part->n_interactions += r.size();
  }
  return sp;
}

InteractionDataset inject_noise(const InteractionDataset& ds, double x_percent,
                                std::uint64_t seed) {
  if (x_percent < 0 || x_percent > 100)
    throw ConfigError("noise level must lie in [0, 100]");
  auto flips = static_cast<std::uint32_t>(
      std::llround(x_percent / 100.0 * double(ds.num_items())));

  InteractionDataset out;
  out.user_ids = ds.user_ids;
  out.item_ids = ds.item_ids;
  out.rows.resize(ds.num_users());
  out.n_interactions = 0;
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    if (flips == 0) {
      out.rows[u] = ds.rows[u];
    } else {
      RngStream rng(seed, "noise", u);
      auto cols = rng.sample_without_replacement(
          static_cast<std::uint32_t>(ds.num_items()), flips);
      std::sort(cols.begin(), cols.end());
      // symmetric difference flips membership of the chosen columns
      std::vector<std::uint32_t> flipped;
      flipped.reserve(ds.rows[u].size() + cols.size());
      std::set_symmetric_difference(ds.rows[u].begin(), ds.rows[u].end(),
                                    cols.begin(), cols.end(),
                                    std::back_inserter(flipped));
      out.rows[u] = std::move(flipped);
    }
    out.n_interactions += out.rows[u].size();
  }
  return out;
}

Matrix to_dense(const InteractionDataset& ds) {
  Matrix m = Matrix::Zero(ds.num_users(), ds.num_items());
  for (std::size_t u = 0; u < ds.num_users(); ++u)
    for (auto i : ds.rows[u]) m(static_cast<Eigen::Index>(u), i) = 1.0;
  return m;
}

void write_interactions(const InteractionDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write dataset file: " + path);
  for (std::size_t u = 0; u < ds.num_users(); ++u)
    for (auto i : ds.rows[u])
      out << ds.user_ids[u] << '\t' << ds.item_ids[i] << "\t1\n";
  if (!out) throw ConfigError("write failed: " + path);
}

namespace {

constexpr int kSplitVersion = 1;

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write: " + path);
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_part_tsv(const InteractionDataset& part, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write: " + path);
  for (std::size_t u = 0; u < part.num_users(); ++u)
    for (auto i : part.rows[u]) out << u << '\t' << i << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

void read_part_tsv(InteractionDataset& part, const std::string& path) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    std::uint32_t u = 0, i = 0;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed split row");
    auto r1 = std::from_chars(line.data(), line.data() + tab, u);
    auto r2 = std::from_chars(line.data() + tab + 1, line.data() + line.size(), i);
    if (r1.ec != std::errc{} || r2.ec != std::errc{})
      throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed split row");
    entries.emplace_back(u, i);
  }
  auto rebuilt = dataset_from_entries(part.user_ids, part.item_ids, entries);
  part.rows = std::move(rebuilt.rows);
  part.n_interactions = rebuilt.n_interactions;
}

}  // namespace

void write_split_dir(const SplitDataset& sp, const std::string& dir) {
  fs::create_directories(dir);
  json meta;
  meta["version"] = kSplitVersion;
  meta["seed"] = sp.seed;
  meta["ratios"] = {sp.ratios[0], sp.ratios[1], sp.ratios[2]};
  meta["n_users"] = sp.train.num_users();
  meta["n_items"] = sp.train.num_items();
  meta["train_interactions"] = sp.train.n_interactions;
  meta["val_interactions"] = sp.val.n_interactions;
  meta["test_interactions"] = sp.test.n_interactions;
  meta["train_hash"] = hex_u64(sp.train.content_hash());
  std::ofstream mout(dir + "/meta.json", std::ios::trunc);
  if (!mout) throw ConfigError("cannot write: " + dir + "/meta.json");
  mout << meta.dump(2) << '\n';

  write_lines(dir + "/users.txt", sp.train.user_ids);
  write_lines(dir + "/items.txt", sp.train.item_ids);
  write_part_tsv(sp.train, dir + "/train.tsv");
  write_part_tsv(sp.val, dir + "/val.tsv");
  write_part_tsv(sp.test, dir + "/test.tsv");
}

SplitDataset read_split_dir(const std::string& dir) {
  std::ifstream min(dir + "/meta.json");
  if (!min) throw ConfigError("cannot open split metadata: " + dir + "/meta.json");
  json meta = json::parse(min, nullptr, false);
  if (meta.is_discarded()) throw ConfigError("invalid JSON in " + dir + "/meta.json");
  if (meta.value("version", -1) != kSplitVersion)
    throw ConfigError("unsupported split directory version in " + dir);

  SplitDataset sp;
  sp.seed = meta.value("seed", std::uint64_t{0});
  auto rats = meta.value("ratios", std::vector<double>{0.8, 0.1, 0.1});
  if (rats.size() == 3) sp.ratios = {rats[0], rats[1], rats[2]};

  auto users = read_lines(dir + "/users.txt");
  auto items = read_lines(dir + "/items.txt");
  if (users.size() != meta.value("n_users", std::size_t{0}) ||
      items.size() != meta.value("n_items", std::size_t{0}))
    throw ConfigError("split directory id files disagree with meta.json in " + dir);

  for (auto* part : {&sp.train, &sp.val, &sp.test}) {
    part->user_ids = users;
    part->item_ids = items;
    part->rows.assign(users.size(), {});
  }
  read_part_tsv(sp.train, dir + "/train.tsv");
  read_part_tsv(sp.val, dir + "/val.tsv");
  read_part_tsv(sp.test, dir + "/test.tsv");

  if (sp.train.n_interactions != meta.value("train_interactions", std::size_t{0}) ||
      sp.val.n_interactions != meta.value("val_interactions", std::size_t{0}) ||
      sp.test.n_interactions != meta.value("test_interactions", std::size_t{0}))
    throw ConfigError("split directory entry counts disagree with meta.json in " + dir);
  return sp;
}

}  // namespace kcf
