#include "kernelcf/summary.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <json.hpp>

namespace kcf {

using nlohmann::json;

namespace {
constexpr int kSummaryVersion = 1;
}

void write_summary(const SampledSummary& s, const std::string& path) {
  json meta;
  meta["version"] = kSummaryVersion;
  meta["kind"] = "sampled_summary";
  meta["mu"] = s.meta.mu;
  meta["n_items"] = s.item_ids.size();
  meta["entries"] = s.entry_count();
  meta["source_hash"] = s.meta.source_hash;
  meta["gamma"] = s.meta.gamma;
  meta["tau"] = s.meta.tau;
  meta["lambda"] = s.meta.lambda;
  meta["lambda2"] = s.meta.lambda2;
  meta["seed"] = s.meta.seed;
  meta["outer_iterations"] = s.meta.outer_iterations;
  meta["item_ids"] = s.item_ids;

  std::vector<std::string> lines;
  lines.reserve(s.entry_count());
  for (std::size_t r = 0; r < s.rows.size(); ++r)
    for (auto c : s.rows[r])
      lines.push_back(std::to_string(r) + '\t' + std::to_string(c));
  std::sort(lines.begin(), lines.end());  // lexicographic, part of the format

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write summary file: " + path);
  out << meta.dump() << '\n';
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

SampledSummary read_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open summary file: " + path);
  std::string header;
  if (!std::getline(in, header))
    throw ConfigError("summary file is empty: " + path);
  json meta = json::parse(header, nullptr, false);
  if (meta.is_discarded())
    throw ConfigError("summary header is not valid JSON: " + path);
  if (meta.value("version", -1) != kSummaryVersion)
    throw ConfigError("unsupported summary version in " + path);

  SampledSummary s;
  s.meta.mu = meta.value("mu", 0u);
  s.meta.gamma = meta.value("gamma", 0u);
  s.meta.tau = meta.value("tau", 0.0);
  s.meta.lambda = meta.value("lambda", 0.0);
  s.meta.lambda2 = meta.value("lambda2", 0.0);
  s.meta.seed = meta.value("seed", std::uint64_t{0});
  s.meta.outer_iterations = meta.value("outer_iterations", 0u);
  s.meta.source_hash = meta.value("source_hash", std::string{});
  s.item_ids = meta.value("item_ids", std::vector<std::string>{});
  auto n_items = meta.value("n_items", std::size_t{0});
  if (s.item_ids.size() != n_items)
    throw ConfigError("summary item universe disagrees with n_items: " + path);

  s.rows.assign(s.meta.mu, {});
  std::size_t expected = meta.value("entries", std::size_t{0});
  std::size_t seen = 0;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    std::uint32_t r = 0, c = 0;
    if (tab == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed entry line");
    auto p1 = std::from_chars(line.data(), line.data() + tab, r);
    auto p2 = std::from_chars(line.data() + tab + 1, line.data() + line.size(), c);
    if (p1.ec != std::errc{} || p2.ec != std::errc{} || r >= s.meta.mu || c >= n_items)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": entry out of range");
    s.rows[r].push_back(c);
    ++seen;
  }
  if (seen != expected)
    throw ConfigError("summary checksum mismatch: header says " +
                      std::to_string(expected) + " entries, file has " +
                      std::to_string(seen));
  for (auto& r : s.rows) {
    std::sort(r.begin(), r.end());
    if (std::adjacent_find(r.begin(), r.end()) != r.end())
      throw ConfigError("summary contains duplicate entries: " + path);
  }
  return s;
}

InteractionDataset summary_to_dataset(const SampledSummary& s) {
  InteractionDataset ds;
  ds.item_ids = s.item_ids;
  ds.user_ids.reserve(s.rows.size());
  for (std::size_t r = 0; r < s.rows.size(); ++r)
    ds.user_ids.push_back("synth_" + std::to_string(r));
  ds.rows = s.rows;
  ds.n_interactions = s.entry_count();
  return ds;
}

}  // namespace kcf
