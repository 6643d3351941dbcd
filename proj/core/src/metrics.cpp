#include "kernelcf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace kcf {

using nlohmann::json;

PropensityModel PropensityModel::from_frequencies(
    const std::vector<std::uint32_t>& freq, std::size_t n_interactions) {
  PropensityModel p;
  double n = static_cast<double>(n_interactions);
  if (std::log(n) <= 1.0)
    throw ConfigError("propensity model needs more than e interactions "
                      "(ln N - 1 must be positive)");
  p.c = (std::log(n) - 1.0) * std::pow(p.b + 1.0, p.a);
  p.phi.resize(freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i)
    p.phi[i] = 1.0 / (1.0 + p.c * std::exp(-p.a * std::log(double(freq[i]) + p.b)));
  return p;
}

PropensityModel PropensityModel::from_dataset(const InteractionDataset& train) {
  return from_frequencies(train.item_frequencies(), train.n_interactions);
}

bool MetricsReport::has(const std::string& name) const {
  for (const auto& [n, v] : values)
    if (n == name) return true;
  return false;
}

double MetricsReport::get(const std::string& name) const {
  for (const auto& [n, v] : values)
    if (n == name) return v;
  throw ConfigError("metric '" + name + "' not present in report");
}

std::string MetricsReport::to_json() const {
  json j;
  j["n_users"] = n_users;
  json m = json::object();
  for (const auto& [n, v] : values) m[n] = v;
  j["metrics"] = m;
  return j.dump(2);
}

namespace {

// Per-user ranking digest: a top list for hit metrics plus average ranks
// (1-based, ties averaged, ascending by score) for AUC. Computed once per
// user and reusable for any positive subset, which is what the item-strata
// path needs.
struct UserDigest {
  std::vector<std::uint32_t> top;   // best max_k unmasked items
  std::vector<double> rank_desc;    // per item: 1-based rank from the top, ties averaged
  std::size_t n_unmasked = 0;
};

void build_digest(const Vector& scores, const std::vector<char>* mask, int max_k,
                  UserDigest& d) {
  const auto n = static_cast<std::size_t>(scores.size());
  std::vector<std::uint32_t> idx;
  idx.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i)
    if (!mask || !(*mask)[i]) idx.push_back(i);
  d.n_unmasked = idx.size();

  auto by_score_desc = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };

  auto k_eff = std::min<std::size_t>(static_cast<std::size_t>(std::max(max_k, 0)),
                                     idx.size());
  d.top.assign(idx.begin(), idx.end());
  std::partial_sort(d.top.begin(), d.top.begin() + k_eff, d.top.end(), by_score_desc);
  d.top.resize(k_eff);

  // average ranks: sort all unmasked by descending score, then walk tie runs
  std::vector<std::uint32_t> order = idx;
  std::sort(order.begin(), order.end(), by_score_desc);
  d.rank_desc.assign(n, 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = (double(i + 1) + double(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) d.rank_desc[order[t]] = avg;
    i = j + 1;
  }
}

double digest_auc(const UserDigest& d, std::span<const std::uint32_t> pos) {
  std::size_t p = 0;
  double rank_sum = 0;  // ascending ranks: N + 1 - rank_desc
  for (auto i : pos) {
    if (d.rank_desc[i] == 0.0) continue;  // masked positive: excluded
    rank_sum += double(d.n_unmasked) + 1.0 - d.rank_desc[i];
    ++p;
  }
  std::size_t n_neg = d.n_unmasked - p;
  if (p == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  return (rank_sum - double(p) * (double(p) + 1.0) / 2.0) / (double(p) * double(n_neg));
}

struct MetricLayout {
  std::vector<std::string> names;
  std::vector<int> ks;
  bool with_psp = false;
  std::size_t count() const { return names.size(); }
};

MetricLayout make_layout(const EvalOptions& opt, bool with_psp) {
  MetricLayout l;
  l.ks = opt.ks;
  std::sort(l.ks.begin(), l.ks.end());
  l.ks.erase(std::unique(l.ks.begin(), l.ks.end()), l.ks.end());
  if (l.ks.empty() || l.ks.front() < 1)
    throw ConfigError("metric cutoffs must be positive");
  l.with_psp = with_psp;
  l.names.push_back("auc");
  for (int k : l.ks) {
    l.names.push_back("hr@" + std::to_string(k));
    l.names.push_back("ndcg@" + std::to_string(k));
    if (with_psp) l.names.push_back("psp@" + std::to_string(k));
  }
  return l;
}

// metrics for one positive subset out of a prepared digest
void digest_metrics(const UserDigest& d, std::span<const std::uint32_t> pos,
                    const MetricLayout& layout, const EvalOptions& opt,
                    const PropensityModel* prop, double* out) {
  std::size_t slot = 0;
  out[slot++] = digest_auc(d, pos);

  auto is_pos = [&](std::uint32_t item) {
    return std::binary_search(pos.begin(), pos.end(), item);
  };
  double idcg_full = 0;
  for (std::size_t i = 1; i <= pos.size(); ++i)
    idcg_full += 1.0 / std::log2(double(i) + 1.0);
  double mpsp = 0;
  if (prop)
    for (auto i : pos) mpsp += 1.0 / prop->phi[i];

  for (int k : layout.ks) {
    auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), d.top.size());
    std::size_t hits = 0;
    double dcg = 0, upsp = 0;
    for (std::size_t r = 0; r < kk; ++r) {
      auto item = d.top[r];
      if (is_pos(item)) {
        ++hits;
        dcg += 1.0 / std::log2(double(r) + 2.0);
        if (prop) upsp += 1.0 / prop->phi[item];
      }
    }
    out[slot++] = pos.empty() ? std::numeric_limits<double>::quiet_NaN()
                              : double(hits) / double(pos.size());
    double idcg = idcg_full;
    if (opt.standard_ndcg) {
      idcg = 0;
      for (std::size_t i = 1; i <= std::min<std::size_t>(pos.size(), std::size_t(k)); ++i)
        idcg += 1.0 / std::log2(double(i) + 1.0);
    }
    out[slot++] = idcg > 0 ? dcg / idcg : std::numeric_limits<double>::quiet_NaN();
    if (prop) {
      upsp /= double(k);
      out[slot++] = mpsp > 0 ? upsp / mpsp : std::numeric_limits<double>::quiet_NaN();
    }
  }
}

std::vector<char> history_mask(const InteractionDataset& history, std::size_t u,
                               bool enabled) {
  std::vector<char> mask(history.num_items(), 0);
  if (enabled)
    for (auto i : history.row(u)) mask[i] = 1;
  return mask;
}

constexpr std::size_t kEvalBlock = 512;

// shared driver: walks eligible users in blocks, builds digests, hands each
// (user, digest) to sink. Parallel inside a block with disjoint writes.
void for_each_digest(const InteractionDataset& history,
                     const InteractionDataset& positives, const BlockScorer& scorer,
                     const EvalOptions& opt, int max_k,
                     const std::function<void(std::size_t, const UserDigest&)>& sink) {
  if (history.num_users() != positives.num_users() ||
      history.item_ids != positives.item_ids)
    throw ConfigError("history and positives must share users and item universe");

  std::vector<std::uint32_t> eligible;
  for (std::size_t u = 0; u < positives.num_users(); ++u)
    if (!positives.rows[u].empty()) eligible.push_back(static_cast<std::uint32_t>(u));
  if (eligible.empty()) throw ConfigError("evaluation set is empty");

  std::vector<UserDigest> digests(kEvalBlock);
  for (std::size_t off = 0; off < eligible.size(); off += kEvalBlock) {
    auto len = std::min(kEvalBlock, eligible.size() - off);
    std::span<const std::uint32_t> block(eligible.data() + off, len);
    Matrix scores = scorer(block);
    if (scores.rows() != static_cast<Eigen::Index>(len) ||
        scores.cols() != static_cast<Eigen::Index>(history.num_items()))
      throw ConfigError("scorer returned a block of the wrong shape");

#pragma omp parallel for schedule(dynamic, 8)
    for (std::size_t r = 0; r < len; ++r) {
      auto u = block[r];
      auto mask = history_mask(history, u, opt.mask_history);
      Vector row = scores.row(static_cast<Eigen::Index>(r)).transpose();
      build_digest(row, opt.mask_history ? &mask : nullptr, max_k, digests[r]);
    }
    // sequential hand-off keeps aggregation order fixed
    for (std::size_t r = 0; r < len; ++r) sink(block[r], digests[r]);
  }
}

MetricsReport average_rows(const MetricLayout& layout,
                           const std::vector<std::vector<double>>& rows) {
  MetricsReport rep;
  std::vector<double> sum(layout.count(), 0.0);
  std::vector<std::size_t> cnt(layout.count(), 0);
  for (const auto& row : rows)
    for (std::size_t m = 0; m < layout.count(); ++m)
      if (!std::isnan(row[m])) {
        sum[m] += row[m];
        ++cnt[m];
      }
  for (std::size_t m = 0; m < layout.count(); ++m)
    rep.values.emplace_back(layout.names[m],
                            cnt[m] ? sum[m] / double(cnt[m])
                                   : std::numeric_limits<double>::quiet_NaN());
  rep.n_users = rows.size();
  return rep;
}

}  // namespace

MetricsReport evaluate_ranking(const InteractionDataset& history,
                               const InteractionDataset& positives,
                               const BlockScorer& scorer, const EvalOptions& opt,
                               const PropensityModel* prop) {
  auto layout = make_layout(opt, prop != nullptr);
  int max_k = layout.ks.back();
  std::vector<std::vector<double>> rows;
  for_each_digest(history, positives, scorer, opt, max_k,
                  [&](std::size_t u, const UserDigest& d) {
                    std::vector<double> row(layout.count());
                    digest_metrics(d, positives.row(u), layout, opt, prop, row.data());
                    rows.push_back(std::move(row));
                  });
  return average_rows(layout, rows);
}

std::vector<StratumReport> evaluate_strata(
    const InteractionDataset& history, const InteractionDataset& positives,
    const std::vector<std::uint32_t>& item_train_freq, StrataAxis axis,
    std::size_t n_buckets, const BlockScorer& scorer, const EvalOptions& opt,
    const PropensityModel* prop) {
  if (n_buckets < 1) throw ConfigError("need at least one stratum");
  auto layout = make_layout(opt, prop != nullptr);
  int max_k = layout.ks.back();

  if (axis == StrataAxis::users) {
    // bucket users by history degree, reusing one evaluation pass
    std::vector<std::pair<std::uint32_t, std::vector<double>>> per_user;
    for_each_digest(history, positives, scorer, opt, max_k,
                    [&](std::size_t u, const UserDigest& d) {
                      std::vector<double> row(layout.count());
                      digest_metrics(d, positives.row(u), layout, opt, prop, row.data());
                      per_user.emplace_back(static_cast<std::uint32_t>(u), std::move(row));
                    });
    std::vector<std::size_t> order(per_user.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      auto da = history.rows[per_user[a].first].size();
      auto db = history.rows[per_user[b].first].size();
      if (da != db) return da < db;
      return per_user[a].first < per_user[b].first;
    });

    std::vector<StratumReport> out;
    std::size_t n = order.size();
    std::size_t base = n / n_buckets, extra = n % n_buckets, off = 0;
    for (std::size_t bkt = 0; bkt < n_buckets; ++bkt) {
      std::size_t sz = base + (bkt < extra ? 1 : 0);
      StratumReport sr;
      sr.index = bkt;
      sr.size = sz;
      std::vector<std::vector<double>> rows;
      for (std::size_t t = 0; t < sz; ++t) {
        const auto& [u, row] = per_user[order[off + t]];
        auto deg = static_cast<std::uint32_t>(history.rows[u].size());
        if (t == 0) sr.freq_lo = deg;
        sr.freq_hi = std::max(sr.freq_hi, deg);
        rows.push_back(row);
      }
      sr.metrics = average_rows(layout, rows);
      off += sz;
      out.push_back(std::move(sr));
    }
    return out;
  }

  // item axis: bucket items by train frequency, restrict positives per bucket
  std::size_t n_items = history.num_items();
  if (item_train_freq.size() != n_items)
    throw ConfigError("item frequency vector does not match the item universe");
  std::vector<std::uint32_t> iorder(n_items);
  std::iota(iorder.begin(), iorder.end(), 0);
  std::sort(iorder.begin(), iorder.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (item_train_freq[a] != item_train_freq[b])
      return item_train_freq[a] < item_train_freq[b];
    return a < b;
  });
  std::vector<std::uint32_t> bucket_of(n_items);
  std::vector<StratumReport> out(n_buckets);
  {
    std::size_t base = n_items / n_buckets, extra = n_items % n_buckets, off = 0;
    for (std::size_t bkt = 0; bkt < n_buckets; ++bkt) {
      std::size_t sz = base + (bkt < extra ? 1 : 0);
      out[bkt].index = bkt;
      out[bkt].size = sz;
      for (std::size_t t = 0; t < sz; ++t) {
        auto item = iorder[off + t];
        bucket_of[item] = static_cast<std::uint32_t>(bkt);
        if (t == 0) out[bkt].freq_lo = item_train_freq[item];
        out[bkt].freq_hi = std::max(out[bkt].freq_hi, item_train_freq[item]);
      }
      off += sz;
    }
  }

  std::vector<std::vector<std::vector<double>>> rows_per_bucket(n_buckets);
  for_each_digest(history, positives, scorer, opt, max_k,
                  [&](std::size_t u, const UserDigest& d) {
                    std::vector<std::uint32_t> sub;
                    for (std::size_t bkt = 0; bkt < n_buckets; ++bkt) {
                      sub.clear();
                      for (auto i : positives.row(u))
                        if (bucket_of[i] == bkt) sub.push_back(i);
                      if (sub.empty()) continue;
                      std::vector<double> row(layout.count());
                      digest_metrics(d, sub, layout, opt, prop, row.data());
                      rows_per_bucket[bkt].push_back(std::move(row));
                    }
                  });
  for (std::size_t bkt = 0; bkt < n_buckets; ++bkt)
    out[bkt].metrics = average_rows(layout, rows_per_bucket[bkt]);
  return out;
}

std::vector<std::uint32_t> top_k_items(const Vector& scores, int k,
                                       const std::vector<char>* mask) {
  UserDigest d;
  build_digest(scores, mask, k, d);
  return d.top;
}

double metric_auc(const Vector& scores, std::span<const std::uint32_t> positives,
                  const std::vector<char>* mask) {
  UserDigest d;
  build_digest(scores, mask, 0, d);
  return digest_auc(d, positives);
}

namespace {
double one_metric(const Vector& scores, std::span<const std::uint32_t> positives,
                  int k, const std::vector<char>* mask, const PropensityModel* prop,
                  bool standard_idcg, std::size_t slot) {
  EvalOptions opt;
  opt.ks = {k};
  opt.standard_ndcg = standard_idcg;
  auto layout = make_layout(opt, prop != nullptr);
  UserDigest d;
  build_digest(scores, mask, k, d);
  std::vector<double> row(layout.count());
  digest_metrics(d, positives, layout, opt, prop, row.data());
  return row[slot];
}
}  // namespace

double metric_hr(const Vector& scores, std::span<const std::uint32_t> positives,
                 int k, const std::vector<char>* mask) {
  return one_metric(scores, positives, k, mask, nullptr, false, 1);
}

double metric_ndcg(const Vector& scores, std::span<const std::uint32_t> positives,
                   int k, const std::vector<char>* mask, bool standard_idcg) {
  return one_metric(scores, positives, k, mask, nullptr, standard_idcg, 2);
}

double metric_psp(const Vector& scores, std::span<const std::uint32_t> positives,
                  int k, const std::vector<char>* mask, const PropensityModel& prop) {
  return one_metric(scores, positives, k, mask, &prop, false, 3);
}

}  // namespace kcf
