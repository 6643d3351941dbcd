#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "kernelcf/metrics.hpp"
#include "support.hpp"

using namespace kcf;

namespace {

// Independent brute-force references, written directly from the formulas.

std::vector<std::uint32_t> ranked_items(const Vector& scores,
                                        const std::vector<char>* mask) {
  std::vector<std::uint32_t> order;
  for (std::uint32_t i = 0; i < scores.size(); ++i)
    if (!mask || !(*mask)[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

double brute_auc(const Vector& s, const std::vector<std::uint32_t>& pos,
                 const std::vector<char>* mask) {
  std::set<std::uint32_t> p(pos.begin(), pos.end());
  double wins = 0;
  std::size_t pairs = 0;
  for (auto i : pos) {
    for (std::uint32_t j = 0; j < s.size(); ++j) {
      if (p.count(j) || (mask && (*mask)[j])) continue;
      ++pairs;
      if (s[i] > s[j]) wins += 1;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return pairs ? wins / double(pairs) : 0.5;
}

double brute_hr(const Vector& s, const std::vector<std::uint32_t>& pos, int k,
                const std::vector<char>* mask) {
  auto order = ranked_items(s, mask);
  std::set<std::uint32_t> p(pos.begin(), pos.end());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size() && r < std::size_t(k); ++r)
    hits += p.count(order[r]);
  return double(hits) / double(pos.size());
}

double brute_ndcg(const Vector& s, const std::vector<std::uint32_t>& pos, int k,
                  const std::vector<char>* mask, bool standard) {
  auto order = ranked_items(s, mask);
  std::set<std::uint32_t> p(pos.begin(), pos.end());
  double dcg = 0;
  for (std::size_t r = 0; r < order.size() && r < std::size_t(k); ++r)
    if (p.count(order[r])) dcg += 1.0 / std::log2(double(r) + 2.0);
  std::size_t ideal = pos.size();
  if (standard) ideal = std::min<std::size_t>(ideal, std::size_t(k));
  double idcg = 0;
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(double(r) + 2.0);
  return idcg > 0 ? dcg / idcg : 0.0;
}

double brute_psp(const Vector& s, const std::vector<std::uint32_t>& pos, int k,
                 const std::vector<char>* mask, const PropensityModel& prop) {
  auto order = ranked_items(s, mask);
  std::set<std::uint32_t> p(pos.begin(), pos.end());
  double upsp = 0;
  for (std::size_t r = 0; r < order.size() && r < std::size_t(k); ++r)
    if (p.count(order[r])) upsp += 1.0 / prop.phi[order[r]];
  upsp /= double(k);
  double mpsp = 0;
  for (auto i : pos) mpsp += 1.0 / prop.phi[i];
  return mpsp > 0 ? upsp / mpsp : 0.0;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("propensity matches the closed form to 1e-12") {
  std::vector<std::uint32_t> freq(50, 1);
  freq[7] = 10;
  auto prop = PropensityModel::from_frequencies(freq, 1000);
  // phi for N=1000, n_i=10, A=0.55, B=1.5, natural logs (30-digit oracle)
  CHECK(prop.phi[7] == doctest::Approx(0.2815198789301025).epsilon(1e-12));
  CHECK(prop.c == doctest::Approx(9.778888667096559).epsilon(1e-12));
  for (double f : prop.phi) {
    CHECK(f > 0.0);
    CHECK(f <= 1.0);
  }
  // more frequent -> easier to observe -> larger phi
  CHECK(prop.phi[7] > prop.phi[0]);
}

TEST_CASE("propensity rejects degenerate interaction counts") {
  std::vector<std::uint32_t> freq(3, 1);
  CHECK_THROWS_AS(PropensityModel::from_frequencies(freq, 2), ConfigError);
}

TEST_CASE("single-list primitives match brute force on 100 random instances") {
  std::mt19937 gen(101);
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<std::uint32_t> freq(10);
  for (auto& f : freq) f = 1 + gen() % 20;
  auto prop = PropensityModel::from_frequencies(
      freq, std::accumulate(freq.begin(), freq.end(), 0u));

  for (int inst = 0; inst < 100; ++inst) {
    Vector s(10);
    for (int i = 0; i < 10; ++i) s[i] = U(gen);
    if (inst % 3 == 0) {        // exercise tie handling
      s[gen() % 10] = 0.5;
      s[gen() % 10] = 0.5;
    }
    std::vector<std::uint32_t> pos;
    for (std::uint32_t i = 0; i < 10; ++i)
      if (gen() % 3 == 0) pos.push_back(i);
    if (pos.empty()) pos.push_back(gen() % 10);
    if (pos.size() == 10) pos.pop_back();

    std::vector<char> mask(10, 0);
    const std::vector<char>* m = nullptr;
    if (inst % 4 == 0) {        // mask an occasional non-positive item
      std::set<std::uint32_t> p(pos.begin(), pos.end());
      for (std::uint32_t i = 0; i < 10; ++i)
        if (!p.count(i)) { mask[i] = 1; m = &mask; break; }
    }

    for (int k : {1, 3, 10}) {
      CAPTURE(inst);
      CAPTURE(k);
      CHECK(metric_auc(s, pos, m) == doctest::Approx(brute_auc(s, pos, m)).epsilon(1e-10));
      CHECK(metric_hr(s, pos, k, m) ==
            doctest::Approx(brute_hr(s, pos, k, m)).epsilon(1e-10));
      CHECK(metric_ndcg(s, pos, k, m) ==
            doctest::Approx(brute_ndcg(s, pos, k, m, false)).epsilon(1e-10));
      CHECK(metric_ndcg(s, pos, k, m, true) ==
            doctest::Approx(brute_ndcg(s, pos, k, m, true)).epsilon(1e-10));
      CHECK(metric_psp(s, pos, k, m, prop) ==
            doctest::Approx(brute_psp(s, pos, k, m, prop)).epsilon(1e-10));
    }
  }
}

TEST_CASE("frozen scalar examples") {
  Vector s(5);
  s << 5, 4, 3, 2, 1;

  // one positive ranked first / second
  CHECK(metric_ndcg(s, std::vector<std::uint32_t>{0}, 5, nullptr) == 1.0);
  CHECK(metric_ndcg(s, std::vector<std::uint32_t>{1}, 5, nullptr) ==
        doctest::Approx(0.6309297535714574).epsilon(1e-12));

  // 3 positives, k=2, both top slots hit; untruncated ideal includes rank 3
  std::vector<std::uint32_t> pos3 = {0, 1, 4};
  CHECK(metric_ndcg(s, pos3, 2, nullptr) ==
        doctest::Approx(0.7653606369886217).epsilon(1e-12));
  // the k-truncated convention instead normalizes by the two best slots
  CHECK(metric_ndcg(s, pos3, 2, nullptr, true) == 1.0);

  CHECK(metric_hr(s, pos3, 2, nullptr) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(metric_auc(s, std::vector<std::uint32_t>{0}, nullptr) == 1.0);
  Vector flat = Vector::Ones(5);
  CHECK(metric_auc(flat, std::vector<std::uint32_t>{0}, nullptr) == 0.5);
}

TEST_CASE("metrics are invariant under strictly monotone score transforms") {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> U(-2, 2);
  std::vector<std::uint32_t> freq(12, 3);
  auto prop = PropensityModel::from_frequencies(freq, 36);
  for (int t = 0; t < 20; ++t) {
    Vector s(12);
    for (int i = 0; i < 12; ++i) s[i] = U(gen);
    std::vector<std::uint32_t> pos = {std::uint32_t(gen() % 12),
                                      std::uint32_t(gen() % 12)};
    if (pos[0] == pos[1]) pos.pop_back();
    Vector warped = (3.0 * s).array().exp().matrix();  // strictly increasing
    CHECK(metric_auc(s, pos, nullptr) == metric_auc(warped, pos, nullptr));
    CHECK(metric_hr(s, pos, 3, nullptr) == metric_hr(warped, pos, 3, nullptr));
    CHECK(metric_ndcg(s, pos, 3, nullptr) == metric_ndcg(warped, pos, 3, nullptr));
    CHECK(metric_psp(s, pos, 3, nullptr, prop) ==
          metric_psp(warped, pos, 3, nullptr, prop));
  }
}

TEST_CASE("evaluation masks history and follows the fixed user order") {
  // two users; user 0's history hides item 0, which would otherwise rank first
  auto history = testsup::from_rows({{0}, {1}}, 4);
  auto positives = testsup::from_rows({{1}, {3}}, 4);
  Matrix fixed(2, 4);
  fixed << 10, 5, 1, 0,
           10, 5, 1, 0;
  BlockScorer scorer = [&](std::span<const std::uint32_t> users) {
    Matrix m(users.size(), 4);
    for (std::size_t r = 0; r < users.size(); ++r) m.row(r) = fixed.row(users[r]);
    return m;
  };
  EvalOptions opt;
  opt.ks = {1};
  auto rep = evaluate_ranking(history, positives, scorer, opt);
  REQUIRE(rep.n_users == 2);
  // user 0: item 0 masked -> item 1 tops the list (hit); user 1: item 1
  // masked -> item 0 tops the list (miss)
  CHECK(rep.get("hr@1") == doctest::Approx(0.5).epsilon(1e-12));

  EvalOptions keep = opt;
  keep.mask_history = false;
  auto rep2 = evaluate_ranking(history, positives, scorer, keep);
  CHECK(rep2.get("hr@1") == 0.0);  // item 0 outranks both targets
}

TEST_CASE("report layout is auc then per-k blocks") {
  auto history = testsup::blocks(12, 20, 5, 3);
  auto positives = testsup::blocks(12, 20, 2, 4);
  BlockScorer scorer = [&](std::span<const std::uint32_t> users) {
    Matrix m = Matrix::Zero(users.size(), 20);
    for (std::size_t r = 0; r < users.size(); ++r)
      for (int i = 0; i < 20; ++i) m(r, i) = double((users[r] * 7 + i * 13) % 20);
    return m;
  };
  EvalOptions opt;
  opt.ks = {5, 10};
  auto rep = evaluate_ranking(history, positives, scorer, opt);
  std::vector<std::string> names;
  for (const auto& [n, v] : rep.values) names.push_back(n);
  CHECK(names == std::vector<std::string>{"auc", "hr@5", "ndcg@5", "hr@10",
                                          "ndcg@10"});
  CHECK(rep.has("auc"));
  CHECK(!rep.has("psp@5"));  // no propensity model supplied
}

TEST_CASE("strata cover every user once and recompose the global metric") {
  auto ds = testsup::blocks(40, 30, 8, 9);
  auto sp = split_per_user(ds, {0.8, 0.1, 0.1}, 5);
  BlockScorer scorer = [&](std::span<const std::uint32_t> users) {
    Matrix m(users.size(), 30);
    for (std::size_t r = 0; r < users.size(); ++r)
      for (int i = 0; i < 30; ++i) m(r, i) = double((users[r] * 11 + i * 3) % 17);
    return m;
  };
  EvalOptions opt;
  opt.ks = {10};
  auto freq = sp.train.item_frequencies();

  auto by_user = evaluate_strata(sp.train, sp.test, freq, StrataAxis::users, 4,
                                 scorer, opt);
  REQUIRE(by_user.size() == 4);
  std::size_t total = 0;
  double hr_sum = 0;
  for (const auto& s : by_user) {
    total += s.size;
    hr_sum += s.metrics.get("hr@10") * double(s.size);
    CHECK(s.freq_lo <= s.freq_hi);
  }
  CHECK(total == 40);
  auto global = evaluate_ranking(sp.train, sp.test, scorer, opt);
  // user buckets partition the scored users, so the size-weighted average
  // recomposes the global value
  CHECK(hr_sum / 40.0 == doctest::Approx(global.get("hr@10")).epsilon(1e-12));

  auto by_item = evaluate_strata(sp.train, sp.test, freq, StrataAxis::items, 4,
                                 scorer, opt);
  REQUIRE(by_item.size() == 4);
  std::size_t items_covered = 0;
  for (const auto& s : by_item) items_covered += s.size;
  CHECK(items_covered == 30);

  // a single bucket reproduces the global report on the user axis
  auto one = evaluate_strata(sp.train, sp.test, freq, StrataAxis::users, 1,
                             scorer, opt);
  REQUIRE(one.size() == 1);
  CHECK(one[0].metrics.get("hr@10") == global.get("hr@10"));
  CHECK(one[0].metrics.get("auc") == global.get("auc"));
}

}  // TEST_SUITE
