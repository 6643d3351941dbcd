#include "kernelcf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "binio.hpp"
#include "kernelcf/linalg.hpp"
#include "kernelcf/rng.hpp"

namespace kcf {

using nlohmann::json;

// ---- model container helpers ----

ModelKind peek_model_kind(const std::string& path) {
  detail::BinReader r(path);
  auto kind = detail::read_magic(r);
  if (kind > 3) throw ConfigError("unknown model kind in " + path);
  return static_cast<ModelKind>(kind);
}

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::infae: return "infae";
    case ModelKind::ease: return "ease";
    case ModelKind::bias: return "bias";
    case ModelKind::poprec: return "poprec";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "infae") return ModelKind::infae;
  if (name == "ease") return ModelKind::ease;
  if (name == "bias") return ModelKind::bias;
  if (name == "poprec") return ModelKind::poprec;
  throw ConfigError("unknown model kind '" + name +
                    "' (expected infae, ease, bias or poprec)");
}

// ---- popularity ----

PopRecModel poprec_fit(const InteractionDataset& train) {
  PopRecModel m;
  m.item_ids = train.item_ids;
  auto freq = train.item_frequencies();
  m.item_score.assign(freq.begin(), freq.end());
  return m;
}

BlockScorer make_scorer(const PopRecModel& m, const InteractionDataset& history) {
  if (history.num_items() != m.item_score.size())
    throw ConfigError("popularity model item universe mismatch");
  Vector row = Eigen::Map<const Vector>(m.item_score.data(),
                                        static_cast<Eigen::Index>(m.item_score.size()));
  return [row](std::span<const std::uint32_t> users) {
    Matrix s(users.size(), row.size());
    for (std::size_t r = 0; r < users.size(); ++r) s.row(r) = row.transpose();
    return s;
  };
}

// ---- bias-only ----

namespace {

struct BiasDesign {
  std::vector<std::uint32_t> user, item;
  std::vector<double> target;
  std::size_t size() const { return target.size(); }
};

// positives interleaved with their sampled negatives; negatives are drawn
// uniformly from the user's unobserved items through a per-user keyed stream
BiasDesign build_design(const InteractionDataset& train, std::uint64_t seed,
                        int negatives_per_positive) {
  BiasDesign d;
  const auto n_items = static_cast<std::uint32_t>(train.num_items());
  for (std::size_t u = 0; u < train.num_users(); ++u) {
    const auto& pos = train.rows[u];
    std::vector<std::uint32_t> complement;
    complement.reserve(n_items - pos.size());
    for (std::uint32_t i = 0, p = 0; i < n_items; ++i) {
      if (p < pos.size() && pos[p] == i) { ++p; continue; }
      complement.push_back(i);
    }
    RngStream rng(seed, "bias-neg", u);
    for (auto i : pos) {
      d.user.push_back(static_cast<std::uint32_t>(u));
      d.item.push_back(i);
      d.target.push_back(1.0);
      if (!complement.empty()) {
        for (int t = 0; t < negatives_per_positive; ++t) {
          d.user.push_back(static_cast<std::uint32_t>(u));
          d.item.push_back(complement[rng.next_below(complement.size())]);
          d.target.push_back(0.0);
        }
      }
    }
  }
  return d;
}

double design_loss(const BiasModel& m, const BiasDesign& d) {
  double loss = 0;
  for (std::size_t o = 0; o < d.size(); ++o) {
    double e = m.alpha + m.user_bias[d.user[o]] + m.item_bias[d.item[o]] - d.target[o];
    loss += e * e;
  }
  loss += m.l2 * (m.user_bias.squaredNorm() + m.item_bias.squaredNorm());
  return loss;
}

}  // namespace

double bias_loss(const BiasModel& m, const InteractionDataset& train,
                 std::uint64_t seed, int negatives_per_positive) {
  return design_loss(m, build_design(train, seed, negatives_per_positive));
}

BiasModel bias_fit(const InteractionDataset& train, double l2, std::uint64_t seed,
                   int negatives_per_positive, double tol, int max_sweeps) {
  if (l2 < 0) throw ConfigError("bias l2 must be non-negative");
  BiasModel m;
  m.l2 = l2;
  m.user_ids = train.user_ids;
  m.item_ids = train.item_ids;
  m.user_bias = Vector::Zero(train.num_users());
  m.item_bias = Vector::Zero(train.num_items());

  BiasDesign d = build_design(train, seed, negatives_per_positive);
  if (d.size() == 0) throw ConfigError("bias model has no observations");

  std::vector<std::uint32_t> ucount(train.num_users(), 0), icount(train.num_items(), 0);
  for (std::size_t o = 0; o < d.size(); ++o) {
    ++ucount[d.user[o]];
    ++icount[d.item[o]];
  }

  Vector unum(train.num_users()), inum(train.num_items());
  double prev = design_loss(m, d);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    // each block update is the exact minimizer of the quadratic in that block
    double s = 0;
    for (std::size_t o = 0; o < d.size(); ++o)
      s += d.target[o] - m.user_bias[d.user[o]] - m.item_bias[d.item[o]];
    m.alpha = s / double(d.size());

    unum.setZero();
    for (std::size_t o = 0; o < d.size(); ++o)
      unum[d.user[o]] += d.target[o] - m.alpha - m.item_bias[d.item[o]];
    for (Eigen::Index u = 0; u < m.user_bias.size(); ++u)
      m.user_bias[u] = ucount[u] ? unum[u] / (double(ucount[u]) + l2) : 0.0;

    inum.setZero();
    for (std::size_t o = 0; o < d.size(); ++o)
      inum[d.item[o]] += d.target[o] - m.alpha - m.user_bias[d.user[o]];
    for (Eigen::Index i = 0; i < m.item_bias.size(); ++i)
      m.item_bias[i] = icount[i] ? inum[i] / (double(icount[i]) + l2) : 0.0;

    double loss = design_loss(m, d);
    if (std::abs(prev - loss) < tol) break;
    prev = loss;
  }
  return m;
}

BiasModel bias_fit_stochastic(const InteractionDataset& train, double l2, double lr,
                              int epochs, std::uint64_t seed) {
  BiasModel m;
  m.l2 = l2;
  m.user_ids = train.user_ids;
  m.item_ids = train.item_ids;
  m.user_bias = Vector::Zero(train.num_users());
  m.item_bias = Vector::Zero(train.num_items());
  m.svp_score.assign(train.num_users(), 0.0);
  if (epochs < 1) throw ConfigError("need at least one epoch");

  BiasDesign d = build_design(train, seed, 1);
  std::vector<std::uint32_t> ucount(train.num_users(), 0), icount(train.num_items(), 0);
  for (std::size_t o = 0; o < d.size(); ++o) {
    ++ucount[d.user[o]];
    ++icount[d.item[o]];
  }

  const auto n_items = static_cast<std::uint32_t>(train.num_items());
  std::vector<std::uint32_t> order(d.size());
  for (std::size_t o = 0; o < d.size(); ++o) order[o] = static_cast<std::uint32_t>(o);

  for (int e = 0; e < epochs; ++e) {
    RngStream perm(seed, "svp-order", static_cast<std::uint64_t>(e));
    perm.shuffle(order);
    for (auto o : order) {
      auto u = d.user[o];
      auto i = d.item[o];
      double err = m.alpha + m.user_bias[u] + m.item_bias[i] - d.target[o];
      double g = 2.0 * err;
      m.alpha -= lr * g;
      // l2 amortized over the observations touching each coordinate
      m.user_bias[u] -= lr * (g + 2.0 * l2 * m.user_bias[u] / double(ucount[u]));
      m.item_bias[i] -= lr * (g + 2.0 * l2 * m.item_bias[i] / double(icount[i]));
    }

    // per-user AUC of train positives against 100 sampled negatives
    for (std::size_t u = 0; u < train.num_users(); ++u) {
      const auto& pos = train.rows[u];
      if (pos.empty()) continue;
      std::vector<std::uint32_t> complement;
      complement.reserve(n_items - pos.size());
      for (std::uint32_t i = 0, p = 0; i < n_items; ++i) {
        if (p < pos.size() && pos[p] == i) { ++p; continue; }
        complement.push_back(i);
      }
      double auc = 0.5;
      if (!complement.empty()) {
        RngStream rng(seed, "svp-auc",
                      static_cast<std::uint64_t>(e) * train.num_users() + u);
        std::vector<double> negs(100);
        for (auto& n : negs) {
          auto i = complement[rng.next_below(complement.size())];
          n = m.alpha + m.user_bias[u] + m.item_bias[i];
        }
        double wins = 0;
        for (auto p : pos) {
          double ps = m.alpha + m.user_bias[u] + m.item_bias[p];
          for (double ns : negs) wins += ps > ns ? 1.0 : (ps == ns ? 0.5 : 0.0);
        }
        auc = wins / (double(pos.size()) * 100.0);
      }
      m.svp_score[u] += (1.0 - auc) / double(epochs);
    }
  }
  return m;
}

BlockScorer make_scorer(const BiasModel& m, const InteractionDataset& history) {
  if (history.num_items() != static_cast<std::size_t>(m.item_bias.size()))
    throw ConfigError("bias model item universe mismatch");
  // query users are matched to trained users by external id; unknown users
  // score with beta_u = 0
  auto lookup = std::make_shared<std::unordered_map<std::string, Eigen::Index>>();
  for (std::size_t v = 0; v < m.user_ids.size(); ++v)
    lookup->emplace(m.user_ids[v], static_cast<Eigen::Index>(v));
  const auto* hist = &history;
  const auto* model = &m;
  return [lookup, hist, model](std::span<const std::uint32_t> users) {
    Matrix s(users.size(), model->item_bias.size());
    for (std::size_t r = 0; r < users.size(); ++r) {
      double bu = 0;
      auto it = lookup->find(hist->user_ids[users[r]]);
      if (it != lookup->end()) bu = model->user_bias[it->second];
      s.row(r) = (model->item_bias.array() + model->alpha + bu).transpose();
    }
    return s;
  };
}

// ---- EASE ----

namespace {

Matrix gram_items(const Matrix& x) {
  Matrix g(x.cols(), x.cols());
  Eigen::Index tiles = (x.cols() + kColTile - 1) / kColTile;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index t = 0; t < tiles; ++t) {
    Eigen::Index o = t * kColTile;
    Eigen::Index w = std::min(kColTile, x.cols() - o);
    g.middleCols(o, w).noalias() = x.transpose() * x.middleCols(o, w);
  }
  return g;
}

EaseModel ease_from_gram(const Matrix& g, const InteractionDataset& train,
                         double lambda) {
  if (lambda < 0) throw ConfigError("ease lambda must be non-negative");
  SpdSolver solver(g, lambda, 0.0);  // no jitter: a too-small lambda is an error
  Matrix p = Matrix::Identity(g.rows(), g.cols());
  solver.solve_in_place(p);

  Vector inv_diag = p.diagonal().cwiseInverse();
  EaseModel m;
  m.lambda = lambda;
  m.item_ids = train.item_ids;
  m.weights_t = std::move(p);
  for (Eigen::Index j = 0; j < m.weights_t.cols(); ++j)
    m.weights_t.col(j) = -m.weights_t.col(j).cwiseProduct(inv_diag);
  m.weights_t.diagonal().setZero();
  return m;
}

}  // namespace

EaseModel ease_fit(const InteractionDataset& train, double lambda) {
  Matrix x = to_dense(train);
  return ease_from_gram(gram_items(x), train, lambda);
}

std::pair<EaseModel, EaseSelection> ease_select_lambda(
    const InteractionDataset& train, const InteractionDataset& history,
    const InteractionDataset& val_positives, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  Matrix x = to_dense(train);
  Matrix g = gram_items(x);

  EaseSelection sel;
  EaseModel best;
  bool have_best = false;
  EvalOptions vopt;
  vopt.ks = {100};
  for (double lambda : grid) {
    EaseModel m = ease_from_gram(g, train, lambda);
    auto rep = evaluate_ranking(history, val_positives, make_scorer(m, history), vopt);
    double score = rep.get("ndcg@100");
    sel.grid.emplace_back(lambda, score);
    if (!have_best || score > sel.score) {
      sel.score = score;
      sel.lambda = lambda;
      best = std::move(m);
      have_best = true;
    }
  }
  return {std::move(best), std::move(sel)};
}

BlockScorer make_scorer(const EaseModel& m, const InteractionDataset& history) {
  if (history.num_items() != static_cast<std::size_t>(m.weights_t.rows()))
    throw ConfigError("ease model item universe mismatch");
  const auto* hist = &history;
  const auto* model = &m;
  return [hist, model](std::span<const std::uint32_t> users) {
    Matrix s = Matrix::Zero(users.size(), model->weights_t.rows());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t r = 0; r < users.size(); ++r) {
      Vector acc = Vector::Zero(model->weights_t.rows());
      for (auto i : hist->row(users[r])) acc += model->weights_t.col(i);
      s.row(static_cast<Eigen::Index>(r)) = acc.transpose();
    }
    return s;
  };
}

// ---- persistence ----

void save_pop(const std::string& path, const PopRecModel& m) {
  detail::BinWriter w(path);
  detail::write_magic(w, static_cast<std::uint32_t>(ModelKind::poprec));
  json meta;
  meta["n_items"] = m.item_score.size();
  w.str(meta.dump());
  detail::write_string_list(w, m.item_ids);
  w.u64(m.item_score.size());
  w.doubles(m.item_score.data(), m.item_score.size());
  w.check(path);
}

PopRecModel load_pop(const std::string& path) {
  detail::BinReader r(path);
  if (detail::read_magic(r) != static_cast<std::uint32_t>(ModelKind::poprec))
    throw ConfigError("model file does not hold a popularity model: " + path);
  r.str();  // meta
  PopRecModel m;
  m.item_ids = detail::read_string_list(r);
  m.item_score.resize(r.u64());
  r.doubles(m.item_score.data(), m.item_score.size());
  return m;
}

void save_bias(const std::string& path, const BiasModel& m) {
  detail::BinWriter w(path);
  detail::write_magic(w, static_cast<std::uint32_t>(ModelKind::bias));
  json meta;
  meta["l2"] = m.l2;
  w.str(meta.dump());
  w.f64(m.alpha);
  detail::write_string_list(w, m.user_ids);
  detail::write_string_list(w, m.item_ids);
  w.u64(static_cast<std::uint64_t>(m.user_bias.size()));
  w.doubles(m.user_bias.data(), static_cast<std::size_t>(m.user_bias.size()));
  w.u64(static_cast<std::uint64_t>(m.item_bias.size()));
  w.doubles(m.item_bias.data(), static_cast<std::size_t>(m.item_bias.size()));
  w.u64(m.svp_score.size());
  w.doubles(m.svp_score.data(), m.svp_score.size());
  w.check(path);
}

BiasModel load_bias(const std::string& path) {
  detail::BinReader r(path);
  if (detail::read_magic(r) != static_cast<std::uint32_t>(ModelKind::bias))
    throw ConfigError("model file does not hold a bias model: " + path);
  json meta = json::parse(r.str(), nullptr, false);
  BiasModel m;
  if (!meta.is_discarded()) m.l2 = meta.value("l2", 0.0);
  m.alpha = r.f64();
  m.user_ids = detail::read_string_list(r);
  m.item_ids = detail::read_string_list(r);
  m.user_bias.resize(static_cast<Eigen::Index>(r.u64()));
  r.doubles(m.user_bias.data(), static_cast<std::size_t>(m.user_bias.size()));
  m.item_bias.resize(static_cast<Eigen::Index>(r.u64()));
  r.doubles(m.item_bias.data(), static_cast<std::size_t>(m.item_bias.size()));
  m.svp_score.resize(r.u64());
  r.doubles(m.svp_score.data(), m.svp_score.size());
  return m;
}

void save_ease(const std::string& path, const EaseModel& m) {
  detail::BinWriter w(path);
  detail::write_magic(w, static_cast<std::uint32_t>(ModelKind::ease));
  json meta;
  meta["lambda"] = m.lambda;
  meta["n_items"] = m.item_ids.size();
  w.str(meta.dump());
  detail::write_string_list(w, m.item_ids);
  w.u64(static_cast<std::uint64_t>(m.weights_t.rows()));
  w.u64(static_cast<std::uint64_t>(m.weights_t.cols()));
  w.doubles(m.weights_t.data(), static_cast<std::size_t>(m.weights_t.size()));
  w.check(path);
}

EaseModel load_ease(const std::string& path) {
  detail::BinReader r(path);
  if (detail::read_magic(r) != static_cast<std::uint32_t>(ModelKind::ease))
    throw ConfigError("model file does not hold an ease model: " + path);
  json meta = json::parse(r.str(), nullptr, false);
  EaseModel m;
  if (!meta.is_discarded()) m.lambda = meta.value("lambda", 0.0);
  m.item_ids = detail::read_string_list(r);
  auto rows = r.u64(), cols = r.u64();
  m.weights_t.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  r.doubles(m.weights_t.data(), rows * cols);
  return m;
}

}  // namespace kcf
