#include "kernelcf/infae.hpp"

#include <cmath>
#include <memory>

#include <json.hpp>

#include "binio.hpp"
#include "kernelcf/linalg.hpp"

namespace kcf {

using nlohmann::json;

Matrix train_gramian(const InteractionDataset& train, const KernelConfig& cfg) {
  return gramian(train, train, cfg).matrix;
}

DualParameters fit_with_gramian(const Matrix& k, const InteractionDataset& train,
                                double lambda, const KernelConfig& cfg) {
  if (train.num_users() == 0) throw ConfigError("cannot fit on an empty train set");
  if (lambda < 0) throw ConfigError("ridge strength must be non-negative");
  if (k.rows() != k.cols() ||
      k.rows() != static_cast<Eigen::Index>(train.num_users()))
    throw ConfigError("gramian does not match the train set");

  double jitter_base = 1e-8 * k.trace() / double(k.rows());
  SpdSolver solver(k, lambda, jitter_base);

  DualParameters dp;
  dp.alpha = to_dense(train);
  solver.solve_in_place(dp.alpha);
  dp.lambda = lambda;
  dp.jitter = solver.jitter_used();
  dp.kernel = cfg;
  dp.train = train;
  dp.train_hash = train.content_hash();
  return dp;
}

DualParameters fit(const InteractionDataset& train, double lambda,
                   const KernelConfig& cfg) {
  return fit_with_gramian(train_gramian(train, cfg), train, lambda, cfg);
}

Vector predict(const DualParameters& dp, std::span<const std::uint32_t> history) {
  KernelBasis basis = make_kernel_basis(dp.train);
  Vector k = kernel_row(history, basis, dp.kernel);
  Vector s = dp.alpha.transpose() * k;
  // stable softmax
  double m = s.maxCoeff();
  s = (s.array() - m).exp();
  s /= s.sum();
  return s;
}

BlockScorer make_scorer(const DualParameters& dp, const InteractionDataset& history) {
  if (history.num_items() != dp.train.num_items())
    throw ConfigError("query histories live in a different item universe "
                      "than the model");
  auto basis = std::make_shared<KernelBasis>(make_kernel_basis(dp.train));
  const auto* hist = &history;
  const auto* model = &dp;
  return [basis, hist, model](std::span<const std::uint32_t> users) {
    Matrix kb(users.size(), basis->cols.rows());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t r = 0; r < users.size(); ++r)
      kb.row(static_cast<Eigen::Index>(r)) =
          kernel_row(hist->row(users[r]), *basis, model->kernel).transpose();
    return par_gemm(kb, model->alpha);
  };
}

MetricsReport evaluate(const DualParameters& dp, const InteractionDataset& history,
                       const InteractionDataset& positives, const EvalOptions& opt,
                       const PropensityModel* prop) {
  return evaluate_ranking(history, positives, make_scorer(dp, history), opt, prop);
}

std::pair<DualParameters, LambdaSelection> fit_select_lambda(
    const InteractionDataset& train, const InteractionDataset& history,
    const InteractionDataset& val_positives, std::span<const double> grid,
    const KernelConfig& cfg) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  Matrix k = train_gramian(train, cfg);

  // query-side kernel rows are identical for every lambda, compute them once;
  // when the queries are the training rows themselves they are k itself
  Matrix k_eval;
  const Matrix* k_query = &k;
  if (&history != &train) {
    KernelBasis basis = make_kernel_basis(train);
    k_eval = gramian_against_basis(history, basis, cfg);
    k_query = &k_eval;
  }

  LambdaSelection sel;
  DualParameters best;
  bool have_best = false;
  EvalOptions vopt;
  vopt.ks = {100};
  vopt.mask_history = true;
  for (double lambda : grid) {
    DualParameters dp = fit_with_gramian(k, train, lambda, cfg);
    BlockScorer scorer = [&](std::span<const std::uint32_t> users) {
      Matrix kb(users.size(), k_query->cols());
      for (std::size_t r = 0; r < users.size(); ++r)
        kb.row(static_cast<Eigen::Index>(r)) = k_query->row(users[r]);
      return par_gemm(kb, dp.alpha);
    };
    auto rep = evaluate_ranking(history, val_positives, scorer, vopt);
    double score = rep.get("ndcg@100");
    sel.grid.emplace_back(lambda, score);
    if (!have_best || score > sel.score) {
      sel.score = score;
      sel.lambda = lambda;
      best = std::move(dp);
      have_best = true;
    }
  }
  return {std::move(best), std::move(sel)};
}

namespace {

void write_dataset(detail::BinWriter& w, const InteractionDataset& ds) {
  detail::write_string_list(w, ds.user_ids);
  detail::write_string_list(w, ds.item_ids);
  w.u64(ds.rows.size());
  for (const auto& r : ds.rows) {
    w.u64(r.size());
    w.bytes(r.data(), r.size() * sizeof(std::uint32_t));
  }
}

InteractionDataset read_dataset(detail::BinReader& r) {
  InteractionDataset ds;
  ds.user_ids = detail::read_string_list(r);
  ds.item_ids = detail::read_string_list(r);
  auto n = r.u64();
  if (n != ds.user_ids.size())
    throw ConfigError("corrupt dataset payload in " + r.path);
  ds.rows.resize(n);
  ds.n_interactions = 0;
  for (auto& row : ds.rows) {
    row.resize(r.u64());
    r.bytes(row.data(), row.size() * sizeof(std::uint32_t));
    ds.n_interactions += row.size();
  }
  return ds;
}

}  // namespace

void save_dual(const std::string& path, const DualParameters& dp) {
  detail::BinWriter w(path);
  detail::write_magic(w, static_cast<std::uint32_t>(ModelKind::infae));
  json meta;
  meta["lambda"] = dp.lambda;
  meta["jitter"] = dp.jitter;
  meta["depth"] = dp.kernel.depth;
  meta["activation"] = "relu";
  meta["train_hash"] = hex_u64(dp.train_hash);
  meta["n_train_users"] = dp.train.num_users();
  meta["n_items"] = dp.train.num_items();
  w.str(meta.dump());
  w.u64(static_cast<std::uint64_t>(dp.alpha.rows()));
  w.u64(static_cast<std::uint64_t>(dp.alpha.cols()));
  w.doubles(dp.alpha.data(), static_cast<std::size_t>(dp.alpha.size()));
  write_dataset(w, dp.train);
  w.check(path);
}

DualParameters load_dual(const std::string& path) {
  detail::BinReader r(path);
  auto kind = detail::read_magic(r);
  if (kind != static_cast<std::uint32_t>(ModelKind::infae))
    throw ConfigError("model file does not hold dual parameters: " + path);
  json meta = json::parse(r.str(), nullptr, false);
  if (meta.is_discarded()) throw ConfigError("corrupt model metadata: " + path);

  DualParameters dp;
  dp.lambda = meta.value("lambda", 0.0);
  dp.jitter = meta.value("jitter", 0.0);
  dp.kernel.depth = meta.value("depth", 1);
  auto rows = r.u64(), cols = r.u64();
  dp.alpha.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  r.doubles(dp.alpha.data(), rows * cols);
  dp.train = read_dataset(r);
  dp.train_hash = dp.train.content_hash();
  if (meta.value("train_hash", std::string{}) != hex_u64(dp.train_hash))
    throw ConfigError("model train-set hash mismatch (corrupt file?): " + path);
  return dp;
}

}  // namespace kcf
