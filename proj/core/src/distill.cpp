#include "kernelcf/distill.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "binio.hpp"
#include "kernelcf/infae.hpp"
#include "kernelcf/kernel.hpp"
#include "kernelcf/linalg.hpp"
#include "kernelcf/rng.hpp"

namespace kcf {

using nlohmann::json;

namespace {

constexpr double kLogEps = 1e-12;
constexpr char kCheckpointMagic[8] = {'K', 'C', 'F', 'D', 'S', 'T', '0', '1'};

std::uint64_t mix3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return fnv1a64_u64(c, fnv1a64_u64(b, fnv1a64_u64(a)));
}

// log softmax and softmax per row, numerically stable
void row_log_softmax(const Matrix& logits, Matrix& l0, Matrix& p0) {
  l0.resize(logits.rows(), logits.cols());
  p0.resize(logits.rows(), logits.cols());
  for (Eigen::Index u = 0; u < logits.rows(); ++u) {
    double m = logits.row(u).maxCoeff();
    auto shifted = logits.row(u).array() - m;
    double lse = std::log(shifted.exp().sum());
    l0.row(u) = shifted - lse;
    p0.row(u) = l0.row(u).array().exp();
  }
}

// One relaxed draw for one prior row: y = softmax((l0 + g) / tau) with g the
// replayable Gumbel noise for (noise_index, draw, row).
void relaxed_draw(const Matrix& l0, double tau, std::uint64_t seed,
                  std::uint64_t noise_index, int draw, Eigen::Index u,
                  Eigen::ArrayXd& scratch, Eigen::ArrayXd& y) {
  const auto n = l0.cols();
  RngStream rng(seed, "gumbel",
                mix3(noise_index, static_cast<std::uint64_t>(draw),
                     static_cast<std::uint64_t>(u)));
  for (Eigen::Index j = 0; j < n; ++j) scratch[j] = rng.next_open01();
  scratch = -(-scratch.log()).log();  // uniform -> standard Gumbel
  scratch = (l0.row(u).transpose().array() + scratch) / tau;
  double m = scratch.maxCoeff();
  y = (scratch - m).exp();
  y /= y.sum();
}

Matrix dense_rows(const InteractionDataset& ds, std::span<const std::uint32_t> users) {
  Matrix b = Matrix::Zero(static_cast<Eigen::Index>(users.size()),
                          static_cast<Eigen::Index>(ds.num_items()));
  for (std::size_t r = 0; r < users.size(); ++r)
    for (auto i : ds.rows[users[r]]) b(static_cast<Eigen::Index>(r), i) = 1.0;
  return b;
}

// Elementwise depth-1 kernel of a clamped correlation matrix, plus the
// clamp-masked derivative d kernel / d rho.
void kernel_map(const Matrix& p, Matrix& k, Matrix& dk) {
  k.resize(p.rows(), p.cols());
  dk.resize(p.rows(), p.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      k(i, j) = ntk_scalar_grad(p(i, j), 1, &dk(i, j));
}

double resolve_lambda2(const DistillConfig& cfg, const InteractionDataset& train) {
  if (cfg.lambda2 >= 0) return cfg.lambda2;
  double avg = double(train.n_interactions) / double(train.num_users());
  return 1e-3 / avg;
}

}  // namespace

void DistillConfig::validate() const {
  if (mu < 1) throw ConfigError("mu must be positive");
  if (gamma < 1) throw ConfigError("gamma must be positive");
  if (!(tau > 0)) throw ConfigError("tau must be positive");
  if (lambda < 0) throw ConfigError("lambda must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(step_size > 0)) throw ConfigError("step size must be positive");
  if (max_outer < 0) throw ConfigError("max outer iterations must be >= 0");
  if (val_every < 1) throw ConfigError("validation cadence must be positive");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (lambda_grid.empty()) throw ConfigError("inner lambda grid is empty");
}

SupportPrior init_prior(const InteractionDataset& train, const DistillConfig& cfg) {
  cfg.validate();
  if (cfg.mu > train.num_users())
    throw ConfigError("summary budget exceeds the available users");
  RngStream pick(cfg.seed, "init");
  auto users = pick.sample_without_replacement(
      static_cast<std::uint32_t>(train.num_users()),
      static_cast<std::uint32_t>(cfg.mu));

  SupportPrior prior;
  prior.item_ids = train.item_ids;
  prior.logits = Matrix::Zero(static_cast<Eigen::Index>(cfg.mu),
                              static_cast<Eigen::Index>(train.num_items()));
  for (std::size_t r = 0; r < users.size(); ++r) {
    RngStream noise(cfg.seed, "init-noise", r);
    auto row = prior.logits.row(static_cast<Eigen::Index>(r));
    for (Eigen::Index j = 0; j < row.size(); ++j)
      row[j] = cfg.init_noise * noise.next_normal();
    for (auto i : train.rows[users[r]]) row[i] += cfg.init_scale;
  }
  return prior;
}

RelaxedSample gumbel_relaxed_summary(const SupportPrior& prior, double tau, int gamma,
                                     std::uint64_t seed, std::uint64_t noise_index) {
  if (!(tau > 0) || gamma < 1) throw ConfigError("need tau > 0 and gamma >= 1");
  Matrix l0, p0;
  row_log_softmax(prior.logits, l0, p0);

  RelaxedSample out;
  out.noise_index = noise_index;
  out.raw_sum = Matrix::Zero(l0.rows(), l0.cols());
#pragma omp parallel
  {
    Eigen::ArrayXd scratch(l0.cols()), y(l0.cols());
#pragma omp for schedule(static)
    for (Eigen::Index u = 0; u < l0.rows(); ++u)
      for (int t = 0; t < gamma; ++t) {
        relaxed_draw(l0, tau, seed, noise_index, t, u, scratch, y);
        out.raw_sum.row(u) += y.matrix().transpose();
      }
  }
  out.clamped = out.raw_sum.cwiseMin(1.0).cwiseMax(0.0);
  return out;
}

SampledSummary gumbel_hard_summary(const SupportPrior& prior, int gamma,
                                   std::uint64_t seed, std::uint64_t noise_index) {
  if (gamma < 1) throw ConfigError("need gamma >= 1");
  const auto n = prior.logits.cols();
  SampledSummary s;
  s.item_ids = prior.item_ids;
  s.rows.resize(prior.mu());
#pragma omp parallel
  {
    Eigen::ArrayXd g(n);
    std::vector<char> hit(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
    for (Eigen::Index u = 0; u < prior.logits.rows(); ++u) {
      std::fill(hit.begin(), hit.end(), 0);
      for (int t = 0; t < gamma; ++t) {
        RngStream rng(seed, "hard-gumbel",
                      mix3(noise_index, static_cast<std::uint64_t>(t),
                           static_cast<std::uint64_t>(u)));
        for (Eigen::Index j = 0; j < n; ++j) g[j] = rng.next_open01();
        g = -(-g.log()).log();
        Eigen::Index best;
        (prior.logits.row(u).transpose().array() + g).maxCoeff(&best);
        hit[static_cast<std::size_t>(best)] = 1;
      }
      auto& row = s.rows[static_cast<std::size_t>(u)];
      for (Eigen::Index j = 0; j < n; ++j)
        if (hit[static_cast<std::size_t>(j)]) row.push_back(static_cast<std::uint32_t>(j));
    }
  }
  return s;
}

DistillStep distill_loss_grad(const SupportPrior& prior, const Matrix& batch,
                              const DistillConfig& cfg, double lambda,
                              double lambda2, std::uint64_t noise_index) {
  if (batch.rows() < 1) throw ConfigError("distillation batch is empty");
  if (batch.cols() != prior.logits.cols())
    throw ConfigError("batch and prior disagree on the item universe");
  const double b = double(batch.rows());

  Matrix l0, p0;
  row_log_softmax(prior.logits, l0, p0);
  RelaxedSample sample = gumbel_relaxed_summary(prior, cfg.tau, cfg.gamma,
                                                cfg.seed, noise_index);
  const Matrix& x_hat = sample.clamped;

  // normalized rows for both kernel operands; x_hat rows are strictly
  // positive (softmax sums), so no zero-norm guards are needed
  Matrix n_rows = x_hat;
  Vector norms = row_normalize(n_rows);
  Matrix bn = batch;
  row_normalize(bn);

  // summary-summary kernel; the diagonal is exactly 1 by construction, which
  // the derivative mask then treats as clamped (the row norm is constant, so
  // the true sensitivity through the diagonal is zero)
  Matrix n_t = n_rows.transpose();
  Matrix p_ss = par_gemm(n_rows, n_t);
  p_ss = p_ss.cwiseMin(1.0).cwiseMax(-1.0);
  p_ss.diagonal().setOnes();
  Matrix k_ss, dk_ss;
  kernel_map(p_ss, k_ss, dk_ss);

  double jitter_base = 1e-8 * k_ss.trace() / double(k_ss.rows());
  SpdSolver solver(k_ss, lambda, jitter_base);
  Matrix alpha = x_hat;
  solver.solve_in_place(alpha);

  // batch-summary kernel and softmax predictions
  Matrix p_bs = par_gemm(bn, n_t);
  p_bs = p_bs.cwiseMin(1.0).cwiseMax(-1.0);
  Matrix k_bs, dk_bs;
  kernel_map(p_bs, k_bs, dk_bs);
  Matrix scores = par_gemm(k_bs, alpha);
  Matrix pred(scores.rows(), scores.cols());
  for (Eigen::Index u = 0; u < scores.rows(); ++u) {
    double m = scores.row(u).maxCoeff();
    pred.row(u) = (scores.row(u).array() - m).exp();
    pred.row(u) /= pred.row(u).sum();
  }

  DistillStep step;
  {
    auto p = pred.array();
    auto x = batch.array();
    auto p_clip = p.max(kLogEps);
    auto q_clip = (1.0 - p).max(kLogEps);
    step.bce = (-(x * p_clip.log()) - (1.0 - x) * q_clip.log()).sum() / b;
    step.l1 = lambda2 * x_hat.sum();
    step.loss = step.bce + step.l1;
  }

  // ---- reverse pass ----
  Matrix d_pred(pred.rows(), pred.cols());
  {
    auto p = pred.array();
    auto x = batch.array();
    d_pred = (((p >= kLogEps).cast<double>() * (-x) / p.max(kLogEps) +
               ((1.0 - p) >= kLogEps).cast<double>() * (1.0 - x) / (1.0 - p).max(kLogEps)) /
              b)
                 .matrix();
  }
  Matrix d_scores(pred.rows(), pred.cols());
  for (Eigen::Index u = 0; u < pred.rows(); ++u) {
    double dot = d_pred.row(u).dot(pred.row(u));
    d_scores.row(u) = (pred.row(u).array() * (d_pred.row(u).array() - dot)).matrix();
  }

  Matrix d_alpha = par_gemm_at_b(k_bs, d_scores);
  Matrix alpha_t = alpha.transpose();
  Matrix d_p_bs = par_gemm(d_scores, alpha_t).cwiseProduct(dk_bs);
  Matrix d_n = par_gemm_at_b(d_p_bs, bn);

  // adjoint of alpha = (K + lambda I)^{-1} x_hat: reuse the factorization
  Matrix w = d_alpha;
  solver.solve_in_place(w);
  Matrix d_x_hat = w;
  Matrix d_p_ss = (-par_gemm(w, alpha_t)).cwiseProduct(dk_ss);
  Matrix sym = d_p_ss + d_p_ss.transpose();
  d_n += par_gemm(sym, n_rows);

  // row normalization backward: project out the radial component
  for (Eigen::Index u = 0; u < d_n.rows(); ++u) {
    double dot = d_n.row(u).dot(n_rows.row(u));
    d_x_hat.row(u) += (d_n.row(u) - dot * n_rows.row(u)) / norms[u];
  }

  d_x_hat.array() += lambda2;  // L1 on the nonnegative clamped summary

  // clamp subgradient: zero outside the open interval (0, 1)
  Matrix d_sum = ((sample.raw_sum.array() > 0.0).cast<double>() *
                  (sample.raw_sum.array() < 1.0).cast<double>() * d_x_hat.array())
                     .matrix();

  // Gumbel-softmax backward, draw by draw with replayed noise
  Matrix d_l0 = Matrix::Zero(l0.rows(), l0.cols());
#pragma omp parallel
  {
    Eigen::ArrayXd scratch(l0.cols()), y(l0.cols());
#pragma omp for schedule(static)
    for (Eigen::Index u = 0; u < l0.rows(); ++u)
      for (int t = 0; t < cfg.gamma; ++t) {
        relaxed_draw(l0, cfg.tau, cfg.seed, noise_index, t, u, scratch, y);
        double dot = (d_sum.row(u).transpose().array() * y).sum();
        d_l0.row(u) += (y * (d_sum.row(u).transpose().array() - dot) / cfg.tau)
                           .matrix()
                           .transpose();
      }
  }

  // log-softmax backward
  step.grad.resize(l0.rows(), l0.cols());
  for (Eigen::Index u = 0; u < l0.rows(); ++u) {
    double rs = d_l0.row(u).sum();
    step.grad.row(u) = d_l0.row(u) - rs * p0.row(u);
  }
  return step;
}

// ---- checkpointing ----

namespace {

struct OuterState {
  DistillConfig cfg;
  std::uint64_t train_hash = 0;
  int iteration = 0;
  double cur_lambda = 0;
  double best_score = -1;
  double best_lambda = 0;
  std::uint32_t bad_cycles = 0;
  std::uint32_t nonfinite_streak = 0;
  bool have_best = false;
  Matrix logits;
  Matrix best_logits;
  // adaptive-moment state (present only when cfg.adam)
  std::uint64_t adam_t = 0;
  Matrix adam_m, adam_v;
  std::vector<std::pair<int, double>> val_history;
};

json config_to_json(const DistillConfig& c) {
  json j;
  j["mu"] = c.mu;
  j["gamma"] = c.gamma;
  j["tau"] = c.tau;
  j["lambda"] = c.lambda;
  j["lambda2"] = c.lambda2;
  j["batch_size"] = c.batch_size;
  j["step_size"] = c.step_size;
  j["max_outer"] = c.max_outer;
  j["val_every"] = c.val_every;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["lambda_grid"] = c.lambda_grid;
  j["adam"] = c.adam;
  j["final_hard_draw"] = c.final_hard_draw;
  j["init_scale"] = c.init_scale;
  j["init_noise"] = c.init_noise;
  return j;
}

DistillConfig config_from_json(const json& j) {
  DistillConfig c;
  c.mu = j.at("mu").get<std::size_t>();
  c.gamma = j.at("gamma").get<int>();
  c.tau = j.at("tau").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.lambda2 = j.at("lambda2").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.step_size = j.at("step_size").get<double>();
  c.max_outer = j.at("max_outer").get<int>();
  c.val_every = j.at("val_every").get<int>();
  c.patience = j.at("patience").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
  c.adam = j.at("adam").get<bool>();
  c.final_hard_draw = j.at("final_hard_draw").get<bool>();
  c.init_scale = j.at("init_scale").get<double>();
  c.init_noise = j.at("init_noise").get<double>();
  return c;
}

void write_matrix(detail::BinWriter& w, const Matrix& m) {
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u64(static_cast<std::uint64_t>(m.cols()));
  w.doubles(m.data(), static_cast<std::size_t>(m.size()));
}

Matrix read_matrix(detail::BinReader& r) {
  auto rows = r.u64(), cols = r.u64();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  r.doubles(m.data(), rows * cols);
  return m;
}

void save_state(const std::string& path, const OuterState& st) {
  std::string tmp = path + ".tmp";
  {
    detail::BinWriter w(tmp);
    w.bytes(kCheckpointMagic, 8);
    w.u32(1);
    w.str(config_to_json(st.cfg).dump());
    w.u64(st.train_hash);
    w.u32(static_cast<std::uint32_t>(st.iteration));
    w.f64(st.cur_lambda);
    w.f64(st.best_score);
    w.f64(st.best_lambda);
    w.u32(st.bad_cycles);
    w.u32(st.nonfinite_streak);
    w.u32(st.have_best ? 1 : 0);
    write_matrix(w, st.logits);
    if (st.have_best) write_matrix(w, st.best_logits);
    if (st.cfg.adam) {
      w.u64(st.adam_t);
      write_matrix(w, st.adam_m);
      write_matrix(w, st.adam_v);
    }
    w.u64(st.val_history.size());
    for (auto [it, score] : st.val_history) {
      w.u32(static_cast<std::uint32_t>(it));
      w.f64(score);
    }
    w.check(tmp);
  }
  std::filesystem::rename(tmp, path);
}

OuterState load_state(const std::string& path) {
  detail::BinReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ConfigError("not a distillation checkpoint: " + path);
  if (r.u32() != 1) throw ConfigError("unsupported checkpoint version: " + path);
  OuterState st;
  json j = json::parse(r.str(), nullptr, false);
  if (j.is_discarded()) throw ConfigError("corrupt checkpoint config: " + path);
  st.cfg = config_from_json(j);
  st.train_hash = r.u64();
  st.iteration = static_cast<int>(r.u32());
  st.cur_lambda = r.f64();
  st.best_score = r.f64();
  st.best_lambda = r.f64();
  st.bad_cycles = r.u32();
  st.nonfinite_streak = r.u32();
  st.have_best = r.u32() != 0;
  st.logits = read_matrix(r);
  if (st.have_best) st.best_logits = read_matrix(r);
  if (st.cfg.adam) {
    st.adam_t = r.u64();
    st.adam_m = read_matrix(r);
    st.adam_v = read_matrix(r);
  }
  auto n = r.u64();
  st.val_history.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    int it = static_cast<int>(r.u32());
    st.val_history.emplace_back(it, r.f64());
  }
  return st;
}

}  // namespace

DistillResult synthesize(const SplitDataset& split, const DistillConfig& cfg_in,
                         bool resume) {
  const InteractionDataset& train = split.train;
  if (train.n_interactions == 0) throw ConfigError("train split is empty");

  OuterState st;
  SupportPrior prior;
  if (resume) {
    if (cfg_in.checkpoint_path.empty())
      throw ConfigError("resume requires a checkpoint path");
    st = load_state(cfg_in.checkpoint_path);
    st.cfg.checkpoint_path = cfg_in.checkpoint_path;
    // loop bounds are not part of the run identity, so a resume may extend them
    st.cfg.max_outer = cfg_in.max_outer;
    st.cfg.patience = cfg_in.patience;
    if (st.train_hash != train.content_hash())
      throw ConfigError("checkpoint was distilled from different training data");
    prior.logits = st.logits;
    prior.item_ids = train.item_ids;
  } else {
    st.cfg = cfg_in;
    st.cfg.validate();
    st.train_hash = train.content_hash();
    st.cur_lambda = st.cfg.lambda;
    prior = init_prior(train, st.cfg);
    if (st.cfg.adam) {
      st.adam_m = Matrix::Zero(prior.logits.rows(), prior.logits.cols());
      st.adam_v = Matrix::Zero(prior.logits.rows(), prior.logits.cols());
    }
  }
  const DistillConfig& cfg = st.cfg;
  const double lambda2 = resolve_lambda2(cfg, train);
  const bool can_validate = split.val.n_interactions > 0;
  KernelConfig kernel_cfg;

  DistillResult res;
  res.diverged = false;
  std::size_t b = std::min(cfg.batch_size, train.num_users());

  while (st.iteration < cfg.max_outer &&
         st.bad_cycles < static_cast<std::uint32_t>(cfg.patience)) {
    int it = ++st.iteration;
    RngStream pick(cfg.seed, "batch", static_cast<std::uint64_t>(it));
    auto users = pick.sample_without_replacement(
        static_cast<std::uint32_t>(train.num_users()), static_cast<std::uint32_t>(b));
    Matrix batch = dense_rows(train, users);

    DistillStep step = distill_loss_grad(prior, batch, cfg, st.cur_lambda, lambda2,
                                         static_cast<std::uint64_t>(it));
    bool finite = std::isfinite(step.loss) && step.grad.allFinite();
    if (!finite) {
      // skip the poisoned update; two in a row aborts to the last good state
      if (++st.nonfinite_streak >= 2) {
        res.diverged = true;
        break;
      }
    } else {
      st.nonfinite_streak = 0;
      if (cfg.adam) {
        ++st.adam_t;
        st.adam_m = 0.9 * st.adam_m + 0.1 * step.grad;
        st.adam_v.array() =
            0.999 * st.adam_v.array() + 0.001 * step.grad.array().square();
        double c1 = 1.0 - std::pow(0.9, double(st.adam_t));
        double c2 = 1.0 - std::pow(0.999, double(st.adam_t));
        prior.logits.array() -= cfg.step_size * (st.adam_m.array() / c1) /
                                ((st.adam_v.array() / c2).sqrt() + 1e-8);
      } else {
        prior.logits -= cfg.step_size * step.grad;
      }
    }

    if (can_validate && it % cfg.val_every == 0) {
      SampledSummary hard = gumbel_hard_summary(prior, cfg.gamma, cfg.seed,
                                                static_cast<std::uint64_t>(it));
      InteractionDataset summary_ds = summary_to_dataset(hard);
      auto [model, sel] = fit_select_lambda(summary_ds, split.train, split.val,
                                            cfg.lambda_grid, kernel_cfg);
      st.val_history.emplace_back(it, sel.score);
      st.cur_lambda = sel.lambda;  // on-the-fly inner regularizer
      if (sel.score > st.best_score) {
        st.best_score = sel.score;
        st.best_lambda = sel.lambda;
        st.best_logits = prior.logits;
        st.have_best = true;
        st.bad_cycles = 0;
      } else {
        ++st.bad_cycles;
      }
      st.logits = prior.logits;
      if (!cfg.checkpoint_path.empty()) save_state(cfg.checkpoint_path, st);
      if (st.bad_cycles >= static_cast<std::uint32_t>(cfg.patience)) break;
    }
  }

  if (st.have_best) {
    prior.logits = st.best_logits;
    st.cur_lambda = st.best_lambda;
  }

  SampledSummary summary;
  if (cfg.final_hard_draw) {
    summary = gumbel_hard_summary(prior, cfg.gamma, cfg.seed,
                                  static_cast<std::uint64_t>(st.iteration) + 1);
  } else {
    // escape hatch: threshold the prior at half the seeding scale, which
    // recovers the initializing rows when no steps were taken
    summary.item_ids = prior.item_ids;
    summary.rows.resize(prior.mu());
    for (Eigen::Index u = 0; u < prior.logits.rows(); ++u)
      for (Eigen::Index j = 0; j < prior.logits.cols(); ++j)
        if (prior.logits(u, j) > cfg.init_scale / 2)
          summary.rows[static_cast<std::size_t>(u)].push_back(
              static_cast<std::uint32_t>(j));
  }
  summary.meta.source_hash = hex_u64(st.train_hash);
  summary.meta.mu = static_cast<std::uint32_t>(cfg.mu);
  summary.meta.gamma = static_cast<std::uint32_t>(cfg.gamma);
  summary.meta.tau = cfg.tau;
  summary.meta.lambda = st.cur_lambda;
  summary.meta.lambda2 = lambda2;
  summary.meta.seed = cfg.seed;
  summary.meta.outer_iterations = static_cast<std::uint32_t>(st.iteration);

  res.summary = std::move(summary);
  res.prior = std::move(prior);
  res.val_score = st.best_score;
  res.lambda = st.cur_lambda;
  res.iterations = st.iteration;
  res.val_history = std::move(st.val_history);
  return res;
}

}  // namespace kcf
