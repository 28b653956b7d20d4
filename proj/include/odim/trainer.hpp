#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "odim/matrix.hpp"
#include "odim/metrics.hpp"
#include "odim/mixture.hpp"
#include "odim/mlp.hpp"
#include "odim/mlp_batch.hpp"
#include "odim/optim.hpp"
#include "odim/rng.hpp"
#include "odim/scaler.hpp"

namespace odim {

// Training orchestration: each ensemble member runs blocks of N_u updates on
// minibatch IWAE gradients; after each block the full-dataset per-sample
// losses are normalized, a GMM-2 is fitted and the Wasserstein distance
// between its components becomes the stopping signal. The parameters with the
// largest distance seen so far are snapshotted; training stops after N_pat
// consecutive non-improving checks. Scores are the ensemble mean of raw
// per-sample losses under the snapshots.

struct DpTrainConfig {
  DpConfig mech;
  std::uint64_t update_budget = 0;  // hard cap on updates per member
};

struct TrainConfig {
  std::size_t k_samples = 50;  // K
  std::size_t n_u = 10;        // updates per checkpoint block
  std::size_t n_pat = 10;      // patience
  std::size_t ensemble = 10;   // B
  std::size_t batch = 128;     // n_mb
  double lr = 5e-4;
  std::size_t latent_dim = 5;
  std::size_t hidden_dim = 50;
  std::uint64_t seed = 0;
  ScalerKind scaler = ScalerKind::MinMax;
  InitScheme init = InitScheme::HeUniform;
  double semi_gamma = 1.0;  // CUBO weight (semi-supervised mode)
  double semi_u = 2.0;      // CUBO order
  std::optional<DpTrainConfig> dp;
  std::size_t threads = 0;  // 0 = hardware concurrency
  // Average per-member min-max normalized losses instead of raw losses.
  bool normalize_member_scores = false;
};

struct Snapshot {
  MlpParams params;
  double wd = 0.0;
  std::uint64_t update_count = 0;
  std::size_t member = 0;
};

struct CheckpointRecord {
  std::uint64_t update = 0;
  double wd = 0.0;
  double seconds = 0.0;
};

struct MemberRun {
  Snapshot snapshot;
  std::vector<CheckpointRecord> trajectory;
  std::uint64_t total_updates = 0;
  double seconds = 0.0;
};

struct ScoreReport {
  std::vector<double> scores;  // higher = more outlier-like
  std::optional<std::vector<int>> labels;
  std::vector<MemberRun> members;
  std::optional<double> auc;
  std::optional<double> average_precision;
  std::vector<std::string> warnings;
};

// Snapshot-at-max with N_pat consecutive non-improving checks tolerated.
// best starts at 0 and only a strict improvement resets the counter.
class PatienceGate {
 public:
  explicit PatienceGate(std::size_t n_pat) : limit_(n_pat) {}

  struct Result {
    bool improved = false;
    bool stop = false;
  };

  Result observe(double wd) {
    Result r;
    if (wd > best_) {
      best_ = wd;
      fails_ = 0;
      r.improved = true;
    } else {
      ++fails_;
    }
    r.stop = fails_ >= limit_;
    return r;
  }

  double best() const { return best_; }

 private:
  double best_ = 0.0;
  std::size_t fails_ = 0;
  std::size_t limit_;
};

// Called after every checkpoint evaluation with the member id, update count,
// Wasserstein distance and the full-dataset per-sample losses. May run on a
// worker thread when members train in parallel.
using CheckpointObserver = std::function<void(
    std::size_t member, std::uint64_t update, double wd, std::span<const double> losses)>;

namespace stream_tag {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kEval = 3;
inline constexpr std::uint64_t kSemi = 4;
inline constexpr std::uint64_t kDpNoise = 5;
inline constexpr std::uint64_t kScore = 6;
inline constexpr std::uint64_t kMember = 7;
}  // namespace stream_tag

inline std::uint64_t member_seed(std::uint64_t base_seed, std::size_t member) {
  return derive_seed(derive_seed(base_seed, stream_tag::kMember),
                     static_cast<std::uint64_t>(member));
}

namespace detail {

// Shuffle-once-per-epoch minibatch order; a short final chunk closes the
// epoch. Datasets smaller than the batch size train full-batch.
class EpochBatcher {
 public:
  EpochBatcher(std::size_t n, std::size_t batch, SeededRng* rng)
      : n_(n), batch_(std::min(batch, n)), pos_(n), rng_(rng) {
    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
  }

  void next(std::vector<std::size_t>& out) {
    out.clear();
    if (batch_ == n_) {
      for (std::size_t i = 0; i < n_; ++i) out.push_back(i);
      return;
    }
    if (pos_ >= n_) {
      rng_->shuffle(order_);
      pos_ = 0;
    }
    const std::size_t take = std::min(batch_, n_ - pos_);
    for (std::size_t i = 0; i < take; ++i) out.push_back(order_[pos_ + i]);
    pos_ += take;
  }

 private:
  std::size_t n_, batch_, pos_;
  std::vector<std::size_t> order_;
  SeededRng* rng_;
};

// Labeled-outlier minibatches: without replacement when enough rows exist,
// with replacement otherwise.
class LabeledBatcher {
 public:
  LabeledBatcher(const std::vector<std::size_t>& rows, std::size_t batch,
                 SeededRng* rng)
      : rows_(rows), batch_(batch), rng_(rng),
        inner_(rows.size(), std::min(batch, rows.size()), rng) {}

  void next(std::vector<std::size_t>& out) {
    out.clear();
    if (rows_.size() >= batch_) {
      inner_.next(scratch_);
      for (std::size_t i : scratch_) out.push_back(rows_[i]);
    } else {
      for (std::size_t i = 0; i < batch_; ++i)
        out.push_back(rows_[rng_->uniform_index(rows_.size())]);
    }
  }

 private:
  const std::vector<std::size_t>& rows_;
  std::size_t batch_;
  SeededRng* rng_;
  EpochBatcher inner_;
  std::vector<std::size_t> scratch_;
};

inline void draw_eps_into(Matrix& eps, std::size_t rows, std::size_t cols,
                          SeededRng& rng) {
  if (eps.rows != rows || eps.cols != cols) eps.resize(rows, cols);
  for (auto& e : eps.data) e = rng.gauss();
}

}  // namespace detail

// Per-sample IWAE losses over the whole matrix with ONE shared K x d block of
// latent draws. Sharing the block keeps per-sample Monte-Carlo noise
// comparable across samples and makes the losses row-permutation-equivariant.
inline std::vector<double> evaluate_losses(const MlpParams& p, const Matrix& x,
                                           const Matrix& eps_block,
                                           BatchWorkspace& ws) {
  std::vector<std::size_t> rows(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) rows[i] = i;
  std::vector<double> losses;
  batch_objective(p, x, rows, eps_block, /*shared_eps=*/true, Objective::Iwae, 0.0,
                  nullptr, &losses, ws);
  return losses;
}

inline std::vector<double> evaluate_losses(const MlpParams& p, const Matrix& x,
                                           const Matrix& eps_block) {
  BatchWorkspace ws;
  return evaluate_losses(p, x, eps_block, ws);
}

inline Matrix draw_eps_block(SeededRng& rng, std::size_t k, std::size_t d) {
  Matrix eps(k, d);
  for (auto& e : eps.data) e = rng.gauss();
  return eps;
}

// Train one ensemble member on already-scaled data. labeled_rows, when given
// and non-empty, enables the semi-supervised objective: every update adds
// gamma times the mean CUBO gradient over a labeled-outlier minibatch. With
// cfg.dp set, per-sample gradients are clipped and noised and training also
// stops at the update budget. A DP config with sigma = 0 and C = infinity is
// a no-op mechanism and runs the plain gradient path.
inline MemberRun train_member(const Matrix& x_scaled, const TrainConfig& cfg,
                              std::uint64_t seed, std::size_t member_index,
                              const std::vector<std::size_t>* labeled_rows = nullptr,
                              const CheckpointObserver& observer = {}) {
  const std::size_t n = x_scaled.rows;
  const std::size_t dim = x_scaled.cols;
  if (n < 4) throw DataError("train_member: dataset too small (need >= 4 rows)");
  if (cfg.dp && cfg.dp->update_budget < 1)
    throw ArgumentError("train_member: DP update budget must be >= 1");

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  SeededRng init_rng(derive_seed(seed, stream_tag::kInit));
  SeededRng train_rng(derive_seed(seed, stream_tag::kTrain));
  SeededRng eval_rng(derive_seed(seed, stream_tag::kEval));
  SeededRng semi_rng(derive_seed(seed, stream_tag::kSemi));
  SeededRng dp_rng(derive_seed(seed, stream_tag::kDpNoise));

  MlpConfig shape{dim, cfg.latent_dim, cfg.hidden_dim, OutputAct::Sigmoid};
  MlpParams params = init_params(init_rng, shape, cfg.init);
  AdamState adam(shape, AdamConfig{.lr = cfg.lr});

  const bool use_semi =
      labeled_rows && !labeled_rows->empty() && cfg.semi_gamma != 0.0;
  const bool dp_active =
      cfg.dp && !(cfg.dp->mech.noise_mult == 0.0 && std::isinf(cfg.dp->mech.clip_norm));
  if (dp_active && use_semi)
    throw ArgumentError("train_member: DP mode does not combine with CUBO labels");

  detail::EpochBatcher batcher(n, cfg.batch, &train_rng);
  std::optional<detail::LabeledBatcher> labeled_batcher;
  if (use_semi)
    labeled_batcher.emplace(*labeled_rows, std::min(cfg.batch, n), &semi_rng);

  BatchWorkspace bws;
  Matrix eps_batch;
  MlpParams grad(shape), cubo_sum(shape);

  // per-sample machinery, only exercised when the DP mechanism is live
  MlpWorkspace sample_ws;
  MlpParams sample_grad(shape);
  std::optional<DpAccumulator> dp_acc;
  if (dp_active) dp_acc.emplace(cfg.dp->mech, shape, &dp_rng);

  std::vector<std::size_t> batch_idx, labeled_idx;

  PatienceGate gate(cfg.n_pat);
  MemberRun run;
  bool have_snapshot = false;
  std::uint64_t updates = 0;

  for (;;) {
    std::size_t steps = cfg.n_u;
    if (cfg.dp) {
      const std::uint64_t left = cfg.dp->update_budget - updates;
      steps = std::min<std::uint64_t>(steps, left);
    }

    for (std::size_t s = 0; s < steps; ++s) {
      batcher.next(batch_idx);
      const std::size_t m = batch_idx.size();
      if (dp_active) {
        dp_acc->reset();
        for (std::size_t idx : batch_idx) {
          sample_grad.fill(0.0);
          iwae_grad(params, x_scaled.row(idx), cfg.k_samples, train_rng,
                    sample_grad, sample_ws);
          dp_acc->add(sample_grad);
        }
        grad = dp_acc->finish();
      } else {
        detail::draw_eps_into(eps_batch, m * cfg.k_samples, cfg.latent_dim,
                              train_rng);
        grad.fill(0.0);
        batch_objective(params, x_scaled, batch_idx, eps_batch,
                        /*shared_eps=*/false, Objective::Iwae, 0.0, &grad, nullptr,
                        bws);
        scale_params(grad, 1.0 / static_cast<double>(m));
        if (use_semi) {
          labeled_batcher->next(labeled_idx);
          detail::draw_eps_into(eps_batch, labeled_idx.size() * cfg.k_samples,
                                cfg.latent_dim, semi_rng);
          cubo_sum.fill(0.0);
          batch_objective(params, x_scaled, labeled_idx, eps_batch,
                          /*shared_eps=*/false, Objective::Cubo, cfg.semi_u,
                          &cubo_sum, nullptr, bws);
          axpy_params(grad, cfg.semi_gamma / static_cast<double>(labeled_idx.size()),
                      cubo_sum);
        }
      }
      adam_step(adam, params, grad);
      ++updates;
    }

    // Checkpoint: full-dataset losses on the evaluation stream.
    const Matrix eps = draw_eps_block(eval_rng, cfg.k_samples, cfg.latent_dim);
    const std::vector<double> losses = evaluate_losses(params, x_scaled, eps, bws);
    const Gmm2Fit fit = fit_gmm2(normalize_losses(losses));
    const double wd = wasserstein_gauss(fit);
    run.trajectory.push_back({updates, wd, elapsed()});
    if (observer) observer(member_index, updates, wd, losses);

    const auto r = gate.observe(wd);
    if (r.improved || !have_snapshot) {
      run.snapshot.params = params;
      run.snapshot.wd = gate.best();
      run.snapshot.update_count = updates;
      run.snapshot.member = member_index;
      have_snapshot = true;
    }
    if (r.stop) break;
    if (cfg.dp && updates >= cfg.dp->update_budget) break;
  }

  run.total_updates = updates;
  run.seconds = elapsed();
  return run;
}

// Ensemble ODIM scores: per-sample losses under each snapshot, averaged in
// member order. Every member restarts the scoring stream from the same seed,
// so all members see identical latent draws.
inline std::vector<double> score_ensemble(const Matrix& x_scaled,
                                          std::span<const Snapshot> snapshots,
                                          std::size_t k, std::uint64_t score_seed,
                                          bool normalize_member_scores = false,
                                          std::size_t threads = 0) {
  if (snapshots.empty()) throw ArgumentError("score_ensemble: need >= 1 snapshot");
  const std::size_t b = snapshots.size();
  std::vector<std::vector<double>> member_losses(b);

  std::size_t nthreads = threads ? threads : std::thread::hardware_concurrency();
  nthreads = std::max<std::size_t>(1, std::min(nthreads, b));

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(nthreads);
  auto work = [&](std::size_t tid) {
    try {
      BatchWorkspace ws;
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= b) break;
        SeededRng rng(score_seed);
        const Matrix eps =
            draw_eps_block(rng, k, snapshots[i].params.cfg.latent_dim);
        member_losses[i] = evaluate_losses(snapshots[i].params, x_scaled, eps, ws);
        if (normalize_member_scores)
          member_losses[i] = normalize_losses(member_losses[i]);
      }
    } catch (...) {
      errors[tid] = std::current_exception();
    }
  };
  if (nthreads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> scores(x_scaled.rows, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t r = 0; r < scores.size(); ++r) scores[r] += member_losses[i][r];
  for (auto& s : scores) s /= static_cast<double>(b);
  return scores;
}

namespace detail {

inline void attach_metrics(ScoreReport& report) {
  if (!report.labels) return;
  bool pos = false, neg = false;
  for (int y : *report.labels) (y != 0 ? pos : neg) = true;
  if (!pos || !neg) {
    report.warnings.push_back("labels are single-class; AUC/PR skipped");
    return;
  }
  report.auc = roc_auc(report.scores, *report.labels);
  report.average_precision = average_precision(report.scores, *report.labels);
}

inline ScoreReport run_odim_impl(const Matrix& x_raw, const TrainConfig& cfg,
                                 const std::vector<std::size_t>* labeled_rows,
                                 const std::vector<int>* labels,
                                 const CheckpointObserver& observer) {
  if (x_raw.rows < 4) throw DataError("run_odim: dataset too small (need >= 4 rows)");
  if (labels && labels->size() != x_raw.rows)
    throw ShapeError("run_odim: labels length mismatch");
  if (labeled_rows)
    for (std::size_t r : *labeled_rows)
      if (r >= x_raw.rows)
        throw ArgumentError("run_odim: labeled row index out of range");

  const ScalerParams scaler = fit_scaler(x_raw, cfg.scaler);
  const Matrix x = transform(x_raw, scaler);

  const std::size_t b = cfg.ensemble;
  std::vector<MemberRun> runs(b);
  std::size_t nthreads = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  nthreads = std::max<std::size_t>(1, std::min(nthreads, b));

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(nthreads);
  auto work = [&](std::size_t tid) {
    try {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= b) break;
        runs[i] = train_member(x, cfg, member_seed(cfg.seed, i), i, labeled_rows,
                               observer);
      }
    } catch (...) {
      errors[tid] = std::current_exception();
    }
  };
  if (nthreads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<Snapshot> snaps;
  snaps.reserve(b);
  for (auto& r : runs) snaps.push_back(r.snapshot);

  ScoreReport report;
  report.scores = score_ensemble(x, snaps, cfg.k_samples,
                                 derive_seed(cfg.seed, stream_tag::kScore),
                                 cfg.normalize_member_scores, cfg.threads);
  report.members = std::move(runs);
  if (labels) report.labels = *labels;
  attach_metrics(report);
  return report;
}

}  // namespace detail

// The full pipeline: fit scaler, transform, train B members on independent
// derived seeds, ensemble-score, attach AUC/PR when labels are supplied.
inline ScoreReport run_odim(const Matrix& x_raw, const TrainConfig& cfg,
                            const std::vector<int>* labels = nullptr,
                            const CheckpointObserver& observer = {}) {
  return detail::run_odim_impl(x_raw, cfg, nullptr, labels, observer);
}

// Semi-supervised variant: labeled outlier rows contribute a CUBO term. An
// empty labeled set falls back to the unsupervised path with a warning.
inline ScoreReport run_odim_semisupervised(const Matrix& x_raw,
                                           const std::vector<std::size_t>& labeled_rows,
                                           const TrainConfig& cfg,
                                           const std::vector<int>* labels = nullptr,
                                           const CheckpointObserver& observer = {}) {
  if (labeled_rows.empty()) {
    ScoreReport report = detail::run_odim_impl(x_raw, cfg, nullptr, labels, observer);
    report.warnings.insert(report.warnings.begin(),
                           "labeled outlier set is empty; ran unsupervised");
    return report;
  }
  return detail::run_odim_impl(x_raw, cfg, &labeled_rows, labels, observer);
}

}  // namespace odim
