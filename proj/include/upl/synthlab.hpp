#ifndef UPL_SYNTHLAB_HPP
#define UPL_SYNTHLAB_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "upl/core.hpp"
#include "upl/gradients.hpp"
#include "upl/losses.hpp"
#include "upl/retrieval.hpp"

namespace upl {

struct SynthConfig {
  std::size_t n_pairs = 256;
  std::size_t dim = 32;
  /// Per-coordinate standard deviation of the isotropic perturbation.
  double noise_sigma = 0.3;
  std::uint64_t seed = 7;
  /// Length of one random direction added to every item of both modalities; 0 disables it.
  double common_offset = 0.0;

  void validate() const {
    if (n_pairs < 2) throw Error(ErrorKind::InvalidArgument, "n_pairs must be >= 2");
    if (dim < 2) throw Error(ErrorKind::InvalidArgument, "dim must be >= 2");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
      throw Error(ErrorKind::InvalidArgument, "noise_sigma must be >= 0");
    if (!(common_offset >= 0.0) || !std::isfinite(common_offset))
      throw Error(ErrorKind::InvalidArgument, "common_offset must be >= 0");
  }
};

/// Paired embeddings plus a deterministic 80/20 train/eval split by index.
struct SynthData {
  EmbeddingBatch v;
  EmbeddingBatch t;
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

/// v_i = normalize(z_i + c + e_i), t_i = normalize(z_i + c + e'_i) for unit latents z_i, an
/// optional shared offset c and independent Gaussian perturbations e, e'.
inline SynthData generate_synthetic_pairs(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = cfg.n_pairs, d = cfg.dim;

  Matrix latent(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = latent.row(i);
    double nrm = 0.0;
    do {
      for (double& x : row) x = gauss(rng);
      nrm = norm(row);
    } while (nrm < kZeroRowEpsilon);
    for (double& x : row) x /= nrm;
  }
  std::vector<double> shared(d, 0.0);
  if (cfg.common_offset > 0.0) {
    for (double& x : shared) x = gauss(rng);
    const double nrm = norm(shared);
    for (double& x : shared) x *= cfg.common_offset / nrm;
  }
  auto perturb = [&] {
    Matrix m = latent;
    for (std::size_t i = 0; i < n; ++i) {
      auto row = m.row(i);
      for (std::size_t k = 0; k < d; ++k) row[k] += shared[k] + cfg.noise_sigma * gauss(rng);
    }
    return m;
  };
  Matrix v = perturb();
  Matrix t = perturb();

  const std::size_t n_train = std::max<std::size_t>(1, (n * 4) / 5);
  std::vector<std::size_t> train(n_train), eval(n - n_train);
  std::iota(train.begin(), train.end(), std::size_t{0});
  std::iota(eval.begin(), eval.end(), n_train);
  return {normalize_rows(v), normalize_rows(t), std::move(train), std::move(eval)};
}

/// Rows of `batch` at `idx`, in order.
inline EmbeddingBatch select_rows(const EmbeddingBatch& batch, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), batch.dim());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= batch.size()) throw Error(ErrorKind::InvalidArgument, "row index out of range");
    std::copy(batch[idx[r]].begin(), batch[idx[r]].end(), out.row(r).begin());
  }
  return EmbeddingBatch::from_unit_rows(std::move(out));
}

enum class OptimizerKind { PlainGD, Momentum, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::PlainGD;
  /// momentum coefficient, or Adam's first-moment decay
  double beta = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  LossSpec loss;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  OptimizerConfig optimizer;
  std::uint64_t seed = 7;
  std::size_t eval_every = 1;

  void validate(std::size_t n_pairs) const {
    loss.validate();
    if (loss.kind == LossKind::WeightedUnified || loss.kind == LossKind::AdaptiveMarginUnified)
      throw Error(ErrorKind::InvalidArgument,
                  "training supports triplet-hn, vlc and unified only");
    if (epochs < 1) throw Error(ErrorKind::InvalidArgument, "epochs must be >= 1");
    if (batch_size < 2 || batch_size > n_pairs)
      throw Error(ErrorKind::InvalidArgument, "batch_size must lie in [2, n_pairs]");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw Error(ErrorKind::InvalidArgument, "learning_rate must be >= 0");
    if (!(optimizer.beta >= 0.0 && optimizer.beta < 1.0) ||
        !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
      throw Error(ErrorKind::InvalidArgument, "optimizer betas must lie in [0, 1)");
    if (!(optimizer.epsilon > 0.0))
      throw Error(ErrorKind::InvalidArgument, "optimizer epsilon must be > 0");
    if (eval_every < 1) throw Error(ErrorKind::InvalidArgument, "eval_every must be >= 1");
  }
};

/// One evaluation point of a training run.
struct Snapshot {
  std::size_t epoch = 0;
  double loss = 0.0;
  RetrievalMetrics metrics;
  GapStats gap;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

using ExperimentRecord = std::vector<Snapshot>;

/// Free embedding parameters of both modalities with their optimizer buffers.
struct TrainState {
  Matrix v;
  Matrix t;
  Matrix moment_v, moment_t;
  Matrix second_v, second_t;
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::mt19937_64 rng;

  TrainState(const EmbeddingBatch& v0, const EmbeddingBatch& t0, std::uint64_t seed)
      : v(v0.matrix()),
        t(t0.matrix()),
        moment_v(v.rows(), v.cols()),
        moment_t(t.rows(), t.cols()),
        second_v(v.rows(), v.cols()),
        second_t(t.rows(), t.cols()),
        rng(seed) {}
};

namespace detail {

inline void optimizer_step(std::span<double> w, std::span<double> m, std::span<double> q,
                           std::span<const double> g, const TrainConfig& cfg, std::size_t step) {
  const auto& opt = cfg.optimizer;
  const double lr = cfg.learning_rate;
  switch (opt.kind) {
    case OptimizerKind::PlainGD:
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
      return;
    case OptimizerKind::Momentum:
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = opt.beta * m[k] + g[k];
        w[k] -= lr * m[k];
      }
      return;
    case OptimizerKind::Adam: {
      const double c1 = 1.0 - std::pow(opt.beta, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = opt.beta * m[k] + (1.0 - opt.beta) * g[k];
        q[k] = opt.beta2 * q[k] + (1.0 - opt.beta2) * g[k] * g[k];
        w[k] -= lr * (m[k] / c1) / (std::sqrt(q[k] / c2) + opt.epsilon);
      }
      return;
    }
  }
}

inline Matrix gather(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy(m.row(idx[r]).begin(), m.row(idx[r]).end(), out.row(r).begin());
  return out;
}

inline void renormalize(Matrix& m, std::span<const std::size_t> idx) {
  for (std::size_t i : idx) {
    auto row = m.row(i);
    const double n = norm(row);
    if (!std::isfinite(n) || n < kZeroRowEpsilon)
      throw Error(ErrorKind::Diverged, "embedding row " + std::to_string(i) + " degenerated");
    for (double& x : row) x /= n;
  }
}

// Consecutive slices of at most `batch` indices; a trailing singleton is dropped.
inline std::vector<std::span<const std::size_t>> chunks(std::span<const std::size_t> idx,
                                                        std::size_t batch) {
  std::vector<std::span<const std::size_t>> out;
  for (std::size_t start = 0; start < idx.size(); start += batch) {
    const std::size_t len = std::min(batch, idx.size() - start);
    if (len >= 2) out.push_back(idx.subspan(start, len));
  }
  return out;
}

}  // namespace detail

/// Mean minibatch loss over the pairs in index order, with retrieval and gap statistics of the
/// full pair set.
inline Snapshot evaluate_state(const TrainState& st, const TrainConfig& cfg) {
  const EmbeddingBatch v = normalize_rows(st.v);
  const EmbeddingBatch t = normalize_rows(st.t);
  std::vector<std::size_t> all(v.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto parts = detail::chunks(all, cfg.batch_size);
  double acc = 0.0;
  for (const auto& part : parts)
    acc += evaluate_loss(cfg.loss,
                         cosine_similarity_matrix(select_rows(v, part), select_rows(t, part)))
               .total;
  Snapshot snap;
  snap.epoch = st.epoch;
  snap.loss = acc / static_cast<double>(parts.size());
  if (!std::isfinite(snap.loss))
    throw Error(ErrorKind::Diverged, "non-finite loss at epoch " + std::to_string(st.epoch));
  const SimilarityMatrix s = cosine_similarity_matrix(v, t);
  snap.metrics = evaluate_retrieval(s);
  snap.gap = gap_stats(s);
  return snap;
}

/// One shuffled pass over all pairs; rows touched by a step are renormalized after it.
inline void train_epoch(TrainState& st, const TrainConfig& cfg) {
  std::vector<std::size_t> order(st.v.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), st.rng);
  for (const auto& part : detail::chunks(order, cfg.batch_size)) {
    const GradResult g =
        raw_gradient(cfg.loss, detail::gather(st.v, part), detail::gather(st.t, part));
    ++st.step;
    for (std::size_t r = 0; r < part.size(); ++r) {
      const std::size_t i = part[r];
      detail::optimizer_step(st.v.row(i), st.moment_v.row(i), st.second_v.row(i), g.d_v.row(r),
                             cfg, st.step);
      detail::optimizer_step(st.t.row(i), st.moment_t.row(i), st.second_t.row(i), g.d_t.row(r),
                             cfg, st.step);
    }
    detail::renormalize(st.v, part);
    detail::renormalize(st.t, part);
  }
  ++st.epoch;
}

/// Minibatch descent on free embeddings initialized at (v0, t0). Snapshots at epoch 0, every
/// eval_every epochs, and at the final epoch.
inline ExperimentRecord train(const EmbeddingBatch& v0, const EmbeddingBatch& t0,
                              const TrainConfig& cfg) {
  if (v0.size() != t0.size() || v0.dim() != t0.dim())
    throw Error(ErrorKind::ShapeMismatch, "modalities differ in shape");
  cfg.validate(v0.size());
  TrainState st(v0, t0, cfg.seed);
  ExperimentRecord rec;
  rec.push_back(evaluate_state(st, cfg));
  while (st.epoch < cfg.epochs) {
    train_epoch(st, cfg);
    if (st.epoch % cfg.eval_every == 0 || st.epoch == cfg.epochs)
      rec.push_back(evaluate_state(st, cfg));
  }
  return rec;
}

/// Data used by the documented reference experiment.
inline SynthConfig reference_synth_config() {
  SynthConfig cfg;
  cfg.common_offset = 2.0;
  return cfg;
}

/// Training settings of the documented reference experiment for `kind` at m = 0.2, gamma = 60.
inline TrainConfig reference_train_config(LossKind kind = LossKind::Unified) {
  TrainConfig cfg;
  cfg.loss = LossSpec{kind, 0.2, 60.0};
  cfg.epochs = 20;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.03;
  cfg.optimizer.kind = OptimizerKind::Adam;
  cfg.seed = 7;
  return cfg;
}

/// Trains on the training pairs of a generated data set.
inline ExperimentRecord train(const SynthData& data, const TrainConfig& cfg) {
  return train(select_rows(data.v, data.train), select_rows(data.t, data.train), cfg);
}

/// First snapshot epoch whose RSUM reaches `fraction` of the run's final RSUM.
inline std::size_t epochs_to_fraction(const ExperimentRecord& rec, double fraction = 0.95) {
  if (rec.empty()) return 0;
  const double target = fraction * rec.back().metrics.rsum;
  for (const Snapshot& s : rec)
    if (s.metrics.rsum >= target) return s.epoch;
  return rec.back().epoch;
}

struct ComparisonRow {
  LossSpec loss;
  ExperimentRecord record;
  std::size_t epochs_to_95 = 0;
};

/// Trains every loss from the same initial embeddings with the same seed.
inline std::vector<ComparisonRow> run_convergence_comparison(const SynthData& data,
                                                             const std::vector<LossSpec>& losses,
                                                             const TrainConfig& base) {
  std::vector<ComparisonRow> rows;
  for (const LossSpec& l : losses) {
    TrainConfig cfg = base;
    cfg.loss = l;
    ComparisonRow row{l, train(data, cfg), 0};
    row.epochs_to_95 = epochs_to_fraction(row.record);
    rows.push_back(std::move(row));
  }
  return rows;
}

enum class SweepAxis { Margin, Gamma };

struct SweepRow {
  double value = 0.0;
  Snapshot final;
};

/// Final snapshot for each value of the swept hyper-parameter, same data and seed throughout.
inline std::vector<SweepRow> run_sweep(const SynthData& data, SweepAxis axis,
                                       const std::vector<double>& values,
                                       const TrainConfig& base) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "sweep needs at least one value");
  if (!std::is_sorted(values.begin(), values.end()))
    throw Error(ErrorKind::InvalidArgument, "sweep values must be sorted ascending");
  std::vector<SweepRow> rows;
  for (double x : values) {
    TrainConfig cfg = base;
    (axis == SweepAxis::Margin ? cfg.loss.margin : cfg.loss.gamma) = x;
    rows.push_back({x, train(data, cfg).back()});
  }
  return rows;
}

}  // namespace upl

#endif  // UPL_SYNTHLAB_HPP
