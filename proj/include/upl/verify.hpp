#ifndef UPL_VERIFY_HPP
#define UPL_VERIFY_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "upl/core.hpp"
#include "upl/gradients.hpp"
#include "upl/losses.hpp"

namespace upl {

/// B x D matrix of independent standard normal entries.
inline Matrix random_gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = gauss(rng);
  return m;
}

inline constexpr double kKinkExclusion = 1e-4;
inline constexpr double kGradTolerance = 1e-5;

struct GradcheckConfig {
  LossSpec loss;
  std::size_t batch_size = 8;
  std::size_t dim = 16;
  std::size_t trials = 50;
  double h = 1e-6;
  std::uint64_t seed = 1;
};

struct GradcheckTrial {
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckTrial> trials;
  std::size_t skipped = 0;
  double worst = 0.0;
  std::uint64_t worst_seed = 0;

  bool passed() const { return worst <= kGradTolerance; }
};

/// Compares the analytic raw-coordinate gradient against central differences on `trials`
/// random batches. Seeds are consecutive from cfg.seed; triplet-hn draws within 1e-4 of a
/// hinge or argmax tie are skipped and replaced by the next seed.
inline GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  cfg.loss.validate();
  if (!(cfg.h >= 1e-8 && cfg.h <= 1e-4))
    throw Error(ErrorKind::InvalidArgument, "finite-difference step must lie in [1e-8, 1e-4]");
  if (cfg.batch_size < 1 || cfg.dim < 2)
    throw Error(ErrorKind::InvalidArgument, "need batch_size >= 1 and dim >= 2");
  GradcheckReport rep;
  const auto loss = make_raw_loss(cfg.loss);
  std::uint64_t seed = cfg.seed;
  const std::size_t max_draws = 1000 * (cfg.trials + 1);
  for (std::size_t draws = 0; rep.trials.size() < cfg.trials; ++draws, ++seed) {
    if (draws >= max_draws)
      throw Error(ErrorKind::InvalidArgument, "too many draws skipped near kinks");
    std::mt19937_64 rng(seed);
    const Matrix v = random_gaussian(rng, cfg.batch_size, cfg.dim);
    const Matrix t = random_gaussian(rng, cfg.batch_size, cfg.dim);
    if (cfg.loss.kind == LossKind::TripletHN &&
        triplet_kink_distance(cosine_similarity_matrix(normalize_rows(v), normalize_rows(t)),
                              cfg.loss.margin) < kKinkExclusion) {
      ++rep.skipped;
      continue;
    }
    const double err = max_relative_error(raw_gradient(cfg.loss, v, t),
                                          finite_diff_grad(loss, v, t, cfg.h));
    rep.trials.push_back({seed, err});
    if (rep.trials.size() == 1 || err > rep.worst) {
      rep.worst = err;
      rep.worst_seed = seed;
    }
  }
  return rep;
}

struct LimitRow {
  double gamma = 0.0;
  /// worst |gamma * unified(m=0) - vlc| / |vlc|
  double identity_error = 0.0;
  /// worst |unified - triplet-hn| over the batches
  double max_gap = 0.0;
  /// worst gamma * |unified - triplet-hn|
  double max_scaled_gap = 0.0;
  double bound = 0.0;
  bool bound_ok = true;
};

struct LimitsConfig {
  std::size_t batch_size = 8;
  std::size_t dim = 16;
  double margin = 0.2;
  std::vector<double> gammas{1e2, 1e3, 1e4};
  std::size_t batches = 100;
  std::uint64_t seed = 1;
};

struct LimitsReport {
  std::vector<LimitRow> rows;
  /// gamma * gap never grows along the ascending gamma list, batch by batch.
  bool shrinks_like_inverse_gamma = true;

  bool passed(double identity_tol = 1e-12) const {
    if (!shrinks_like_inverse_gamma) return false;
    for (const LimitRow& r : rows)
      if (!r.bound_ok || r.identity_error > identity_tol) return false;
    return true;
  }
};

/// Checks gamma * unified(m=0) == vlc and |unified - triplet-hn| <= 2 B log(B) / gamma on
/// random unit batches for every gamma in the (ascending) list.
inline LimitsReport run_limits(const LimitsConfig& cfg) {
  if (cfg.gammas.empty()) throw Error(ErrorKind::InvalidArgument, "gamma list is empty");
  for (std::size_t k = 1; k < cfg.gammas.size(); ++k)
    if (!(cfg.gammas[k] > cfg.gammas[k - 1]))
      throw Error(ErrorKind::InvalidArgument, "gamma list must be strictly ascending");
  LimitsReport rep;
  for (double g : cfg.gammas) {
    LimitRow row;
    row.gamma = g;
    row.bound = triplet_limit_bound(cfg.batch_size, g);
    rep.rows.push_back(row);
  }
  for (std::size_t b = 0; b < cfg.batches; ++b) {
    std::mt19937_64 rng(cfg.seed + b);
    const EmbeddingBatch v = normalize_rows(random_gaussian(rng, cfg.batch_size, cfg.dim));
    const EmbeddingBatch t = normalize_rows(random_gaussian(rng, cfg.batch_size, cfg.dim));
    const SimilarityMatrix s = cosine_similarity_matrix(v, t);
    double prev_scaled = INFINITY;
    for (LimitRow& row : rep.rows) {
      const double vlc = loss_vlc(s, row.gamma).total;
      const double scaled = row.gamma * loss_unified(s, 0.0, row.gamma).total;
      const double denom = std::max(std::abs(vlc), 1e-300);
      row.identity_error = std::max(row.identity_error, std::abs(scaled - vlc) / denom);
      const double triplet = loss_triplet_hn(s, cfg.margin).total;
      const double gap = triplet_limit_gap(s, cfg.margin, row.gamma);
      row.max_gap = std::max(row.max_gap, gap);
      row.max_scaled_gap = std::max(row.max_scaled_gap, row.gamma * gap);
      if (gap > row.bound) row.bound_ok = false;
      // the gap is a difference of two totals, each rounded to a few ulps
      const double rounding =
          row.gamma * 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, triplet);
      if (row.gamma * gap > prev_scaled + rounding) rep.shrinks_like_inverse_gamma = false;
      prev_scaled = row.gamma * gap;
    }
  }
  return rep;
}

}  // namespace upl

#endif  // UPL_VERIFY_HPP
