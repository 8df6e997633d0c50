#ifndef UPL_LOSSES_HPP
#define UPL_LOSSES_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "upl/core.hpp"

namespace upl {

enum class LossKind { TripletHN, Vlc, Unified, WeightedUnified, AdaptiveMarginUnified };

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::TripletHN: return "triplet-hn";
    case LossKind::Vlc: return "vlc";
    case LossKind::Unified: return "unified";
    case LossKind::WeightedUnified: return "weighted-unified";
    case LossKind::AdaptiveMarginUnified: return "adaptive-margin-unified";
  }
  return "unknown";
}

/// Accepts both dashed and underscored spellings.
inline LossKind parse_loss_kind(std::string_view name) {
  std::string n(name);
  for (char& c : n)
    if (c == '_') c = '-';
  for (auto k : {LossKind::TripletHN, LossKind::Vlc, LossKind::Unified, LossKind::WeightedUnified,
                 LossKind::AdaptiveMarginUnified})
    if (n == to_string(k)) return k;
  throw Error(ErrorKind::InvalidArgument, "unknown loss kind '" + std::string(name) + "'");
}

struct LossSpec {
  LossKind kind = LossKind::Unified;
  double margin = 0.2;
  double gamma = 60.0;
  /// B x B, diagonal holds w_ii. weighted-unified only.
  std::optional<Matrix> weights;
  /// Per-anchor margins m_i. adaptive-margin-unified only.
  std::optional<std::vector<double>> margins;

  void validate() const {
    if (!(margin >= 0.0) || !std::isfinite(margin))
      throw Error(ErrorKind::InvalidArgument, "margin must be finite and >= 0");
    if (!(gamma > 0.0) || !std::isfinite(gamma))
      throw Error(ErrorKind::InvalidArgument, "gamma must be finite and > 0");
    if (weights) {
      for (double w : weights->flat())
        if (!(w > 0.0) || !std::isfinite(w))
          throw Error(ErrorKind::InvalidArgument, "weights must be strictly positive");
    }
    if (margins) {
      for (double mi : *margins)
        if (!(mi >= 0.0) || !std::isfinite(mi))
          throw Error(ErrorKind::InvalidArgument, "per-anchor margins must be >= 0");
    }
  }
};

/// Loss total with its per-anchor decomposition in both retrieval directions.
struct LossValue {
  double total = 0.0;
  std::vector<double> per_anchor_i2t;
  std::vector<double> per_anchor_t2i;
};

namespace detail {

inline LossValue sum_terms(std::vector<double> i2t, std::vector<double> t2i) {
  LossValue out;
  // ascending anchor order, i2t block first
  for (double x : i2t) out.total += x;
  for (double x : t2i) out.total += x;
  out.per_anchor_i2t = std::move(i2t);
  out.per_anchor_t2i = std::move(t2i);
  return out;
}

// Shared kernel of the log-sum-exp family. Anchor i in direction i2t sees
// exponent arguments gamma * (w(i,j) s(i,j) - w(i,i) s(i,i) + margin(i)) over j != i;
// t2i uses s(j,i) and w(j,i). Each term is divided by gamma unless `scaled` is false.
template <typename WeightFn, typename MarginFn>
LossValue unified_family(const SimilarityMatrix& s, double gamma, WeightFn weight,
                         MarginFn margin, bool scaled = true) {
  const std::size_t b = s.size();
  std::vector<double> i2t(b, 0.0), t2i(b, 0.0);
  std::vector<double> args;
  args.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double pos = weight(i, i) * s(i, i);
    const double mi = margin(i);
    args.clear();
    for (std::size_t j = 0; j < b; ++j)
      if (j != i) args.push_back(gamma * (weight(i, j) * s(i, j) - pos + mi));
    i2t[i] = scaled ? log1p_sum_exp(args) / gamma : log1p_sum_exp(args);
    args.clear();
    for (std::size_t j = 0; j < b; ++j)
      if (j != i) args.push_back(gamma * (weight(j, i) * s(j, i) - pos + mi));
    t2i[i] = scaled ? log1p_sum_exp(args) / gamma : log1p_sum_exp(args);
  }
  return sum_terms(std::move(i2t), std::move(t2i));
}

inline double unit_weight(std::size_t, std::size_t) { return 1.0; }

}  // namespace detail

/// Hinge on the hardest in-batch negative in each direction. B = 1 gives zero.
inline LossValue loss_triplet_hn(const SimilarityMatrix& s, double margin) {
  const std::size_t b = s.size();
  std::vector<double> i2t(b, 0.0), t2i(b, 0.0);
  if (b >= 2) {
    for (std::size_t i = 0; i < b; ++i) {
      double hard_row = -INFINITY, hard_col = -INFINITY;
      for (std::size_t j = 0; j < b; ++j) {
        if (j == i) continue;
        hard_row = std::max(hard_row, s(i, j));
        hard_col = std::max(hard_col, s(j, i));
      }
      i2t[i] = std::max(0.0, hard_row - s(i, i) + margin);
      t2i[i] = std::max(0.0, hard_col - s(i, i) + margin);
    }
  }
  return detail::sum_terms(std::move(i2t), std::move(t2i));
}

/// Bidirectional softmax cross-entropy with scale gamma, in its ratio form:
/// -log(exp(gamma s_ii) / sum_j exp(gamma s_ij)). Not divided by gamma.
inline LossValue loss_vlc(const SimilarityMatrix& s, double gamma) {
  if (!(gamma > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be > 0");
  const std::size_t b = s.size();
  std::vector<double> i2t(b), t2i(b);
  // log sum_j exp(x_j) = x_top + log1p(sum_{j != top} exp(x_j - x_top)), minus x_i.
  auto neg_log_softmax = [&](auto&& entry, std::size_t i) {
    std::size_t top = 0;
    for (std::size_t j = 1; j < b; ++j)
      if (entry(j) > entry(top)) top = j;
    const double peak = gamma * entry(top);
    double rest = 0.0;
    for (std::size_t j = 0; j < b; ++j)
      if (j != top) rest += std::exp(gamma * entry(j) - peak);
    return (peak - gamma * entry(i)) + std::log1p(rest);
  };
  for (std::size_t i = 0; i < b; ++i) {
    i2t[i] = neg_log_softmax([&](std::size_t j) { return s(i, j); }, i);
    t2i[i] = neg_log_softmax([&](std::size_t j) { return s(j, i); }, i);
  }
  return detail::sum_terms(std::move(i2t), std::move(t2i));
}

/// The same contrastive loss written over pair differences:
/// log(1 + sum_{j != i} exp(gamma (s_ij - s_ii))).
inline LossValue loss_vlc_pair_form(const SimilarityMatrix& s, double gamma) {
  if (!(gamma > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be > 0");
  return detail::unified_family(
      s, gamma, detail::unit_weight, [](std::size_t) { return 0.0; }, false);
}

/// (1/gamma) log(1 + sum_{j != i} exp(gamma (s_ij - s_ii + m))) in both directions.
inline LossValue loss_unified(const SimilarityMatrix& s, double margin, double gamma) {
  LossSpec{LossKind::Unified, margin, gamma}.validate();
  return detail::unified_family(s, gamma, detail::unit_weight,
                                [margin](std::size_t) { return margin; });
}

/// Unified loss with similarities multiplied by caller-supplied weights inside the exponent.
/// The diagonal weight w_ii is shared by both directions of anchor i.
inline LossValue loss_weighted_unified(const SimilarityMatrix& s, const LossSpec& spec) {
  spec.validate();
  if (!spec.weights) throw Error(ErrorKind::MissingWeights, "weighted loss needs a weight matrix");
  const Matrix& w = *spec.weights;
  if (w.rows() != s.size() || w.cols() != s.size())
    throw Error(ErrorKind::ShapeMismatch, "weight matrix must be B x B");
  const double m = spec.margin;
  return detail::unified_family(
      s, spec.gamma, [&w](std::size_t i, std::size_t j) { return w(i, j); },
      [m](std::size_t) { return m; });
}

/// Unified loss where anchor i uses its own margin m_i in both directions.
inline LossValue loss_adaptive_margin_unified(const SimilarityMatrix& s, double gamma,
                                              std::span<const double> margins) {
  if (margins.size() != s.size())
    throw Error(ErrorKind::MarginLengthMismatch,
                "expected " + std::to_string(s.size()) + " margins, got " +
                    std::to_string(margins.size()));
  LossSpec{LossKind::AdaptiveMarginUnified, 0.0, gamma, std::nullopt,
           std::vector<double>(margins.begin(), margins.end())}
      .validate();
  return detail::unified_family(s, gamma, detail::unit_weight,
                                [margins](std::size_t i) { return margins[i]; });
}

/// Dispatches on spec.kind.
inline LossValue evaluate_loss(const LossSpec& spec, const SimilarityMatrix& s) {
  spec.validate();
  switch (spec.kind) {
    case LossKind::TripletHN: return loss_triplet_hn(s, spec.margin);
    case LossKind::Vlc: return loss_vlc(s, spec.gamma);
    case LossKind::Unified: return loss_unified(s, spec.margin, spec.gamma);
    case LossKind::WeightedUnified: return loss_weighted_unified(s, spec);
    case LossKind::AdaptiveMarginUnified:
      if (!spec.margins)
        throw Error(ErrorKind::MarginLengthMismatch, "adaptive-margin loss needs margins");
      return loss_adaptive_margin_unified(s, spec.gamma, *spec.margins);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown loss kind");
}

/// |unified - triplet-hn|; bounded by 2 B log(B) / gamma.
inline double triplet_limit_gap(const SimilarityMatrix& s, double margin, double gamma) {
  return std::abs(loss_unified(s, margin, gamma).total - loss_triplet_hn(s, margin).total);
}

inline double triplet_limit_bound(std::size_t batch, double gamma) {
  const double b = static_cast<double>(batch);
  return 2.0 * b * std::log(b) / gamma;
}

}  // namespace upl

#endif  // UPL_LOSSES_HPP
