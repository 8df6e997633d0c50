#ifndef UPL_RETRIEVAL_HPP
#define UPL_RETRIEVAL_HPP

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>

#include "upl/core.hpp"

namespace upl {

/// i2t: visual anchor ranks text candidates (row of s). t2i: text anchor ranks visual
/// candidates (column of s).
enum class Direction { I2T, T2I };

namespace detail {
inline double entry(const SimilarityMatrix& s, Direction d, std::size_t anchor,
                    std::size_t candidate) {
  return d == Direction::I2T ? s(anchor, candidate) : s(candidate, anchor);
}
}  // namespace detail

/// Index of the most similar negative for `anchor`; ties go to the lowest index.
inline std::size_t mine_hardest_negative(const SimilarityMatrix& s, std::size_t anchor,
                                         Direction d) {
  const std::size_t b = s.size();
  if (b < 2) throw Error(ErrorKind::TooFewItems, "hard-negative mining needs B >= 2");
  if (anchor >= b) throw Error(ErrorKind::InvalidArgument, "anchor index out of range");
  std::size_t best = anchor == 0 ? 1 : 0;
  for (std::size_t j = best + 1; j < b; ++j) {
    if (j == anchor) continue;
    if (detail::entry(s, d, anchor, j) > detail::entry(s, d, anchor, best)) best = j;
  }
  return best;
}

/// Zero-based rank of the positive among all candidates ordered by descending similarity,
/// ties broken by lowest candidate index.
inline std::size_t positive_rank(const SimilarityMatrix& s, std::size_t anchor, Direction d) {
  const double pos = s(anchor, anchor);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double x = detail::entry(s, d, anchor, j);
    if (x > pos || (x == pos && j < anchor)) ++rank;
  }
  return rank;
}

/// Percentage of anchors whose positive ranks within the top k.
inline double recall_at_k(const SimilarityMatrix& s, std::size_t k, Direction d) {
  if (k < 1 || k > s.size())
    throw Error(ErrorKind::BadCutoff,
                "k=" + std::to_string(k) + " outside [1, " + std::to_string(s.size()) + "]");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (positive_rank(s, i, d) < k) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(s.size());
}

struct RetrievalMetrics {
  static constexpr std::array<std::size_t, 3> kCutoffs{1, 5, 10};
  std::array<double, 3> i2t{};
  std::array<double, 3> t2i{};
  double rsum = 0.0;

  friend bool operator==(const RetrievalMetrics&, const RetrievalMetrics&) = default;
};

/// Sum of the six recalls.
inline double rsum(const RetrievalMetrics& m) {
  double acc = 0.0;
  for (double r : m.i2t) acc += r;
  for (double r : m.t2i) acc += r;
  return acc;
}

/// R@{1,5,10} in both directions. Cutoffs larger than B are clamped to B.
inline RetrievalMetrics evaluate_retrieval(const SimilarityMatrix& s) {
  RetrievalMetrics m;
  for (std::size_t c = 0; c < RetrievalMetrics::kCutoffs.size(); ++c) {
    const std::size_t k = std::min(RetrievalMetrics::kCutoffs[c], s.size());
    m.i2t[c] = recall_at_k(s, k, Direction::I2T);
    m.t2i[c] = recall_at_k(s, k, Direction::T2I);
  }
  m.rsum = rsum(m);
  return m;
}

struct GapStats {
  double mean_positive = 0.0;
  double mean_hardest_negative = 0.0;
  double gap = 0.0;

  friend bool operator==(const GapStats&, const GapStats&) = default;
};

/// Mean positive similarity against the mean, over visual anchors, of the hardest negative.
inline GapStats gap_stats(const SimilarityMatrix& s) {
  const std::size_t b = s.size();
  if (b < 2) throw Error(ErrorKind::TooFewItems, "gap statistics need B >= 2");
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    pos += s(i, i);
    neg += s(i, mine_hardest_negative(s, i, Direction::I2T));
  }
  GapStats g;
  g.mean_positive = pos / static_cast<double>(b);
  g.mean_hardest_negative = neg / static_cast<double>(b);
  g.gap = g.mean_positive - g.mean_hardest_negative;
  return g;
}

}  // namespace upl

#endif  // UPL_RETRIEVAL_HPP
