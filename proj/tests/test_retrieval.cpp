#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "upl/retrieval.hpp"

using namespace upl;

namespace {

SimilarityMatrix permuted(const SimilarityMatrix& s, const std::vector<std::size_t>& p) {
  Matrix m(s.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) m(i, j) = s(p[i], p[j]);
  return SimilarityMatrix(m);
}

}  // namespace

TEST(HardestNegative, Enumeration) {
  const SimilarityMatrix s(Matrix{{0.8, 0.3, 0.5}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}});
  EXPECT_EQ(mine_hardest_negative(s, 0, Direction::I2T), 2u);
}

TEST(HardestNegative, TieGoesToLowestIndex) {
  const SimilarityMatrix s(Matrix{{0.8, 0.5, 0.5}, {0.5, 0.0, 0.0}, {0.5, 0.0, 0.0}});
  EXPECT_EQ(mine_hardest_negative(s, 0, Direction::I2T), 1u);
  EXPECT_EQ(mine_hardest_negative(s, 0, Direction::T2I), 1u);
  EXPECT_EQ(mine_hardest_negative(s, 1, Direction::I2T), 0u);
}

TEST(HardestNegative, MatchesExhaustiveScan) {
  std::mt19937_64 rng(127);
  for (int trial = 0; trial < 20; ++trial) {
    const SimilarityMatrix s = oracle::random_similarity(rng, 16);
    for (std::size_t i = 0; i < 16; ++i) {
      for (Direction d : {Direction::I2T, Direction::T2I}) {
        std::size_t best = 16;
        for (std::size_t j = 0; j < 16; ++j) {
          if (j == i) continue;
          const double x = d == Direction::I2T ? s(i, j) : s(j, i);
          const double y = best == 16 ? -INFINITY : (d == Direction::I2T ? s(i, best) : s(best, i));
          if (x > y) best = j;
        }
        EXPECT_EQ(mine_hardest_negative(s, i, d), best);
      }
    }
  }
}

TEST(HardestNegative, Errors) {
  try {
    mine_hardest_negative(SimilarityMatrix(Matrix{{1.0}}), 0, Direction::I2T);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewItems);
  }
  EXPECT_THROW(gap_stats(SimilarityMatrix(Matrix{{1.0}})), Error);
}

TEST(Recall, DiagonalDominantIsPerfect) {
  Matrix m(5, 5, 0.1);
  for (std::size_t i = 0; i < 5; ++i) m(i, i) = 0.9;
  const SimilarityMatrix s(m);
  EXPECT_EQ(recall_at_k(s, 1, Direction::I2T), 100.0);
  EXPECT_EQ(recall_at_k(s, 1, Direction::T2I), 100.0);
}

TEST(Recall, PositiveRankedLastGivesZero) {
  Matrix m(4, 4, 0.5);
  for (std::size_t i = 0; i < 4; ++i) m(i, i) = -0.5;
  const SimilarityMatrix s(m);
  EXPECT_EQ(recall_at_k(s, 1, Direction::I2T), 0.0);
  EXPECT_EQ(recall_at_k(s, 3, Direction::T2I), 0.0);
  EXPECT_EQ(recall_at_k(s, 4, Direction::T2I), 100.0);
}

TEST(Recall, MatchesFullSort) {
  std::mt19937_64 rng(131);
  for (int trial = 0; trial < 10; ++trial) {
    const SimilarityMatrix s = oracle::random_similarity(rng, 32, 4);
    for (std::size_t k : {1u, 5u, 10u, 32u}) {
      EXPECT_EQ(recall_at_k(s, k, Direction::I2T), oracle::recall(s.matrix(), k, true));
      EXPECT_EQ(recall_at_k(s, k, Direction::T2I), oracle::recall(s.matrix(), k, false));
    }
  }
}

TEST(Recall, TiesBrokenByLowestIndex) {
  const SimilarityMatrix s(Matrix{{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_EQ(recall_at_k(s, 1, Direction::I2T), 50.0);
  EXPECT_EQ(positive_rank(s, 0, Direction::I2T), 0u);
  EXPECT_EQ(positive_rank(s, 1, Direction::I2T), 1u);
}

TEST(Recall, BadCutoff) {
  const SimilarityMatrix s(Matrix{{0.5, 0.1}, {0.1, 0.5}});
  for (std::size_t k : {0u, 3u}) {
    try {
      recall_at_k(s, k, Direction::I2T);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::BadCutoff);
    }
  }
}

TEST(Recall, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(137);
  for (int trial = 0; trial < 10; ++trial) {
    const SimilarityMatrix s = oracle::random_similarity(rng, 20, 6);
    Matrix m = s.matrix();
    for (double& x : m.flat()) x = std::tanh(3.0 * x) / std::tanh(3.0);
    EXPECT_EQ(evaluate_retrieval(SimilarityMatrix(m)), evaluate_retrieval(s));
  }
}

TEST(Recall, InvariantUnderSharedPermutation) {
  std::mt19937_64 rng(139);
  const SimilarityMatrix s = oracle::random_similarity(rng, 24, 5);
  std::vector<std::size_t> p(24);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  EXPECT_EQ(evaluate_retrieval(permuted(s, p)), evaluate_retrieval(s));
  const GapStats a = gap_stats(permuted(s, p)), b = gap_stats(s);
  EXPECT_NEAR(a.gap, b.gap, 1e-15);
}

TEST(Metrics, RsumAndMonotoneInK) {
  RetrievalMetrics all;
  all.i2t = {100, 100, 100};
  all.t2i = {100, 100, 100};
  EXPECT_EQ(rsum(all), 600.0);
  std::mt19937_64 rng(149);
  const RetrievalMetrics m = evaluate_retrieval(oracle::random_similarity(rng, 40, 4));
  EXPECT_NEAR(m.rsum, m.i2t[0] + m.i2t[1] + m.i2t[2] + m.t2i[0] + m.t2i[1] + m.t2i[2], 1e-9);
  EXPECT_LE(m.i2t[0], m.i2t[1]);
  EXPECT_LE(m.i2t[1], m.i2t[2]);
  EXPECT_LE(m.t2i[0], m.t2i[1]);
  EXPECT_LE(m.t2i[1], m.t2i[2]);
}

TEST(Metrics, SmallBatchClampsCutoffs) {
  const RetrievalMetrics m = evaluate_retrieval(SimilarityMatrix(Matrix{{0.9, 0.1}, {0.2, 0.8}}));
  EXPECT_EQ(m.rsum, 600.0);
}

TEST(GapStats, HandCase) {
  const GapStats g = gap_stats(SimilarityMatrix(Matrix{{0.9, 0.1}, {0.2, 0.8}}));
  EXPECT_NEAR(g.mean_positive, 0.85, 1e-15);
  EXPECT_NEAR(g.mean_hardest_negative, 0.15, 1e-15);
  EXPECT_NEAR(g.gap, 0.7, 1e-15);
}

TEST(GapStats, IdenticalRowsMatchEnumeration) {
  const std::vector<double> row{0.3, -0.2, 0.7, 0.1};
  Matrix m(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) m(i, j) = row[j];
  const GapStats g = gap_stats(SimilarityMatrix(m));
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    pos += row[i];
    double best = -INFINITY;
    for (std::size_t j = 0; j < 4; ++j)
      if (j != i) best = std::max(best, row[j]);
    neg += best;
  }
  EXPECT_NEAR(g.mean_positive, pos / 4, 1e-15);
  EXPECT_NEAR(g.mean_hardest_negative, neg / 4, 1e-15);
}

TEST(GapStats, PositiveWhenTopOneIsPerfect) {
  std::mt19937_64 rng(151);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Matrix m = oracle::random_similarity(rng, 6, 3).matrix();
    for (std::size_t i = 0; i < 6; ++i) m(i, i) = std::min(1.0, m(i, i) + 0.8);
    const SimilarityMatrix s(m);
    if (recall_at_k(s, 1, Direction::I2T) < 100.0) continue;
    ++checked;
    EXPECT_GT(gap_stats(s).gap, 0.0);
  }
  EXPECT_GT(checked, 0);
}
