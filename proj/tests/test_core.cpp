#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "upl/core.hpp"

using namespace upl;

TEST(NormalizeRows, ThreeFourFive) {
  const EmbeddingBatch b = normalize_rows(Matrix{{3, 4}});
  EXPECT_DOUBLE_EQ(b[0][0], 0.6);
  EXPECT_DOUBLE_EQ(b[0][1], 0.8);
}

TEST(NormalizeRows, UnitRowUnchanged) {
  const double r = 1.0 / std::sqrt(2.0);
  const EmbeddingBatch b = normalize_rows(Matrix{{r, r}, {1, 0}});
  EXPECT_NEAR(b[0][0], r, 1e-15);
  EXPECT_NEAR(b[0][1], r, 1e-15);
  EXPECT_EQ(b[1][0], 1.0);
}

TEST(NormalizeRows, RandomRowsHaveUnitNorm) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 5.0);
  Matrix m(8, 16);
  for (double& x : m.flat()) x = g(rng);
  const EmbeddingBatch b = normalize_rows(m);
  for (std::size_t i = 0; i < 8; ++i) {
    long double acc = 0.0L;
    for (double x : b[i]) acc += static_cast<long double>(x) * x;
    EXPECT_NEAR(static_cast<double>(std::sqrt(acc)), 1.0, 1e-12);
  }
}

TEST(NormalizeRows, Errors) {
  try {
    normalize_rows(Matrix{{1, 0}, {0, 1e-13}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroRow);
  }
  try {
    normalize_rows(Matrix{{1, std::numeric_limits<double>::quiet_NaN()}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
  EXPECT_THROW(normalize_rows(Matrix{{1}}), Error);
  EXPECT_THROW(EmbeddingBatch::from_unit_rows(Matrix{{1, 1}}), Error);
}

TEST(Matrix, RaggedInitializerRejected) {
  try {
    Matrix m{{1, 2}, {3}};
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(CosineSimilarity, OrthonormalGivesIdentity) {
  const EmbeddingBatch v = normalize_rows(Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const SimilarityMatrix s = cosine_similarity_matrix(v, v);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(s(i, j), i == j ? 1.0 : 0.0);
}

TEST(CosineSimilarity, AntipodalDiagonal) {
  std::mt19937_64 rng(5);
  const Matrix v = oracle::random_unit(rng, 5, 7);
  Matrix t = v;
  for (double& x : t.flat()) x = -x;
  const SimilarityMatrix s = cosine_similarity_matrix(normalize_rows(v), normalize_rows(t));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(s(i, i), -1.0, 1e-15);
}

TEST(CosineSimilarity, MatchesScalarLoop) {
  std::mt19937_64 rng(11);
  const EmbeddingBatch v = normalize_rows(oracle::random_unit(rng, 4, 8));
  const EmbeddingBatch t = normalize_rows(oracle::random_unit(rng, 4, 8));
  const SimilarityMatrix s = cosine_similarity_matrix(v, t);
  const Matrix ref = oracle::dot_products(v.matrix(), t.matrix());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(s(i, j), ref(i, j), 1e-15);
}

TEST(CosineSimilarity, SwappingRolesTransposesExactly) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingBatch v = normalize_rows(oracle::random_unit(rng, 6, 9));
    const EmbeddingBatch t = normalize_rows(oracle::random_unit(rng, 6, 9));
    EXPECT_EQ(cosine_similarity_matrix(t, v).matrix(),
              cosine_similarity_matrix(v, t).matrix().transposed());
  }
}

TEST(CosineSimilarity, ShapeMismatch) {
  const EmbeddingBatch a = normalize_rows(Matrix{{1, 0}, {0, 1}});
  const EmbeddingBatch b = normalize_rows(Matrix{{1, 0}});
  const EmbeddingBatch c = normalize_rows(Matrix{{1, 0, 0}, {0, 1, 0}});
  try {
    cosine_similarity_matrix(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
  EXPECT_THROW(cosine_similarity_matrix(a, c), Error);
}

TEST(SimilarityMatrix, RangeAndShape) {
  EXPECT_NO_THROW(SimilarityMatrix(Matrix{{1.0 + 5e-10}}));
  EXPECT_THROW(SimilarityMatrix(Matrix{{1.0 + 1e-8}}), Error);
  EXPECT_THROW(SimilarityMatrix(Matrix{{0.1, 0.2}}), Error);
}

TEST(Log1pSumExp, KnownValues) {
  EXPECT_EQ(log1p_sum_exp(std::span<const double>{}), 0.0);
  EXPECT_EQ(log1p_sum_exp({0.0}), 0.6931471805599453);
  EXPECT_NEAR(log1p_sum_exp({1000.0}), 1000.0, 1e-12);
  EXPECT_NEAR(log1p_sum_exp({-1.0, 2.0}), std::log(1.0 + std::exp(-1.0) + std::exp(2.0)), 1e-15);
}

TEST(Log1pSumExp, RejectsNonFinite) {
  try {
    log1p_sum_exp({1.0, std::numeric_limits<double>::infinity()});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
  EXPECT_THROW(log1p_sum_exp({std::numeric_limits<double>::quiet_NaN()}), Error);
}

TEST(Log1pSumExp, BoundsOnRandomInputs) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  std::uniform_int_distribution<int> len(0, 40);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> xs(len(rng));
    const double scale = std::pow(10.0, trial % 7 - 1);
    for (double& x : xs) x = u(rng) * scale / 1e6;
    double top = 0.0;
    for (double x : xs) top = std::max(top, x);
    const double r = log1p_sum_exp(xs);
    ASSERT_TRUE(std::isfinite(r));
    EXPECT_GE(r, top - 1e-12 * std::max(1.0, top));
    EXPECT_LE(r, top + std::log(1.0 + xs.size()) + 1e-12 * std::max(1.0, top));
  }
}

TEST(Log1pSumExp, LargeArgumentsStayFinite) {
  EXPECT_TRUE(std::isfinite(log1p_sum_exp({1e6, 1e6, -1e6})));
  EXPECT_NEAR(log1p_sum_exp({1e6, 1e6}), 1e6 + std::log(2.0), 1e-9);
}
