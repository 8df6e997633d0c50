#ifndef UPL_CORE_HPP
#define UPL_CORE_HPP

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "upl/error.hpp"

namespace upl {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<double>> init) : rows_(init.size()) {
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw Error(ErrorKind::ShapeMismatch, "ragged initializer list");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

inline double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

inline constexpr double kZeroRowEpsilon = 1e-12;
inline constexpr double kUnitNormTolerance = 1e-9;

/// B x D batch of unit-norm embeddings for one modality.
class EmbeddingBatch {
 public:
  /// Wraps rows that are already unit norm; throws InvalidArgument otherwise.
  static EmbeddingBatch from_unit_rows(Matrix m) {
    check_shape(m);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (std::abs(norm(m.row(i)) - 1.0) > kUnitNormTolerance)
        throw Error(ErrorKind::InvalidArgument,
                    "row " + std::to_string(i) + " is not unit norm");
    }
    return EmbeddingBatch(std::move(m));
  }

  std::size_t size() const noexcept { return data_.rows(); }
  std::size_t dim() const noexcept { return data_.cols(); }
  std::span<const double> operator[](std::size_t i) const noexcept { return data_.row(i); }
  const Matrix& matrix() const noexcept { return data_; }

  friend EmbeddingBatch normalize_rows(const Matrix& m);

 private:
  explicit EmbeddingBatch(Matrix m) : data_(std::move(m)) {}

  static void check_shape(const Matrix& m) {
    if (m.rows() < 1) throw Error(ErrorKind::InvalidArgument, "batch must have at least one row");
    if (m.cols() < 2) throw Error(ErrorKind::InvalidArgument, "embedding dimension must be >= 2");
  }

  Matrix data_;
};

/// Divides every row by its Euclidean norm.
inline EmbeddingBatch normalize_rows(const Matrix& m) {
  EmbeddingBatch::check_shape(m);
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double n = norm(r);
    if (!std::isfinite(n)) throw Error(ErrorKind::NonFinite, "row " + std::to_string(i));
    if (n < kZeroRowEpsilon)
      throw Error(ErrorKind::ZeroRow, "row " + std::to_string(i) + " has norm below 1e-12");
    for (double& x : r) x /= n;
  }
  return EmbeddingBatch(std::move(out));
}

/// Square matrix of pair similarities; entry (i, j) compares visual item i with text item j.
/// The diagonal holds the positive pairs.
class SimilarityMatrix {
 public:
  static constexpr double kRangeSlack = 1e-9;

  explicit SimilarityMatrix(Matrix s) : s_(std::move(s)) {
    if (s_.rows() != s_.cols())
      throw Error(ErrorKind::ShapeMismatch, "similarity matrix must be square");
    if (s_.rows() < 1) throw Error(ErrorKind::InvalidArgument, "empty similarity matrix");
    for (double x : s_.flat()) {
      if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, "similarity entry");
      if (x < -1.0 - kRangeSlack || x > 1.0 + kRangeSlack)
        throw Error(ErrorKind::InvalidArgument, "similarity entry outside [-1, 1]");
    }
  }

  std::size_t size() const noexcept { return s_.rows(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return s_(i, j); }
  double positive(std::size_t i) const noexcept { return s_(i, i); }
  const Matrix& matrix() const noexcept { return s_; }

  SimilarityMatrix transposed() const { return SimilarityMatrix(s_.transposed()); }

 private:
  Matrix s_;
};

inline SimilarityMatrix cosine_similarity_matrix(const EmbeddingBatch& v, const EmbeddingBatch& t) {
  if (v.size() != t.size() || v.dim() != t.dim())
    throw Error(ErrorKind::ShapeMismatch,
                "visual batch " + std::to_string(v.size()) + "x" + std::to_string(v.dim()) +
                    " vs text batch " + std::to_string(t.size()) + "x" + std::to_string(t.dim()));
  const std::size_t b = v.size();
  Matrix s(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) s(i, j) = dot(v[i], t[j]);
  return SimilarityMatrix(std::move(s));
}

/// log(1 + sum_j exp(x_j)), shifted by max(0, max x) so no exponential exceeds 1.
inline double log1p_sum_exp(std::span<const double> xs) {
  double shift = 0.0;
  for (double x : xs) {
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, "log1p_sum_exp argument");
    shift = std::max(shift, x);
  }
  if (shift == 0.0) {
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x);
    return std::log1p(acc);
  }
  double acc = std::exp(-shift);
  for (double x : xs) acc += std::exp(x - shift);
  return shift + std::log(acc);
}

inline double log1p_sum_exp(std::initializer_list<double> xs) {
  return log1p_sum_exp(std::span<const double>(xs.begin(), xs.size()));
}

}  // namespace upl

#endif  // UPL_CORE_HPP
