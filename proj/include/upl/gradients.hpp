#ifndef UPL_GRADIENTS_HPP
#define UPL_GRADIENTS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "upl/core.hpp"
#include "upl/losses.hpp"
#include "upl/retrieval.hpp"

namespace upl {

/// Gradients of a loss with respect to the rows of both modality batches.
struct GradResult {
  Matrix d_v;
  Matrix d_t;
};

/// Which retrieval directions contribute to a gradient.
enum class Directions { Both, I2TOnly, T2IOnly };

namespace detail {

inline bool wants(Directions which, Direction d) {
  return which == Directions::Both || (which == Directions::I2TOnly) == (d == Direction::I2T);
}

// Adds the gradient of one log-sum-exp term to `g`. `args[k]` belongs to candidate
// `cands[k]`; `slope` is d(arg)/d(s_candidate) / gamma; positive enters with -pos_slope.
inline void add_lse_term(Matrix& g, Direction d, std::size_t anchor,
                         const std::vector<std::size_t>& cands, const std::vector<double>& args,
                         const std::vector<double>& slope, double pos_slope, double scale) {
  double shift = 0.0;
  for (double a : args) shift = std::max(shift, a);
  double denom = std::exp(-shift);
  for (double a : args) denom += std::exp(a - shift);
  double pos_total = 0.0;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    const double p = std::exp(args[k] - shift) / denom;
    const std::size_t j = cands[k];
    double& cell = d == Direction::I2T ? g(anchor, j) : g(j, anchor);
    cell += scale * slope[k] * p;
    pos_total += p;
  }
  g(anchor, anchor) -= scale * pos_slope * pos_total;
}

template <typename WeightFn, typename MarginFn>
Matrix unified_family_grad(const SimilarityMatrix& s, double gamma, WeightFn weight,
                           MarginFn margin, double scale, Directions which) {
  const std::size_t b = s.size();
  Matrix g(b, b, 0.0);
  std::vector<std::size_t> cands;
  std::vector<double> args, slope;
  for (std::size_t i = 0; i < b; ++i) {
    const double wii = weight(i, i);
    const double pos = wii * s(i, i);
    for (Direction d : {Direction::I2T, Direction::T2I}) {
      if (!wants(which, d)) continue;
      cands.clear();
      args.clear();
      slope.clear();
      for (std::size_t j = 0; j < b; ++j) {
        if (j == i) continue;
        const double w = d == Direction::I2T ? weight(i, j) : weight(j, i);
        cands.push_back(j);
        args.push_back(gamma * (w * entry(s, d, i, j) - pos + margin(i)));
        slope.push_back(w);
      }
      add_lse_term(g, d, i, cands, args, slope, wii, scale);
    }
  }
  return g;
}

}  // namespace detail

/// dL/ds for any loss kind: entry (i, j) is the derivative with respect to s(i, j).
/// Triplet-HN uses the subgradient 0 at the hinge and the lowest-index hardest negative.
inline Matrix similarity_gradient(const LossSpec& spec, const SimilarityMatrix& s,
                                  Directions which = Directions::Both) {
  spec.validate();
  const std::size_t b = s.size();
  auto const_margin = [m = spec.margin](std::size_t) { return m; };
  switch (spec.kind) {
    case LossKind::TripletHN: {
      Matrix g(b, b, 0.0);
      if (b < 2) return g;
      for (std::size_t i = 0; i < b; ++i) {
        for (Direction d : {Direction::I2T, Direction::T2I}) {
          if (!detail::wants(which, d)) continue;
          const std::size_t hn = mine_hardest_negative(s, i, d);
          if (detail::entry(s, d, i, hn) - s(i, i) + spec.margin > 0.0) {
            (d == Direction::I2T ? g(i, hn) : g(hn, i)) += 1.0;
            g(i, i) -= 1.0;
          }
        }
      }
      return g;
    }
    case LossKind::Vlc:
      return detail::unified_family_grad(
          s, spec.gamma, detail::unit_weight, [](std::size_t) { return 0.0; }, spec.gamma, which);
    case LossKind::Unified:
      return detail::unified_family_grad(s, spec.gamma, detail::unit_weight, const_margin, 1.0,
                                         which);
    case LossKind::WeightedUnified: {
      if (!spec.weights) throw Error(ErrorKind::MissingWeights, "weighted loss needs weights");
      const Matrix& w = *spec.weights;
      if (w.rows() != b || w.cols() != b)
        throw Error(ErrorKind::ShapeMismatch, "weight matrix must be B x B");
      return detail::unified_family_grad(
          s, spec.gamma, [&w](std::size_t i, std::size_t j) { return w(i, j); }, const_margin,
          1.0, which);
    }
    case LossKind::AdaptiveMarginUnified: {
      if (!spec.margins || spec.margins->size() != b)
        throw Error(ErrorKind::MarginLengthMismatch, "adaptive-margin loss needs B margins");
      const auto& m = *spec.margins;
      return detail::unified_family_grad(
          s, spec.gamma, detail::unit_weight, [&m](std::size_t i) { return m[i]; }, 1.0, which);
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown loss kind");
}

/// Maps dL/ds onto the embeddings through s(i, j) = v_i . t_j.
inline GradResult embed_similarity_gradient(const Matrix& g, const EmbeddingBatch& v,
                                            const EmbeddingBatch& t) {
  const std::size_t b = v.size(), dim = v.dim();
  GradResult out{Matrix(b, dim, 0.0), Matrix(b, dim, 0.0)};
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double gij = g(i, j);
      if (gij == 0.0) continue;
      auto dv = out.d_v.row(i);
      auto dt = out.d_t.row(j);
      for (std::size_t k = 0; k < dim; ++k) {
        dv[k] += gij * t[j][k];
        dt[k] += gij * v[i][k];
      }
    }
  }
  return out;
}

/// Gradient of `spec`'s loss with respect to the unit embeddings, treating
/// s(i, j) = v_i . t_j as a plain dot product.
inline GradResult grad_loss(const LossSpec& spec, const EmbeddingBatch& v,
                            const EmbeddingBatch& t, Directions which = Directions::Both) {
  const SimilarityMatrix s = cosine_similarity_matrix(v, t);
  return embed_similarity_gradient(similarity_gradient(spec, s, which), v, t);
}

inline GradResult grad_triplet_hn(const EmbeddingBatch& v, const EmbeddingBatch& t,
                                  double margin) {
  return grad_loss(LossSpec{LossKind::TripletHN, margin, 1.0}, v, t);
}

inline GradResult grad_unified(const EmbeddingBatch& v, const EmbeddingBatch& t, double margin,
                               double gamma) {
  return grad_loss(LossSpec{LossKind::Unified, margin, gamma}, v, t);
}

inline GradResult grad_vlc(const EmbeddingBatch& v, const EmbeddingBatch& t, double gamma) {
  return grad_loss(LossSpec{LossKind::Vlc, 0.0, gamma}, v, t);
}

/// Chain rule through row normalization: for u = x / |x|, dL/dx = (I - u u^T) dL/du / |x|.
inline Matrix through_normalization(const Matrix& raw, const Matrix& grad_unit) {
  if (!raw.same_shape(grad_unit))
    throw Error(ErrorKind::ShapeMismatch, "gradient shape differs from parameters");
  Matrix out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const auto x = raw.row(i);
    const auto g = grad_unit.row(i);
    const double n = norm(x);
    if (n < kZeroRowEpsilon) throw Error(ErrorKind::ZeroRow, "row " + std::to_string(i));
    const double radial = dot(g, x) / (n * n);
    auto o = out.row(i);
    for (std::size_t k = 0; k < x.size(); ++k) o[k] = (g[k] - radial * x[k]) / n;
  }
  return out;
}

/// Gradient with respect to raw (unnormalized) coordinates of
/// L(normalize(v_raw), normalize(t_raw)).
inline GradResult raw_gradient(const LossSpec& spec, const Matrix& v_raw, const Matrix& t_raw,
                               Directions which = Directions::Both) {
  const EmbeddingBatch v = normalize_rows(v_raw);
  const EmbeddingBatch t = normalize_rows(t_raw);
  GradResult g = grad_loss(spec, v, t, which);
  return {through_normalization(v_raw, g.d_v), through_normalization(t_raw, g.d_t)};
}

/// Composite functional L(normalize(v_raw), normalize(t_raw)) for the finite-difference oracle.
inline auto make_raw_loss(LossSpec spec) {
  return [spec = std::move(spec)](const Matrix& v_raw, const Matrix& t_raw) {
    return evaluate_loss(spec,
                         cosine_similarity_matrix(normalize_rows(v_raw), normalize_rows(t_raw)))
        .total;
  };
}

/// Central differences (L(x + h e) - L(x - h e)) / 2h over every coordinate of both inputs.
template <typename LossFn>
GradResult finite_diff_grad(LossFn&& loss, const Matrix& v, const Matrix& t, double h) {
  if (!(h >= 1e-8 && h <= 1e-4))
    throw Error(ErrorKind::InvalidArgument, "finite-difference step must lie in [1e-8, 1e-4]");
  GradResult out{Matrix(v.rows(), v.cols()), Matrix(t.rows(), t.cols())};
  Matrix vp = v, tp = t;
  auto sweep = [&](Matrix& param, const Matrix& base, Matrix& dst) {
    auto p = param.flat();
    auto o = dst.flat();
    const auto b0 = base.flat();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] = b0[k] + h;
      const double up = loss(std::as_const(vp), std::as_const(tp));
      p[k] = b0[k] - h;
      const double down = loss(std::as_const(vp), std::as_const(tp));
      p[k] = b0[k];
      o[k] = (up - down) / (2.0 * h);
    }
  };
  sweep(vp, v, out.d_v);
  sweep(tp, t, out.d_t);
  return out;
}

/// Largest entrywise |a - n| / max(|n|, floor) over both gradient matrices.
inline double max_relative_error(const GradResult& analytic, const GradResult& numeric,
                                 double floor = 1.0) {
  double worst = 0.0;
  auto scan = [&](const Matrix& a, const Matrix& n) {
    if (!a.same_shape(n)) throw Error(ErrorKind::ShapeMismatch, "gradient shapes differ");
    for (std::size_t k = 0; k < a.flat().size(); ++k) {
      const double ref = std::max(std::abs(n.flat()[k]), floor);
      worst = std::max(worst, std::abs(a.flat()[k] - n.flat()[k]) / ref);
    }
  };
  scan(analytic.d_v, numeric.d_v);
  scan(analytic.d_t, numeric.d_t);
  return worst;
}

/// Distance to the nearest point where triplet-HN is not differentiable: a hinge at zero
/// or a tie between the two most similar negatives, over every anchor and direction.
inline double triplet_kink_distance(const SimilarityMatrix& s, double margin) {
  const std::size_t b = s.size();
  double dist = INFINITY;
  if (b < 2) return dist;
  for (std::size_t i = 0; i < b; ++i) {
    for (Direction d : {Direction::I2T, Direction::T2I}) {
      const std::size_t hn = mine_hardest_negative(s, i, d);
      const double top = detail::entry(s, d, i, hn);
      dist = std::min(dist, std::abs(top - s(i, i) + margin));
      for (std::size_t j = 0; j < b; ++j)
        if (j != i && j != hn) dist = std::min(dist, top - detail::entry(s, d, i, j));
    }
  }
  return dist;
}

/// Softmax weight exp(gamma (v_i . t_j - v_i . t_i + m)) of negative j for visual anchor i.
inline double soft_weight(const EmbeddingBatch& v, const EmbeddingBatch& t, std::size_t i,
                          std::size_t j, double margin, double gamma) {
  return std::exp(gamma * (dot(v[i], t[j]) - dot(v[i], t[i]) + margin));
}

/// Split of a gradient g acting on a point x of the sphere.
struct TangentComponent {
  double grad_norm = 0.0;
  double sin_theta = 0.0;
  double angle = 0.0;      // theta(x, g), radians
  double magnitude = 0.0;  // |g| sin theta
  double projected = 0.0;  // |g - (g . x) x|, x normalized
};

inline TangentComponent tangent_component(std::span<const double> x, std::span<const double> g) {
  TangentComponent c;
  c.grad_norm = norm(g);
  const double xn = norm(x);
  if (c.grad_norm == 0.0 || xn == 0.0) return c;
  const double cos_theta = std::clamp(dot(x, g) / (xn * c.grad_norm), -1.0, 1.0);
  c.sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  c.angle = std::acos(cos_theta);
  c.magnitude = c.grad_norm * c.sin_theta;
  const double radial = dot(g, x) / (xn * xn);
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = g[k] - radial * x[k];
    acc += r * r;
  }
  c.projected = std::sqrt(acc);
  return c;
}

/// Per-anchor tangent components of the image-to-text term L(v_i): one for the anchor v_i
/// and one for the negative whose tangent component is largest (the mined hard negative for
/// triplet-HN).
struct TangentReport {
  std::vector<TangentComponent> anchor;
  std::vector<TangentComponent> negative;
  std::vector<std::size_t> negative_index;
};

inline TangentReport tangent_magnitudes(const EmbeddingBatch& v, const EmbeddingBatch& t,
                                        const LossSpec& spec) {
  const SimilarityMatrix s = cosine_similarity_matrix(v, t);
  const Matrix g = similarity_gradient(spec, s, Directions::I2TOnly);
  const std::size_t b = v.size(), dim = v.dim();
  TangentReport rep;
  std::vector<double> gv(dim), gt(dim);
  for (std::size_t i = 0; i < b; ++i) {
    std::fill(gv.begin(), gv.end(), 0.0);
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < dim; ++k) gv[k] += g(i, j) * t[j][k];
    rep.anchor.push_back(tangent_component(v[i], gv));

    if (b < 2) {
      rep.negative.push_back({});
      rep.negative_index.push_back(i);
      continue;
    }
    std::size_t best = mine_hardest_negative(s, i, Direction::I2T);
    TangentComponent best_c;
    bool first = true;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i || g(i, j) == 0.0) continue;
      for (std::size_t k = 0; k < dim; ++k) gt[k] = g(i, j) * v[i][k];
      const TangentComponent c = tangent_component(t[j], gt);
      if (first || c.magnitude > best_c.magnitude) {
        best = j;
        best_c = c;
        first = false;
      }
    }
    rep.negative.push_back(best_c);
    rep.negative_index.push_back(best);
  }
  return rep;
}

}  // namespace upl

#endif  // UPL_GRADIENTS_HPP
