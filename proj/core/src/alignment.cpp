#include "usim/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "descent.hpp"
#include "usim/linalg.hpp"

namespace usim {

namespace {

struct Centered {
  Matrix x;
  Matrix y;
  RowVector x_mean;
  RowVector y_mean;
};

Centered center_pair(const RepresentationSet& src, const RepresentationSet& dst) {
  if (src.samples() != dst.samples()) {
    throw Error(ErrorCode::ShapeMismatch, "alignment needs equal sample counts: " +
                                              std::to_string(src.samples()) + " vs " +
                                              std::to_string(dst.samples()));
  }
  Centered c;
  c.x_mean = src.data().colwise().mean();
  c.y_mean = dst.data().colwise().mean();
  c.x = src.data().rowwise() - c.x_mean;
  c.y = dst.data().rowwise() - c.y_mean;
  return c;
}

Vector recover_bias(const Centered& c, const Matrix& w, double scale) {
  return (c.y_mean - scale * (c.x_mean * w)).transpose();
}

Matrix least_squares(const Matrix& x, const Matrix& y) {
  return Eigen::CompleteOrthogonalDecomposition<Matrix>(x).solve(y);
}

// Procrustes rotation on zero-padded data, truncated to d_src x d_dst.
// Returns the weight and the sum of the singular values of X^T Y.
std::pair<Matrix, double> procrustes(const Centered& c) {
  if (c.x.squaredNorm() == 0.0) {
    throw Error(ErrorCode::DegenerateInput, "Procrustes source has zero variance");
  }
  const Matrix m = c.x.transpose() * c.y;
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU() * svd.matrixV().transpose(), svd.singularValues().sum()};
}

Matrix clamp_singular_values(const Matrix& w, double floor) {
  Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector s = svd.singularValues().cwiseMax(floor);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

double abs_tolerance_for(const Matrix& y) {
  return 1e-16 * (y.squaredNorm() / static_cast<double>(y.rows()) + 1e-300);
}

void require_square(const RepresentationSet& src, const RepresentationSet& dst) {
  if (src.features() != dst.features()) {
    throw Error(ErrorCode::ShapeMismatch, "invertible-affine alignment needs d_src == d_dst");
  }
}

}  // namespace

LinearMap fit_affine(const RepresentationSet& src, const RepresentationSet& dst) {
  const Centered c = center_pair(src, dst);
  Matrix w = least_squares(c.x, c.y);
  Vector b = recover_bias(c, w, 1.0);
  return LinearMap(std::move(w), std::move(b), 1.0, PredictiveFamily::of(FamilyKind::Affine));
}

LinearMap fit_orthogonal(const RepresentationSet& src, const RepresentationSet& dst) {
  const Centered c = center_pair(src, dst);
  auto [w, trace] = procrustes(c);
  (void)trace;
  Vector b = recover_bias(c, w, 1.0);
  return LinearMap(std::move(w), std::move(b), 1.0, PredictiveFamily::of(FamilyKind::Orthogonal));
}

LinearMap fit_orthogonal_scale(const RepresentationSet& src, const RepresentationSet& dst) {
  const Centered c = center_pair(src, dst);
  auto [w, trace] = procrustes(c);
  const double s = std::max(trace / c.x.squaredNorm(), std::numeric_limits<double>::min());
  Vector b = recover_bias(c, w, s);
  return LinearMap(std::move(w), std::move(b), s, PredictiveFamily::of(FamilyKind::OrthogonalScale));
}

LinearMap fit_invertible_affine(const RepresentationSet& src, const RepresentationSet& dst,
                                const PredictiveFamily& family, const GradientConfig& cfg) {
  require_square(src, dst);
  const Centered c = center_pair(src, dst);
  const Index d = c.x.cols();
  const double n = static_cast<double>(c.x.rows());
  const Matrix xtx = c.x.transpose() * c.x / n;
  const Matrix xty = c.x.transpose() * c.y / n;
  const double yy = c.y.squaredNorm() / n;

  auto unpack = [d](const Vector& theta) { return Eigen::Map<const Matrix>(theta.data(), d, d); };

  detail::Objective objective = [&](const Vector& theta, Vector* grad) {
    const auto w = unpack(theta);
    // ||Y - XW||^2 / n expanded through the Gram matrices.
    const Matrix xtxw = xtx * w;
    double f = yy - 2.0 * (w.cwiseProduct(xty)).sum() + (w.cwiseProduct(xtxw)).sum();
    Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    Matrix g_pen = Matrix::Zero(d, d);
    for (Index i = 0; i < sv.size(); ++i) {
      const double gap = family.sv_floor - sv(i);
      if (gap > 0.0) {
        f += family.sv_floor_weight * gap * gap;
        g_pen -= 2.0 * family.sv_floor_weight * gap * svd.matrixU().col(i) *
                 svd.matrixV().col(i).transpose();
      }
    }
    if (grad) {
      Matrix g = 2.0 * (xtxw - xty) + g_pen;
      *grad = Eigen::Map<const Vector>(g.data(), g.size());
    }
    return f;
  };
  detail::Projection project = [d](Vector& theta) {
    Eigen::Map<Matrix> w(theta.data(), d, d);
    w = clamp_singular_values(Matrix(w), kInvertibleMinSingularValue);
  };

  Matrix w0 = least_squares(c.x, c.y);
  Vector theta0 = Eigen::Map<const Vector>(w0.data(), w0.size());

  detail::DescentOptions opts;
  opts.learning_rate = cfg.learning_rate;
  opts.max_iterations = cfg.max_iterations;
  opts.rel_tolerance = cfg.tolerance;
  opts.window = cfg.window;
  opts.abs_tolerance = abs_tolerance_for(c.y);
  const auto res = detail::gradient_descent(std::move(theta0), objective, project, opts);

  Matrix w = unpack(res.theta);
  Vector b = recover_bias(c, w, 1.0);
  PredictiveFamily fam = family;
  fam.kind = FamilyKind::InvertibleAffine;
  LinearMap map(std::move(w), std::move(b), 1.0, fam);
  if (!res.converged) {
    throw ConvergenceFailure("invertible-affine fit did not converge in " +
                                 std::to_string(cfg.max_iterations) + " iterations",
                             std::move(map));
  }
  return map;
}

LinearMap fit_penalized(const RepresentationSet& src, const RepresentationSet& dst,
                        const PredictiveFamily& family, const GradientConfig& cfg) {
  if (family.kind == FamilyKind::InvertibleAffine) {
    return fit_invertible_affine(src, dst, family, cfg);
  }
  const Centered c = center_pair(src, dst);
  const Index ds = c.x.cols();
  const Index dd = c.y.cols();
  const double n = static_cast<double>(c.x.rows());
  const bool orthogonal = family.is_orthogonal();
  const bool scaled = family.kind == FamilyKind::OrthogonalScale;
  const Index nw = ds * dd;
  const double lambda = orthogonal ? family.ortho_penalty_weight : 0.0;

  detail::Objective objective = [&](const Vector& theta, Vector* grad) {
    const Eigen::Map<const Matrix> w(theta.data(), ds, dd);
    const double s = scaled ? std::exp(theta(nw)) : 1.0;
    const Matrix xw = c.x * w;
    const Matrix r = s * xw - c.y;
    double f = r.squaredNorm() / n;
    Matrix g_pen = Matrix::Zero(ds, dd);
    if (lambda > 0.0) {
      if (ds >= dd) {
        const Matrix e = w.transpose() * w - Matrix::Identity(dd, dd);
        f += lambda * e.squaredNorm();
        g_pen = 4.0 * lambda * w * e;
      } else {
        const Matrix e = w * w.transpose() - Matrix::Identity(ds, ds);
        f += lambda * e.squaredNorm();
        g_pen = 4.0 * lambda * e * w;
      }
    }
    if (grad) {
      grad->resize(theta.size());
      Matrix gw = (2.0 * s / n) * (c.x.transpose() * r) + g_pen;
      grad->head(nw) = Eigen::Map<const Vector>(gw.data(), nw);
      if (scaled) (*grad)(nw) = (2.0 * s / n) * xw.cwiseProduct(r).sum();
    }
    return f;
  };

  Rng rng(cfg.seed);
  const Index big = std::max(ds, dd);
  Matrix w0 = random_orthogonal(big, rng).topLeftCorner(ds, dd);
  Vector theta0(nw + (scaled ? 1 : 0));
  theta0.head(nw) = Eigen::Map<const Vector>(w0.data(), nw);
  if (scaled) theta0(nw) = 0.0;

  detail::DescentOptions opts;
  opts.learning_rate = cfg.learning_rate;
  opts.max_iterations = cfg.max_iterations;
  opts.rel_tolerance = cfg.tolerance;
  opts.window = cfg.window;
  opts.abs_tolerance = abs_tolerance_for(c.y);
  const auto res = detail::gradient_descent(std::move(theta0), objective, {}, opts);

  Matrix w = Eigen::Map<const Matrix>(res.theta.data(), ds, dd);
  double s = 1.0;
  if (orthogonal) w = polar_factor(w);
  if (scaled) {
    const Matrix xw = c.x * w;
    const double denom = xw.squaredNorm();
    s = denom > 0.0 ? (xw.cwiseProduct(c.y)).sum() / denom : 1.0;
    s = std::max(s, std::numeric_limits<double>::min());
  }
  PredictiveFamily fam = family;
  Vector b = recover_bias(c, w, s);
  LinearMap map(std::move(w), std::move(b), s, fam);
  if (!res.converged) {
    throw ConvergenceFailure("penalized alignment did not converge in " +
                                 std::to_string(cfg.max_iterations) + " iterations",
                             std::move(map));
  }
  return map;
}

LinearMap fit_map(const RepresentationSet& src, const RepresentationSet& dst,
                  const PredictiveFamily& family, const GradientConfig& cfg) {
  switch (family.kind) {
    case FamilyKind::Orthogonal: {
      LinearMap m = fit_orthogonal(src, dst);
      return LinearMap(m.weight(), m.bias(), m.scale(), family);
    }
    case FamilyKind::OrthogonalScale: {
      LinearMap m = fit_orthogonal_scale(src, dst);
      return LinearMap(m.weight(), m.bias(), m.scale(), family);
    }
    case FamilyKind::Affine: {
      LinearMap m = fit_affine(src, dst);
      return LinearMap(m.weight(), m.bias(), m.scale(), family);
    }
    case FamilyKind::InvertibleAffine:
      return fit_invertible_affine(src, dst, family, cfg);
  }
  throw Error(ErrorCode::InvalidData, "unknown predictive family");
}

double reconstruction_mse(const LinearMap& map, const RepresentationSet& src,
                          const RepresentationSet& dst) {
  if (src.samples() != dst.samples()) {
    throw Error(ErrorCode::ShapeMismatch, "reconstruction needs equal sample counts");
  }
  if (map.output_dim() != dst.features()) {
    throw Error(ErrorCode::ShapeMismatch, "map output width does not match target width");
  }
  const double n = static_cast<double>(src.samples());
  double sse = (dst.data() - map.apply(src.data())).squaredNorm();
  if (map.family().is_orthogonal() && map.input_dim() > map.output_dim()) {
    const Matrix xc = src.data().rowwise() - src.data().colwise().mean();
    const double leak = xc.squaredNorm() - (xc * map.weight()).squaredNorm();
    sse += map.scale() * map.scale() * std::max(leak, 0.0);
  }
  return sse / n;
}

double rep_similarity_from_mse(double mse, double dst_variance) {
  constexpr double kExact = 1e-12;
  if (dst_variance < kExact) return mse < kExact ? 1.0 : 0.0;
  const double ratio = mse / dst_variance;
  if (ratio < kExact) return 1.0;
  return 1.0 - ratio;
}

double directed_rep_similarity(const RepresentationSet& src, const RepresentationSet& dst,
                               const PredictiveFamily& family, const GradientConfig& cfg) {
  const LinearMap map = fit_map(src, dst, family, cfg);
  return rep_similarity_from_mse(reconstruction_mse(map, src, dst), total_variance(dst));
}

RepSimilarity rep_similarity(const RepresentationSet& a, const RepresentationSet& b,
                             const PredictiveFamily& family, const GradientConfig& cfg) {
  return RepSimilarity{directed_rep_similarity(a, b, family, cfg),
                       directed_rep_similarity(b, a, family, cfg)};
}

double symmetric_rep_similarity(const RepresentationSet& a, const RepresentationSet& b,
                                const PredictiveFamily& family, const GradientConfig& cfg) {
  return rep_similarity(a, b, family, cfg).symmetric();
}

}  // namespace usim
