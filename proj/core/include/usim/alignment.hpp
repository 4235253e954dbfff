#pragma once

// Alignment maps under nested predictive families and the reconstruction-based
// representational similarity score 1 - MSE / Var(dst).
//
// All fits work on column-centered data and recover the bias afterwards. For
// the orthogonal families the narrower side is zero-padded to the wider width,
// so a map into fewer dimensions pays for the source energy it would rotate
// into the padding.

#include <cstdint>

#include "usim/types.hpp"

namespace usim {

/// Settings for the gradient-descent alignment backend.
struct GradientConfig {
  double learning_rate = 1e-2;
  int max_iterations = 2000;
  /// Converged when the relative objective change over `window` iterations drops below this.
  double tolerance = 1e-9;
  int window = 20;
  std::uint64_t seed = 0;
};

LinearMap fit_affine(const RepresentationSet& src, const RepresentationSet& dst);
LinearMap fit_orthogonal(const RepresentationSet& src, const RepresentationSet& dst);
LinearMap fit_orthogonal_scale(const RepresentationSet& src, const RepresentationSet& dst);

/// Projected gradient descent on MSE + w * sum max(0, floor - sigma_i(W))^2,
/// warm-started at the least-squares map, with every singular value kept at or
/// above kInvertibleMinSingularValue.
LinearMap fit_invertible_affine(const RepresentationSet& src, const RepresentationSet& dst,
                                const PredictiveFamily& family, const GradientConfig& cfg = {});

/// Gradient backend for Orthogonal / OrthogonalScale / Affine: MSE plus the
/// ||Q^T Q - I||_F^2 penalty for the orthogonal families, from a seeded random
/// orthogonal start, finished with a polar retraction onto the constraint set.
LinearMap fit_penalized(const RepresentationSet& src, const RepresentationSet& dst,
                        const PredictiveFamily& family, const GradientConfig& cfg = {});

/// Closed form for the three nested families, projected gradient for InvertibleAffine.
LinearMap fit_map(const RepresentationSet& src, const RepresentationSet& dst,
                  const PredictiveFamily& family, const GradientConfig& cfg = {});

/// Mean over samples of ||dst_i - map(src_i)||^2, plus for orthogonal maps into a
/// narrower space the energy rotated into the zero padding.
double reconstruction_mse(const LinearMap& map, const RepresentationSet& src,
                          const RepresentationSet& dst);

/// R^2 of dst reconstructed from src under the family. Returns exactly 1.0 when
/// MSE < 1e-12 Var(dst); for a constant dst returns 1.0 if MSE < 1e-12, else 0.0.
double directed_rep_similarity(const RepresentationSet& src, const RepresentationSet& dst,
                               const PredictiveFamily& family, const GradientConfig& cfg = {});
double rep_similarity_from_mse(double mse, double dst_variance);

struct RepSimilarity {
  double forward = 0.0;
  double backward = 0.0;
  double symmetric() const noexcept { return forward < backward ? forward : backward; }
};

RepSimilarity rep_similarity(const RepresentationSet& a, const RepresentationSet& b,
                             const PredictiveFamily& family, const GradientConfig& cfg = {});

/// min of the two directed scores.
double symmetric_rep_similarity(const RepresentationSet& a, const RepresentationSet& b,
                                const PredictiveFamily& family, const GradientConfig& cfg = {});

}  // namespace usim
