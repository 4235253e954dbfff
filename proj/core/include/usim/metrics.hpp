#pragma once

// Standard representational-similarity baselines: linear CKA, RSA, SVCCA and
// mean CCA correlation.

#include <span>
#include <vector>

#include "usim/types.hpp"

namespace usim {

struct MetricConfig {
  /// SVCCA keeps the smallest k whose squared singular values reach this
  /// fraction of the total.
  double svcca_variance_retained = 0.99;
  /// Added to covariance diagonals, relative to the mean per-feature variance.
  double cca_ridge = 1e-8;

  void validate() const;
};

/// ||Bc^T Ac||_F^2 / (||Ac^T Ac||_F ||Bc^T Bc||_F) on column-centered inputs.
double linear_cka(const RepresentationSet& a, const RepresentationSet& b);

/// Spearman correlation of the strict-upper-triangle Euclidean RDM entries.
double rsa(const RepresentationSet& a, const RepresentationSet& b);

/// Rank correlation with average ranks for ties.
double spearman(std::span<const double> u, std::span<const double> v);
double pearson(std::span<const double> u, std::span<const double> v);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Strict upper triangle of the pairwise Euclidean distance matrix, row-major.
std::vector<double> pairwise_distances(const Matrix& x);

/// Canonical correlations, descending, truncated to min(rank_a, rank_b).
std::vector<double> canonical_correlations(const Matrix& a, const Matrix& b, double ridge);

double svcca(const RepresentationSet& a, const RepresentationSet& b, const MetricConfig& cfg = {});
double mean_cca(const RepresentationSet& a, const RepresentationSet& b,
                const MetricConfig& cfg = {});

/// Projection of the centered data onto its top singular directions
/// (smallest k reaching `retained` of the squared singular-value energy).
Matrix svd_truncate(const Matrix& x, double retained);

}  // namespace usim
