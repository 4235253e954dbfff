#pragma once

// Small dense linear-algebra and random-matrix helpers shared across modules.

#include <cstdint>
#include <random>

#include "usim/types.hpp"

namespace usim {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double sigma = 1.0);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
Matrix random_orthogonal(Index d, Rng& rng);

/// Nearest matrix with orthonormal columns (rows when wide): U V^T of the thin SVD.
Matrix polar_factor(const Matrix& w);

Vector singular_values(const Matrix& m);

/// Right-pads with zero columns up to `cols`.
Matrix zero_pad_columns(const Matrix& m, Index cols);

}  // namespace usim
