#include "usim/linalg.hpp"

namespace usim {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  Matrix m(rows, cols);
  // Row-major fill order so results do not depend on Eigen's storage order.
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

Matrix random_orthogonal(Index d, Rng& rng) {
  const Matrix g = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Matrix polar_factor(const Matrix& w) {
  Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

Vector singular_values(const Matrix& m) {
  return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

Matrix zero_pad_columns(const Matrix& m, Index cols) {
  if (cols <= m.cols()) return m;
  Matrix out = Matrix::Zero(m.rows(), cols);
  out.leftCols(m.cols()) = m;
  return out;
}

}  // namespace usim
