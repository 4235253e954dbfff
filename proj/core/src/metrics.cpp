#include "usim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "usim/linalg.hpp"

namespace usim {

namespace {

void require_same_samples(const RepresentationSet& a, const RepresentationSet& b) {
  if (a.samples() != b.samples()) {
    throw Error(ErrorCode::ShapeMismatch,
                "sample counts differ: " + std::to_string(a.samples()) + " vs " +
                    std::to_string(b.samples()));
  }
}

// Numerical rank of a centered data matrix.
Index data_rank(const Matrix& centered) {
  const Vector sv = singular_values(centered);
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double tol = sv(0) * 1e-10 * static_cast<double>(std::max(centered.rows(), centered.cols()));
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++r;
  }
  return r;
}

Matrix inverse_sqrt_spd(const Matrix& c) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
  const Vector& ev = eig.eigenvalues();
  const double floor = ev.cwiseAbs().maxCoeff() * 1e-14;
  Vector inv(ev.size());
  for (Index i = 0; i < ev.size(); ++i) inv(i) = ev(i) > floor ? 1.0 / std::sqrt(ev(i)) : 0.0;
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

void MetricConfig::validate() const {
  if (!(svcca_variance_retained > 0.0 && svcca_variance_retained <= 1.0)) {
    throw Error(ErrorCode::InvalidData, "svcca_variance_retained must lie in (0, 1]");
  }
  if (!(cca_ridge >= 0.0)) throw Error(ErrorCode::InvalidData, "cca_ridge must be >= 0");
}

double linear_cka(const RepresentationSet& a, const RepresentationSet& b) {
  require_same_samples(a, b);
  const Matrix ac = center(a.data());
  const Matrix bc = center(b.data());
  const double self_a = (ac.transpose() * ac).norm();
  const double self_b = (bc.transpose() * bc).norm();
  if (self_a == 0.0 || self_b == 0.0) {
    throw Error(ErrorCode::DegenerateInput, "linear CKA of a zero-variance representation");
  }
  const double cross = (bc.transpose() * ac).squaredNorm();
  return cross / (self_a * self_b);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean((i+1)..j).
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::ShapeMismatch, "pearson: length mismatch");
  if (u.size() < 2) throw Error(ErrorCode::DegenerateInput, "pearson needs at least 2 values");
  const double n = static_cast<double>(u.size());
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
  const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double suv = 0.0, suu = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double du = u[i] - mu;
    const double dv = v[i] - mv;
    suv += du * dv;
    suu += du * du;
    svv += dv * dv;
  }
  if (suu == 0.0 || svv == 0.0) {
    throw Error(ErrorCode::DegenerateInput, "correlation with a constant vector");
  }
  return std::clamp(suv / std::sqrt(suu * svv), -1.0, 1.0);
}

double spearman(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::ShapeMismatch, "spearman: length mismatch");
  if (u.size() < 2) throw Error(ErrorCode::DegenerateInput, "spearman needs at least 2 values");
  const auto ru = average_ranks(u);
  const auto rv = average_ranks(v);
  return pearson(ru, rv);
}

std::vector<double> pairwise_distances(const Matrix& x) {
  const Index n = x.rows();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) out.push_back((x.row(i) - x.row(j)).norm());
  }
  return out;
}

double rsa(const RepresentationSet& a, const RepresentationSet& b) {
  require_same_samples(a, b);
  if (a.samples() < 4) throw Error(ErrorCode::DegenerateInput, "RSA needs at least 4 samples");
  const auto da = pairwise_distances(a.data());
  const auto db = pairwise_distances(b.data());
  return spearman(da, db);
}

std::vector<double> canonical_correlations(const Matrix& a, const Matrix& b, double ridge) {
  if (a.rows() != b.rows()) throw Error(ErrorCode::ShapeMismatch, "CCA: sample counts differ");
  const Matrix ac = center(a);
  const Matrix bc = center(b);
  const Index k = std::min(data_rank(ac), data_rank(bc));
  if (k == 0) throw Error(ErrorCode::DegenerateInput, "CCA of a rank-0 representation");

  const double denom = static_cast<double>(a.rows() - 1);
  Matrix caa = ac.transpose() * ac / denom;
  Matrix cbb = bc.transpose() * bc / denom;
  const Matrix cab = ac.transpose() * bc / denom;
  caa.diagonal().array() += ridge * caa.trace() / static_cast<double>(caa.rows());
  cbb.diagonal().array() += ridge * cbb.trace() / static_cast<double>(cbb.rows());

  const Matrix t = inverse_sqrt_spd(caa) * cab * inverse_sqrt_spd(cbb);
  const Vector rho = singular_values(t);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k && i < rho.size(); ++i) out.push_back(std::clamp(rho(i), 0.0, 1.0));
  return out;
}

Matrix svd_truncate(const Matrix& x, double retained) {
  const Matrix xc = center(x);
  Eigen::JacobiSVD<Matrix> svd(xc, Eigen::ComputeThinV);
  const Vector energy = svd.singularValues().array().square();
  const double total = energy.sum();
  if (total <= 0.0) throw Error(ErrorCode::DegenerateInput, "SVD truncation of rank-0 data");
  Index k = 0;
  double acc = 0.0;
  while (k < energy.size()) {
    acc += energy(k);
    ++k;
    if (acc >= retained * total * (1.0 - 1e-12)) break;
  }
  return xc * svd.matrixV().leftCols(k);
}

double svcca(const RepresentationSet& a, const RepresentationSet& b, const MetricConfig& cfg) {
  cfg.validate();
  require_same_samples(a, b);
  const Matrix ra = svd_truncate(a.data(), cfg.svcca_variance_retained);
  const Matrix rb = svd_truncate(b.data(), cfg.svcca_variance_retained);
  const auto rho = canonical_correlations(ra, rb, cfg.cca_ridge);
  return std::accumulate(rho.begin(), rho.end(), 0.0) / static_cast<double>(rho.size());
}

double mean_cca(const RepresentationSet& a, const RepresentationSet& b, const MetricConfig& cfg) {
  cfg.validate();
  require_same_samples(a, b);
  const auto rho = canonical_correlations(a.data(), b.data(), cfg.cca_ridge);
  return std::accumulate(rho.begin(), rho.end(), 0.0) / static_cast<double>(rho.size());
}

}  // namespace usim
