#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

namespace {

Mat centering(int n) { return Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n); }

double hsic(const Mat& k, const Mat& l) {
  const Mat h = centering(static_cast<int>(k.rows()));
  return (k * h * l * h).trace();
}

std::vector<double> counting_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) less += 1.0;
      if (x[j] == x[i]) equal += 1.0;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

}  // namespace

double cka_hsic(const Mat& a, const Mat& b) {
  const Mat k = a * a.transpose();
  const Mat l = b * b.transpose();
  return hsic(k, l) / std::sqrt(hsic(k, k) * hsic(l, l));
}

double spearman_counting(const std::vector<double>& u, const std::vector<double>& v) {
  const auto ru = counting_ranks(u);
  const auto rv = counting_ranks(v);
  const double n = static_cast<double>(u.size());
  double su = 0, sv = 0, suu = 0, svv = 0, suv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    su += ru[i];
    sv += rv[i];
    suu += ru[i] * ru[i];
    svv += rv[i] * rv[i];
    suv += ru[i] * rv[i];
  }
  const double cov = suv - su * sv / n;
  const double vu = suu - su * su / n;
  const double vv = svv - sv * sv / n;
  return cov / std::sqrt(vu * vv);
}

double rsa_direct(const Mat& a, const Mat& b) {
  std::vector<double> da, db;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = i + 1; j < a.rows(); ++j) {
      double sa = 0, sb = 0;
      for (int k = 0; k < a.cols(); ++k) sa += (a(i, k) - a(j, k)) * (a(i, k) - a(j, k));
      for (int k = 0; k < b.cols(); ++k) sb += (b(i, k) - b(j, k)) * (b(i, k) - b(j, k));
      da.push_back(std::sqrt(sa));
      db.push_back(std::sqrt(sb));
    }
  }
  return spearman_counting(da, db);
}

std::vector<double> cca_generalized(const Mat& a, const Mat& b, double ridge) {
  const int n = static_cast<int>(a.rows());
  const Mat h = centering(n);
  const Mat ac = h * a;
  const Mat bc = h * b;
  Mat saa = ac.transpose() * ac / (n - 1);
  Mat sbb = bc.transpose() * bc / (n - 1);
  const Mat sab = ac.transpose() * bc / (n - 1);
  saa += ridge * saa.trace() / saa.rows() * Mat::Identity(saa.rows(), saa.cols());
  sbb += ridge * sbb.trace() / sbb.rows() * Mat::Identity(sbb.rows(), sbb.cols());
  const Mat lhs = sab * sbb.inverse() * sab.transpose();
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(lhs, saa);
  std::vector<double> rho;
  for (int i = 0; i < ges.eigenvalues().size(); ++i) {
    rho.push_back(std::sqrt(std::max(0.0, ges.eigenvalues()(i))));
  }
  std::sort(rho.rbegin(), rho.rend());
  rho.resize(static_cast<std::size_t>(std::min(a.cols(), b.cols())));
  return rho;
}

double lstsq_normal_equations_mse(const Mat& x, const Mat& y) {
  Mat aug(x.rows(), x.cols() + 1);
  aug << x, Mat::Ones(x.rows(), 1);
  const Mat coef = (aug.transpose() * aug).ldlt().solve(aug.transpose() * y);
  return (y - aug * coef).squaredNorm() / static_cast<double>(x.rows());
}

double procrustes_angle_2d(const Mat& x, const Mat& y) {
  const Mat h = centering(static_cast<int>(x.rows()));
  const Mat m = (h * x).transpose() * (h * y);
  return std::atan2(m(0, 1) - m(1, 0), m(0, 0) + m(1, 1));
}

Mat gram_schmidt_orthogonal(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat q(d, d);
  for (int j = 0; j < d; ++j) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = nd(rng);
    for (int k = 0; k < j; ++k) v -= q.col(k).dot(v) * q.col(k);
    for (int k = 0; k < j; ++k) v -= q.col(k).dot(v) * q.col(k);
    q.col(j) = v / v.norm();
  }
  return q;
}

int binomial_upper(int n, double p, double tail) {
  double cdf = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double logpmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                          k * std::log(p) + (n - k) * std::log1p(-p);
    cdf += std::exp(logpmf);
    if (1.0 - cdf <= tail) return k;
  }
  return n;
}

double mean_sq_deviation(const Mat& x) {
  const Eigen::RowVectorXd mu = x.colwise().mean();
  double s = 0.0;
  for (int i = 0; i < x.rows(); ++i) s += (x.row(i) - mu).squaredNorm();
  return s / static_cast<double>(x.rows());
}

double softmax_ce(const Mat& logits, const std::vector<int>& labels) {
  double total = 0.0;
  for (int i = 0; i < logits.rows(); ++i) {
    double z = 0.0;
    for (int c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c));
    total += -std::log(std::exp(logits(i, labels[static_cast<std::size_t>(i)])) / z);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace oracle
