#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "oracles.hpp"
#include "usim/alignment.hpp"
#include "usim/linalg.hpp"

using namespace usim;

namespace {

const FamilyKind kNested[] = {FamilyKind::Orthogonal, FamilyKind::OrthogonalScale, FamilyKind::Affine};

PredictiveFamily fam(FamilyKind k) { return PredictiveFamily::of(k); }

double mse(const LinearMap& m, const Matrix& x, const Matrix& y) {
  return reconstruction_mse(m, gen::rep(x), gen::rep(y));
}

// Residual of an arbitrary orthogonal candidate with the optimal bias for it.
double ortho_candidate_mse(const Matrix& q, const Matrix& x, const Matrix& y) {
  const Vector b = (y.colwise().mean() - x.colwise().mean() * q).transpose();
  return mse(LinearMap(q, b, 1.0, fam(FamilyKind::Orthogonal)), x, y);
}

double min_sv(const Matrix& m) { return singular_values(m).minCoeff(); }

}  // namespace

TEST_CASE("affine fit on a realizable target") {
  gen::Source g(31);
  for (int t = 0; t < 50; ++t) {
    const Index n = g.integer(10, 60);
    const Index d = g.integer(1, 5);
    const Index k = g.integer(1, 5);
    const Matrix x = g.anisotropic(n, d);
    const Matrix y = (x * g.gaussian(d, k)).rowwise() + g.shift(k);
    CHECK(mse(fit_affine(gen::rep(x), gen::rep(y)), x, y) <= 1e-16 * (1.0 + y.squaredNorm()));
  }
}

TEST_CASE("affine fit to constant rows returns the mean as bias") {
  gen::Source g(32);
  const Matrix x = g.gaussian(20, 3);
  Matrix y(20, 2);
  y.col(0).setConstant(4.0);
  y.col(1).setConstant(-1.5);
  const LinearMap m = fit_affine(gen::rep(x), gen::rep(y));
  CHECK(m.weight().cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(m.bias()(0) == doctest::Approx(4.0));
  CHECK(m.bias()(1) == doctest::Approx(-1.5));
  CHECK(directed_rep_similarity(gen::rep(x), gen::rep(y), fam(FamilyKind::Affine)) == 1.0);
}

TEST_CASE("affine fit matches the normal-equations oracle") {
  gen::Source g(33);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = g.gaussian(50, 3);
    const Matrix y = x * g.gaussian(3, 3) + g.gaussian(50, 3, 0.1);
    CHECK(std::abs(mse(fit_affine(gen::rep(x), gen::rep(y)), x, y) -
                   oracle::lstsq_normal_equations_mse(x, y)) <= 1e-9);
  }
}

TEST_CASE("procrustes recovers a known rotation") {
  gen::Source g(34);
  for (int t = 0; t < 50; ++t) {
    const Index d = g.integer(1, 6);
    const Matrix x = g.anisotropic(g.integer(d + 2, 40), d);
    const Matrix q0 = g.orthogonal(d);
    const Matrix y = x * q0;
    const LinearMap m = fit_orthogonal(gen::rep(x), gen::rep(y));
    CHECK(mse(m, x, y) <= 1e-12);
    const Matrix xc = center(x);
    CHECK((xc * m.weight() - xc * q0).norm() <= 1e-6);
    CHECK(m.orthogonality_defect() <= 1e-6);
  }
  const Matrix x = g.gaussian(30, 4);
  const LinearMap self = fit_orthogonal(gen::rep(x), gen::rep(x));
  CHECK(mse(self, x, x) <= 1e-12);
  CHECK((self.weight() - Matrix::Identity(4, 4)).norm() <= 1e-9);
}

TEST_CASE("planar rotation angle matches the closed-form oracle") {
  gen::Source g(35);
  const double theta = M_PI / 6.0;
  Matrix r(2, 2);
  r << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
  const Matrix x = g.anisotropic(25, 2);
  const Matrix y = x * r;
  const LinearMap m = fit_orthogonal(gen::rep(x), gen::rep(y));
  const double got = std::atan2(m.weight()(0, 1), m.weight()(0, 0));
  CHECK(std::abs(got - theta) <= 1e-6);
  CHECK(std::abs(oracle::procrustes_angle_2d(x, y) - theta) <= 1e-6);

  const Matrix noisy = y + g.gaussian(25, 2, 0.3);
  const LinearMap mn = fit_orthogonal(gen::rep(x), gen::rep(noisy));
  CHECK(std::abs(std::atan2(mn.weight()(0, 1), mn.weight()(0, 0)) -
                 oracle::procrustes_angle_2d(x, noisy)) <= 1e-9);
}

TEST_CASE("procrustes beats random orthogonal candidates") {
  gen::Source g(36);
  for (int t = 0; t < 20; ++t) {
    const Index d = g.integer(1, 4);
    const Matrix x = g.anisotropic(g.integer(5, 30), d);
    const Matrix y = x * g.gaussian(d, d) + g.gaussian(x.rows(), d, 0.5);
    const LinearMap m = fit_orthogonal(gen::rep(x), gen::rep(y));
    CHECK(m.orthogonality_defect() <= 1e-6);
    const double best = mse(m, x, y);
    for (int c = 0; c < 200; ++c) {
      const Matrix q = oracle::gram_schmidt_orthogonal(static_cast<int>(d), g.rng());
      CHECK(best <= ortho_candidate_mse(q, x, y) + 1e-12);
    }
  }
}

TEST_CASE("orthogonal scale examples") {
  gen::Source g(37);
  const Matrix x = g.anisotropic(40, 3);
  const Matrix q0 = g.orthogonal(3);
  const Matrix y = 2.5 * x * q0;
  const LinearMap m = fit_orthogonal_scale(gen::rep(x), gen::rep(y));
  CHECK(std::abs(m.scale() - 2.5) <= 1e-9);
  CHECK(mse(m, x, y) <= 1e-12);
  CHECK(std::abs(fit_orthogonal_scale(gen::rep(x), gen::rep(x)).scale() - 1.0) <= 1e-9);

  const Matrix noisy = 0.3 * x * q0 + g.gaussian(40, 3, 0.2);
  const LinearMap mn = fit_orthogonal_scale(gen::rep(x), gen::rep(noisy));
  const Matrix q = fit_orthogonal(gen::rep(x), gen::rep(noisy)).weight();
  auto resid = [&](double s) {
    const Vector b = (noisy.colwise().mean() - s * x.colwise().mean() * q).transpose();
    return mse(LinearMap(q, b, s, fam(FamilyKind::OrthogonalScale)), x, noisy);
  };
  const double s_star = oracle::golden_section(resid, 1e-6, 5.0);
  CHECK(std::abs(mse(mn, x, noisy) - resid(s_star)) <= 1e-6);
  CHECK(std::abs(mn.scale() - s_star) <= 1e-6);
}

TEST_CASE("invertible affine examples") {
  gen::Source g(38);
  const Matrix x = g.anisotropic(80, 3);
  Matrix m0 = g.gaussian(3, 3);
  m0 += 3.0 * Matrix::Identity(3, 3);
  const LinearMap well = fit_invertible_affine(gen::rep(x), gen::rep(x * m0), fam(FamilyKind::InvertibleAffine));
  CHECK(mse(well, x, x * m0) <= 1e-8);
  CHECK(well.family().kind == FamilyKind::InvertibleAffine);

  const Matrix indep = g.gaussian(80, 3);
  const LinearMap loose = fit_invertible_affine(gen::rep(x), gen::rep(indep), fam(FamilyKind::InvertibleAffine));
  CHECK(min_sv(loose.weight()) >= kInvertibleMinSingularValue);

  Vector sig(3);
  sig << 1.0, 0.5, 1e-5;
  const Matrix target = g.orthogonal(3) * sig.asDiagonal() * g.orthogonal(3).transpose();
  const Matrix y = x * target;
  const LinearMap floored = fit_invertible_affine(gen::rep(x), gen::rep(y), fam(FamilyKind::InvertibleAffine));
  const double unpenalized = min_sv(fit_affine(gen::rep(x), gen::rep(y)).weight());
  CHECK(unpenalized == doctest::Approx(1e-5).epsilon(1e-3));
  CHECK(min_sv(floored.weight()) > 1e-5);
  CHECK(min_sv(floored.weight()) >= kInvertibleMinSingularValue);

  CHECK_THROWS_AS(fit_invertible_affine(gen::rep(x), gen::rep(g.gaussian(80, 2)),
                                        fam(FamilyKind::InvertibleAffine)),
                  Error);
}

TEST_CASE("capacity ordering of residuals") {
  gen::Source g(39);
  for (int t = 0; t < 20; ++t) {
    const Index d = g.integer(1, 4);
    const Matrix x = g.anisotropic(60, d);
    const Matrix y = x * g.gaussian(d, d) + g.gaussian(60, d, 0.3);
    const double aff = mse(fit_affine(gen::rep(x), gen::rep(y)), x, y);
    const double inv =
        mse(fit_invertible_affine(gen::rep(x), gen::rep(y), fam(FamilyKind::InvertibleAffine)), x, y);
    const double os = mse(fit_orthogonal_scale(gen::rep(x), gen::rep(y)), x, y);
    CHECK(aff <= inv + 1e-12);
    CHECK(inv <= os + 1e-8);
  }
}

TEST_CASE("directed similarity examples") {
  gen::Source g(40);
  const Matrix x = g.anisotropic(50, 4);
  for (auto k : {FamilyKind::Orthogonal, FamilyKind::OrthogonalScale, FamilyKind::Affine,
                 FamilyKind::InvertibleAffine}) {
    CHECK(directed_rep_similarity(gen::rep(x), gen::rep(x), fam(k)) == 1.0);
  }
  const Matrix xq = x * g.orthogonal(4);
  for (auto k : kNested) {
    CHECK(std::abs(directed_rep_similarity(gen::rep(x), gen::rep(xq), fam(k)) - 1.0) <= 1e-9);
  }
  Matrix m = g.gaussian(4, 4);
  m(0, 0) += 2.0;
  const Matrix xm = x * m;
  CHECK(std::abs(directed_rep_similarity(gen::rep(x), gen::rep(xm), fam(FamilyKind::Affine)) - 1.0) <= 1e-9);
  const double ortho = directed_rep_similarity(gen::rep(x), gen::rep(xm), fam(FamilyKind::Orthogonal));
  CHECK(ortho < 1.0);
  // Independent Procrustes residual over the total variance of the target.
  const Matrix xc = center(x), yc = center(xm);
  Eigen::JacobiSVD<Matrix> svd(xc.transpose() * yc, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix q = svd.matrixU() * svd.matrixV().transpose();
  const double resid = (yc - xc * q).squaredNorm() / 50.0;
  CHECK(ortho == doctest::Approx(1.0 - resid / total_variance(xm)).epsilon(1e-9));
}

TEST_CASE("symmetric similarity and information loss") {
  gen::Source g(41);
  const Matrix a = g.anisotropic(60, 3);
  CHECK(symmetric_rep_similarity(gen::rep(a), gen::rep(a), fam(FamilyKind::Affine)) == 1.0);
  Matrix b = a;
  b.col(1).setZero();
  const auto f = fam(FamilyKind::Affine);
  const double fwd = directed_rep_similarity(gen::rep(a), gen::rep(b), f);
  const double bwd = directed_rep_similarity(gen::rep(b), gen::rep(a), f);
  CHECK(fwd == 1.0);
  CHECK(bwd < 1.0);
  CHECK(symmetric_rep_similarity(gen::rep(a), gen::rep(b), f) == bwd);

  for (int t = 0; t < 20; ++t) {
    const Matrix p = g.gaussian(30, 3), r = g.gaussian(30, 2);
    for (auto k : kNested) {
      const double s = symmetric_rep_similarity(gen::rep(p), gen::rep(r), fam(k));
      const double d1 = directed_rep_similarity(gen::rep(p), gen::rep(r), fam(k));
      const double d2 = directed_rep_similarity(gen::rep(r), gen::rep(p), fam(k));
      CHECK(s == std::min(d1, d2));
    }
  }
}

TEST_CASE("nested families are monotone in every direction") {
  gen::Source g(42);
  for (int t = 0; t < 200; ++t) {
    const Index n = g.integer(5, 50);
    const Matrix a = g.anisotropic(n, g.integer(1, 6));
    Matrix b = g.anisotropic(n, g.integer(1, 6));
    if (g.integer(0, 1) == 1) {
      b = a * g.gaussian(a.cols(), b.cols()) + g.gaussian(n, b.cols(), g.uniform(0.0, 1.0));
    }
    double prev_f = -INFINITY, prev_b = -INFINITY, prev_s = -INFINITY;
    for (auto k : kNested) {
      const auto r = rep_similarity(gen::rep(a), gen::rep(b), fam(k));
      CHECK(r.forward >= prev_f);
      CHECK(r.backward >= prev_b);
      CHECK(r.symmetric() >= prev_s);
      prev_f = r.forward - 1e-9;
      prev_b = r.backward - 1e-9;
      prev_s = r.symmetric() - 1e-9;
    }
  }
}

TEST_CASE("translation and scale behaviour of the score") {
  gen::Source g(43);
  for (int t = 0; t < 50; ++t) {
    const Index n = g.integer(10, 40);
    const Index d1 = g.integer(1, 5), d2 = g.integer(1, 5);
    const Matrix a = g.anisotropic(n, d1);
    const Matrix b = a * g.gaussian(d1, d2) + g.gaussian(n, d2, 0.5);
    const Matrix a_shift = a.rowwise() + g.shift(d1, 50.0);
    const Matrix b_shift = b.rowwise() + g.shift(d2, 50.0);
    const double c = g.uniform(0.05, 20.0);
    for (auto k : kNested) {
      const double base = directed_rep_similarity(gen::rep(a), gen::rep(b), fam(k));
      CHECK(std::abs(directed_rep_similarity(gen::rep(a_shift), gen::rep(b_shift), fam(k)) - base) <= 1e-9);
      if (k != FamilyKind::Orthogonal) {
        CHECK(std::abs(directed_rep_similarity(gen::rep(a), gen::rep((c * b).eval()), fam(k)) - base) <= 1e-9);
      }
    }
  }
}

TEST_CASE("unequal widths use zero padding for orthogonal maps") {
  gen::Source g(44);
  const Matrix x = g.anisotropic(40, 4);
  const Matrix p = g.orthogonal(4).leftCols(2);
  const Matrix y = x * p;
  // Into fewer dimensions the discarded energy is charged; from fewer it is not.
  const double down = directed_rep_similarity(gen::rep(x), gen::rep(y), fam(FamilyKind::Orthogonal));
  CHECK(down < 1.0);
  const LinearMap up = fit_orthogonal(gen::rep(y), gen::rep(x));
  CHECK(up.input_dim() == 2);
  CHECK(up.output_dim() == 4);
  CHECK(up.orthogonality_defect() <= 1e-9);
  CHECK(directed_rep_similarity(gen::rep(x), gen::rep(y), fam(FamilyKind::Affine)) == 1.0);
}

TEST_CASE("penalized backend stays close to the closed forms") {
  gen::Source g(45);
  const Matrix x = g.anisotropic(60, 3);
  const Matrix q0 = g.orthogonal(3);
  const Matrix y = 1.7 * x * q0 + g.gaussian(60, 3, 0.05);
  for (auto k : kNested) {
    const LinearMap m = fit_penalized(gen::rep(x), gen::rep(y), fam(k), GradientConfig{.max_iterations = 20000});
    const LinearMap closed = fit_map(gen::rep(x), gen::rep(y), fam(k));
    if (k != FamilyKind::Affine) CHECK(m.orthogonality_defect() <= 0.05);
    CHECK(mse(m, x, y) <= mse(closed, x, y) * 1.05 + 1e-6);
  }
}

TEST_CASE("alignment error paths") {
  gen::Source g(46);
  try {
    (void)fit_affine(gen::rep(g.gaussian(5, 2)), gen::rep(g.gaussian(6, 2)));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
  try {
    (void)fit_orthogonal(gen::rep(Matrix::Ones(5, 2)), gen::rep(g.gaussian(5, 2)));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateInput);
  }
  CHECK(rep_similarity_from_mse(0.0, 0.0) == 1.0);
  CHECK(rep_similarity_from_mse(1.0, 0.0) == 0.0);
  CHECK(rep_similarity_from_mse(0.5, 2.0) == doctest::Approx(0.75));
}
