#include "usim/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "usim/linalg.hpp"

namespace usim {

namespace {

constexpr double kTeacherGain = 3.0;
constexpr double kFineSpread = 0.6;
constexpr long kMaxAttemptsPerSample = 100000;

enum Stream : std::uint64_t { kTeacher = 1, kBase = 2, kTransform = 3, kNoise = 4 };

Vector random_unit(Index d, Rng& rng) {
  Vector v = gaussian_matrix(d, 1, rng).col(0);
  return v / v.norm();
}

// Fine-class directions cluster around one prototype per coarse class.
Matrix teacher_weights(const ScenarioSpec& spec, Rng& rng) {
  const int groups = spec.classes / spec.fine_per_coarse;
  std::vector<Vector> prototypes;
  for (int g = 0; g < groups; ++g) prototypes.push_back(random_unit(spec.d, rng));
  Matrix t(spec.d, spec.classes);
  for (int c = 0; c < spec.classes; ++c) {
    Vector dir = prototypes[static_cast<std::size_t>(c / spec.fine_per_coarse)];
    if (spec.fine_per_coarse > 1) dir += kFineSpread * random_unit(spec.d, rng);
    t.col(c) = kTeacherGain * dir / dir.norm();
  }
  return t;
}

// Class-balanced rejection sampling: row i gets class i mod C and is redrawn
// until the teacher agrees with a top-2 logit gap of at least `margin`.
std::pair<Matrix, Labels> sample_base(const ScenarioSpec& spec, const Matrix& teacher, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(spec.n, spec.d);
  Labels labels(static_cast<std::size_t>(spec.n));
  RowVector x(spec.d);
  for (Index i = 0; i < spec.n; ++i) {
    const int target = static_cast<int>(i % spec.classes);
    long attempts = 0;
    while (true) {
      if (++attempts > kMaxAttemptsPerSample) {
        throw Error(ErrorCode::InvalidSpec, "teacher margin " + std::to_string(spec.margin) +
                                                " unattainable for class " + std::to_string(target));
      }
      for (Index j = 0; j < spec.d; ++j) x(j) = normal(rng);
      const RowVector logits = x * teacher;
      Index best = 0;
      for (Index c = 1; c < logits.size(); ++c) {
        if (logits(c) > logits(best)) best = c;
      }
      if (best != target) continue;
      double runner_up = -std::numeric_limits<double>::infinity();
      for (Index c = 0; c < logits.size(); ++c) {
        if (c != best) runner_up = std::max(runner_up, logits(c));
      }
      if (logits(best) - runner_up >= spec.margin) break;
    }
    z.row(i) = x;
    labels[static_cast<std::size_t>(i)] = target;
  }
  return {std::move(z), std::move(labels)};
}

Matrix relu(Matrix m) { return m.cwiseMax(0.0); }

}  // namespace

std::string_view to_string(ScenarioKind kind) noexcept {
  switch (kind) {
    case ScenarioKind::OrthoTwin: return "OrthoTwin";
    case ScenarioKind::ScaleTwin: return "ScaleTwin";
    case ScenarioKind::AffineTwin: return "AffineTwin";
    case ScenarioKind::Projection: return "Projection";
    case ScenarioKind::NuisanceAugment: return "NuisanceAugment";
    case ScenarioKind::NonlinearWarp: return "NonlinearWarp";
    case ScenarioKind::IndependentPair: return "IndependentPair";
  }
  return "?";
}

std::optional<ScenarioKind> parse_scenario(std::string_view text) noexcept {
  for (auto k : {ScenarioKind::OrthoTwin, ScenarioKind::ScaleTwin, ScenarioKind::AffineTwin,
                 ScenarioKind::Projection, ScenarioKind::NuisanceAugment,
                 ScenarioKind::NonlinearWarp, ScenarioKind::IndependentPair}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

void ScenarioSpec::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
  if (d < 1) fail("d must be >= 1");
  if (classes < 2) fail("classes must be >= 2");
  if (fine_per_coarse < 1) fail("fine_per_coarse must be >= 1");
  if (classes % fine_per_coarse != 0) fail("classes must be divisible by fine_per_coarse");
  if (n < 4 * static_cast<Index>(classes)) fail("n must be at least 4 samples per class");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
  if (!(margin >= 0.0) || !std::isfinite(margin)) fail("margin must be >= 0");
  if (kind == ScenarioKind::Projection && (keep < 1 || keep >= d)) fail("keep must be in [1, d)");
  if (kind == ScenarioKind::NuisanceAugment && extra < 1) fail("extra must be >= 1");
  if (kind == ScenarioKind::NonlinearWarp && depth < 1) fail("depth must be >= 1");
}

std::string ScenarioSpec::label() const {
  std::string out(to_string(kind));
  if (kind == ScenarioKind::Projection) out += "(keep=" + std::to_string(keep) + ")";
  if (kind == ScenarioKind::NuisanceAugment) out += "(extra=" + std::to_string(extra) + ")";
  if (kind == ScenarioKind::NonlinearWarp) out += "(depth=" + std::to_string(depth) + ")";
  char buf[64];
  std::snprintf(buf, sizeof buf, "/noise=%g/seed=%llu", noise_sigma,
                static_cast<unsigned long long>(seed));
  return out + buf;
}

ScenarioPair generate(const ScenarioSpec& spec) {
  spec.validate();
  Rng teacher_rng(mix_seed(spec.seed, kTeacher));
  Rng base_rng(mix_seed(spec.seed, kBase));
  Rng transform_rng(mix_seed(spec.seed, kTransform));
  Rng noise_rng(mix_seed(spec.seed, kNoise));

  const Matrix teacher = teacher_weights(spec, teacher_rng);
  auto [z1, labels] = sample_base(spec, teacher, base_rng);

  Matrix z2;
  Matrix transform;
  switch (spec.kind) {
    case ScenarioKind::OrthoTwin: {
      transform = random_orthogonal(spec.d, transform_rng);
      z2 = z1 * transform;
      break;
    }
    case ScenarioKind::ScaleTwin: {
      std::uniform_real_distribution<double> uni(0.5, 2.5);
      const double s = uni(transform_rng);
      transform = s * random_orthogonal(spec.d, transform_rng);
      z2 = z1 * transform;
      break;
    }
    case ScenarioKind::AffineTwin: {
      std::uniform_real_distribution<double> uni(0.25, 2.0);
      Vector sigma(spec.d);
      for (Index i = 0; i < spec.d; ++i) sigma(i) = uni(transform_rng);
      const Matrix u = random_orthogonal(spec.d, transform_rng);
      const Matrix v = random_orthogonal(spec.d, transform_rng);
      transform = u * sigma.asDiagonal() * v.transpose();
      const RowVector shift = gaussian_matrix(1, spec.d, transform_rng).row(0);
      z2 = (z1 * transform).rowwise() + shift;
      break;
    }
    case ScenarioKind::Projection: {
      transform = random_orthogonal(spec.d, transform_rng).leftCols(spec.keep);
      z2 = z1 * transform;
      break;
    }
    case ScenarioKind::NuisanceAugment: {
      transform = random_orthogonal(spec.d, transform_rng);
      z2.resize(spec.n, spec.d + spec.extra);
      z2.leftCols(spec.d) = z1 * transform;
      z2.rightCols(spec.extra) = gaussian_matrix(spec.n, spec.extra, transform_rng);
      break;
    }
    case ScenarioKind::NonlinearWarp: {
      z2 = z1;
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      for (int layer = 0; layer < spec.depth; ++layer) {
        const Matrix w = random_orthogonal(spec.d, transform_rng);
        RowVector b(spec.d);
        for (Index j = 0; j < spec.d; ++j) b(j) = uni(transform_rng);
        z2 = relu((z2 * w).rowwise() + b);
      }
      break;
    }
    case ScenarioKind::IndependentPair: {
      z2 = gaussian_matrix(spec.n, spec.d, transform_rng);
      break;
    }
  }
  if (spec.noise_sigma > 0.0) z2 += gaussian_matrix(z2.rows(), z2.cols(), noise_rng, spec.noise_sigma);

  std::vector<int> grouping(static_cast<std::size_t>(spec.classes));
  for (int c = 0; c < spec.classes; ++c) grouping[static_cast<std::size_t>(c)] = c / spec.fine_per_coarse;

  const std::string id = spec.label();
  RepresentationSet r1(std::move(z1), labels, id + "#Z1");
  RepresentationSet r2(std::move(z2), std::move(labels), id + "#Z2");
  return ScenarioPair{std::move(r1), std::move(r2), std::move(grouping), std::move(transform)};
}

}  // namespace usim
