#pragma once

// Synthetic representation pairs with known ground-truth relationships and a
// labeled task carrying a fine -> coarse class hierarchy.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "usim/types.hpp"

namespace usim {

enum class ScenarioKind {
  OrthoTwin,        // Z2 = Z1 Q
  ScaleTwin,        // Z2 = s Z1 Q
  AffineTwin,       // Z2 = Z1 M + b
  Projection,       // Z2 = Z1 P, P with `keep` orthonormal columns
  NuisanceAugment,  // Z2 = [Z1 Q | N], N label-independent with `extra` columns
  NonlinearWarp,    // Z2 = relu-MLP(Z1) with `depth` layers
  IndependentPair,  // Z2 independent of Z1
};

std::string_view to_string(ScenarioKind kind) noexcept;
std::optional<ScenarioKind> parse_scenario(std::string_view text) noexcept;

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::OrthoTwin;
  Index n = 400;
  Index d = 8;
  int classes = 4;
  int fine_per_coarse = 2;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Projection width (must be < d).
  Index keep = 4;
  /// NuisanceAugment extra columns (>= 1).
  Index extra = 8;
  /// NonlinearWarp layers (>= 1).
  int depth = 2;
  /// Minimum top-1 minus top-2 teacher logit gap enforced by rejection.
  double margin = 1.0;

  /// Throws InvalidSpec.
  void validate() const;
  /// Stable identifier, e.g. "Projection(keep=4)/noise=0.1/seed=3".
  std::string label() const;
};

struct ScenarioPair {
  RepresentationSet z1;
  RepresentationSet z2;
  /// grouping[fine] = coarse (contiguous blocks of fine_per_coarse classes).
  std::vector<int> grouping;
  /// Ground-truth map parameters used for Z2 before noise (empty when not linear).
  Matrix transform;
};

/// Deterministic in the spec (including seed). Labels come from a linear
/// teacher on Z1 whose fine-class directions cluster around coarse prototypes.
ScenarioPair generate(const ScenarioSpec& spec);

}  // namespace usim
