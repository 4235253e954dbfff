#pragma once

// Full-batch gradient descent with step halving, shared by the alignment
// backend, the task heads and the stitchers.

#include <functional>
#include <vector>

#include "usim/types.hpp"

namespace usim::detail {

struct DescentOptions {
  double learning_rate = 1e-2;
  int max_iterations = 2000;
  /// Stop when |f[k - window] - f[k]| <= rel_tolerance * |f[k]| or <= abs_tolerance.
  double rel_tolerance = 1e-9;
  int window = 20;
  double abs_tolerance = 0.0;
  /// Learning-rate multiplier after each accepted step (1 keeps it fixed).
  double growth = 1.0;
};

struct DescentResult {
  Vector theta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

/// Objective value at theta; writes the gradient when `grad` is non-null.
using Objective = std::function<double(const Vector& theta, Vector* grad)>;
/// Optional in-place projection applied after every step.
using Projection = std::function<void(Vector& theta)>;

/// Accepted steps never increase the objective: a trial step that does is
/// retried with half the learning rate.
DescentResult gradient_descent(Vector theta, const Objective& objective,
                               const Projection& project, const DescentOptions& opts);

}  // namespace usim::detail
