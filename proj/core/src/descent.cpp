#include "descent.hpp"

#include <cmath>

namespace usim::detail {

DescentResult gradient_descent(Vector theta, const Objective& objective,
                               const Projection& project, const DescentOptions& opts) {
  constexpr int kMaxHalvings = 40;
  if (project) project(theta);

  DescentResult out;
  Vector grad(theta.size());
  double f = objective(theta, &grad);
  if (!std::isfinite(f)) {
    throw Error(ErrorCode::ConvergenceFailure, "objective is not finite at the starting point");
  }
  out.history.push_back(f);
  double lr = opts.learning_rate;

  for (int it = 1; it <= opts.max_iterations; ++it) {
    Vector trial;
    Vector trial_grad(theta.size());
    double f_trial = 0.0;
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      trial = theta - lr * grad;
      if (project) project(trial);
      f_trial = objective(trial, &trial_grad);
      if (std::isfinite(f_trial) && f_trial <= f) {
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) {
      // No descent direction at any resolvable step size: stationary.
      out.converged = true;
      out.iterations = it - 1;
      break;
    }
    theta = std::move(trial);
    grad = std::move(trial_grad);
    f = f_trial;
    lr *= opts.growth;
    out.history.push_back(f);
    out.iterations = it;

    const auto k = out.history.size() - 1;
    if (k >= static_cast<std::size_t>(opts.window)) {
      const double change = std::abs(out.history[k - static_cast<std::size_t>(opts.window)] - f);
      if (change <= opts.rel_tolerance * std::abs(f) || change <= opts.abs_tolerance) {
        out.converged = true;
        break;
      }
    }
  }
  out.theta = std::move(theta);
  out.objective = f;
  return out;
}

}  // namespace usim::detail
