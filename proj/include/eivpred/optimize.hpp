#pragma once

#include <functional>

#include "eivpred/linalg.hpp"

namespace eiv {

struct OptimizeOptions {
  int max_iterations = 500;
  double rel_tol = 1e-12;  // stop when the relative objective decrease drops below this
  double x_tol = 1e-10;    // simplex only: stop when its diameter is this small relative to the best vertex
};

struct OptimizeResult {
  Vector params;
  double objective = 0.0;  // sum of squared residuals
  int iterations = 0;
  bool converged = false;
};

/// Residual callback: fills r (length n) and, when jac is non-null, the n x p Jacobian dr/dparams.
using ResidualFn = std::function<void(const Vector& params, Vector& r, Matrix* jac)>;

/// Damped Gauss-Newton with Marquardt diagonal scaling.
OptimizeResult levenberg_marquardt(const ResidualFn& fn, Vector start, const OptimizeOptions& opts = {});

/// Derivative-free Nelder-Mead simplex minimisation of a scalar objective.
OptimizeResult nelder_mead(const std::function<double(const Vector&)>& f, Vector start, const Vector& step,
                           const OptimizeOptions& opts = {});

}  // namespace eiv
