#pragma once

#include <string>
#include <vector>

#include "eivpred/estimators.hpp"
#include "eivpred/linalg.hpp"

namespace eiv {

enum class PredictionKind { individual, mean };

struct Prediction {
  Vector point;
  PredictionKind kind = PredictionKind::individual;
  Vector z0;
  Vector x0;
};

enum class RegionKind { chebyshev, chisquare, quadratic };

std::string to_string(RegionKind k);
RegionKind region_kind_from_string(const std::string& s);

/// chebyshev / chisquare: { h : |shape (h - center)|^2 <= threshold }
/// quadratic:             { h : |h - center| <= threshold } (threshold is the half-width)
struct ConfidenceRegion {
  RegionKind kind = RegionKind::chebyshev;
  double alpha = 0.05;
  Vector center;
  Matrix shape;  // (Sigma_u^+)^(1/2); 1x1 identity for the quadratic interval
  double threshold = 0.0;
  double k0 = 0.0;                    // quadratic only
  bool purely_normal_asserted = false;  // chisquare only
  bool degenerate = false;            // rank-deficient Sigma_u or a clamped interval bracket
  std::vector<std::string> warnings;
};

/// Plug-in evaluation of the fitted observable regression at (z0, x0).
Prediction predict_individual(const FittedModel& fit, const Vector& z0, const Vector& x0);

/// Mean prediction: the individual prediction minus
/// Sigma_eps_delta Sigma_x_hat^-1 (x0 - mu_hat). sigma_eps_delta is d x m.
Prediction predict_mean(const FittedModel& fit, const Vector& z0, const Vector& x0, const Matrix& sigma_eps_delta);

/// Threshold d / alpha.
ConfidenceRegion region_chebyshev(const FittedModel& fit, const Prediction& pred, double alpha);

/// Threshold: upper alpha-quantile of chi-square with d degrees of freedom.
/// The coverage claim needs a purely normal model; purely_normal records whether
/// the caller asserts it, and a warning is attached when it does not.
ConfidenceRegion region_chisquare(const FittedModel& fit, const Prediction& pred, double alpha,
                                  bool purely_normal = false);

/// Interval for the quadratic family with reliability lower bound k0 in (0, 1/2]:
/// half-width alpha^(-1/2) [m_u2 + 4 (1/k0 - 1) sigma_x^2 G]_+^(1/2).
ConfidenceRegion region_quadratic(const FittedModel& fit, const Prediction& pred, double alpha, double k0);

bool region_contains(const ConfidenceRegion& region, const Vector& h);

}  // namespace eiv
