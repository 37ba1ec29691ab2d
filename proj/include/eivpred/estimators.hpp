#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eivpred/linalg.hpp"
#include "eivpred/models.hpp"
#include "eivpred/optimize.hpp"

namespace eiv {

/// Sample means and covariances of the regressor vector r and the response.
/// S-matrices use 1/n normalisation, sigma_x_hat uses 1/(n - 1).
struct SampleMoments {
  Eigen::Index n = 0;
  Vector r_mean;
  Vector y_mean;
  Matrix s_rr;
  Matrix s_ry;
  Vector mu_hat;       // sample mean of x
  Matrix s_xx;         // 1/n sample covariance of x
  Matrix sigma_x_hat;  // 1/(n - 1) sample covariance of x
};

/// Regressor matrix (one row per observation): linear (z, x); polynomial
/// (z, x, ..., x^k); quadratic (x, x^2).
Matrix build_regressors(Family family, int degree, const Matrix& z, const Matrix& x);

SampleMoments sample_moments(const Dataset& data, Family family, int degree = 1);

struct FittedModel {
  Family family = Family::linear_mv;
  int degree = 1;     // polynomial degree
  int harmonics = 0;  // trigonometric harmonics
  Eigen::Index q = 0;

  // OLS families: y = intercept + slopes^T r
  Vector intercept;  // d
  Matrix slopes;     // dim(r) x d, z rows first

  // Nonlinear families: exponential (beta_x, lambda_x); trigonometric
  // (a0, a_1..a_H, b_1..b_H, omega_x); absolute-value (beta_x, k_x, b_x).
  Vector theta;

  SymMatrix sigma_u;  // 1/n residual second moment; 1x1 m_u2 for scalar families
  SampleMoments moments;
  Eigen::Index n = 0;

  double condition_number = 1.0;  // of S_rr
  double objective = 0.0;
  bool converged = true;
  int iterations = 0;
  int starts_converged = 0;
  std::vector<std::string> warnings;

  Matrix C() const { return slopes.topRows(q); }
  Matrix B_x() const { return slopes.bottomRows(slopes.rows() - q); }
  double m_u2() const { return sigma_u(0, 0); }
};

struct OlsOptions {
  int max_degree = 6;
  double condition_warning = 1e12;
};

/// OLS of y on r: slopes = S_rr^+ S_ry (minimum-norm when singular), intercept
/// from the means, residual second moment with 1/n.
FittedModel ols_fit(const Dataset& data, Family family, int degree = 1, const OlsOptions& opts = {});

/// Fitted regression function at (z, x).
Vector evaluate(const FittedModel& fit, const Vector& z, const Vector& x);

SymMatrix residual_covariance(const Dataset& data, const FittedModel& fit);

struct NlsOptions {
  int harmonics = 1;
  int starts = 8;
  OptimizeOptions optimizer;
  /// Optional user start; it and its sign flips take the first slots of the multi-start list.
  std::optional<Vector> initial;
};

/// Multi-start nonlinear least squares in the observable parametrisation of the
/// exponential, trigonometric, or absolute-value (F-based) model. Throws
/// NonConvergence when no start converges.
FittedModel nls_fit(const Dataset& data, Family family, const NlsOptions& opts = {});

struct NaiveAbsFit {
  double beta = 0.0;
  double a = 0.0;
  double objective = 0.0;
  bool converged = false;
  int starts_converged = 0;
};

/// Minimiser of sum (y_i - beta |x_i + a|)^2, the naive plug-in fit of the
/// absolute-value model. Nelder-Mead multi-start.
NaiveAbsFit naive_ols_abs(const Dataset& data, const NlsOptions& opts = {});

}  // namespace eiv
