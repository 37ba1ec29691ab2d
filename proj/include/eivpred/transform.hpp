#pragma once

#include <optional>
#include <variant>

#include "eivpred/linalg.hpp"
#include "eivpred/models.hpp"

namespace eiv {

/// Law of (xi, eps) given x. Writing xi = offset_xi + coeff_xi x + gamma1 and
/// eps = coeff_eps (x - mu) + gamma2, (gamma1, gamma2) ~ N(0, v12) independent of x.
struct ConditionalGaussian {
  Matrix coeff_xi;   // Sigma_xi Sigma_x^-1, m x m
  Vector offset_xi;  // Sigma_delta Sigma_x^-1 mu, m
  Matrix coeff_eps;  // Sigma_eps_delta Sigma_x^-1, d x m
  Matrix v12;        // (m + d) x (m + d), ordered (gamma1, gamma2)
};

ConditionalGaussian condition_gaussian(const ModelSpec& spec);

struct LinearTransformed {
  Vector b_x;         // d
  Matrix C;           // q x d
  Matrix B_x;         // m x d
  SymMatrix sigma_u;  // d x d
};

struct PolynomialTransformed {
  Vector c;  // q
  double beta0_x = 0.0;
  Vector beta_x;  // k
  // Ingredients: xi = a + K x + gamma1, Var(gamma1) = gamma_var = K sigma_delta^2,
  // E[eps | x] = f (x - mu).
  double a = 0.0;
  double K = 1.0;
  double gamma_var = 0.0;
  double f = 0.0;
};

struct ExponentialTransformed {
  double beta_x = 0.0;
  double lambda_x = 0.0;
};

/// E[y|x] = a0_x + sum_h (a_x[h] cos(h omega_x x) + b_x[h] sin(h omega_x x)).
struct TrigTransformed {
  double a0_x = 0.0;
  Vector a_x;
  Vector b_x;
  double omega_x = 0.0;
  Vector damping;  // exp(-h^2 omega^2 K sigma_delta^2 / 2)
  Vector phase;    // h omega (1 - K) mu
};

/// E[y|x] = beta_x F(k_x x + b_x).
struct AbsTransformed {
  double beta_x = 0.0;
  double k_x = 0.0;
  double b_x = 0.0;
};

using TransformedVariant =
    std::variant<LinearTransformed, PolynomialTransformed, ExponentialTransformed, TrigTransformed, AbsTransformed>;

struct TransformedParams {
  Family family = Family::linear_mv;
  TransformedVariant params;

  template <class P>
  const P& as() const { return std::get<P>(params); }
};

LinearTransformed transform_linear(const ModelSpec& spec);
PolynomialTransformed transform_polynomial(const ModelSpec& spec);
ExponentialTransformed transform_exponential(const ModelSpec& spec);
TrigTransformed transform_trig(const ModelSpec& spec);
AbsTransformed transform_abs(const ModelSpec& spec);

/// Dispatches on spec.family.
TransformedParams transform(const ModelSpec& spec);

/// Best predictor E[y | z, x] implied by the transformed parameters.
Vector best_predictor(const TransformedParams& tp, const Vector& z, const Vector& x);

/// E[g^p] for g ~ N(0, variance): zero for odd p, (p-1)!! variance^(p/2) for even p.
double gaussian_central_moment(int p, double variance);

/// Quadratic model: exact conditional variance of u given x, its mean, and the
/// observable-scale bound term G.
struct QuadraticVariance {
  double var_u_given_x = 0.0;
  double m_u2 = 0.0;
  double G = 0.0;
  /// m_u2 + 4 (1/k0 - 1) sigma_x^2 G, which dominates var_u_given_x whenever K >= k0.
  double bound = 0.0;
};

/// Bound term G(x, mu, sigma_x^2, beta_1x, beta_2x) for reliability lower bound k0:
///   beta_2x^2 [x^2 - mu^2 - sigma_x^2 + 2 (mu (x - mu))_- (1 - k0)^2 (1 + 1/k0)]_+
///   + (beta_1x beta_2x (x - mu))_+
/// The first bracket is clamped at zero so that G >= 0; without the clamp the
/// bound fails near x = mu whenever K > k0.
double quadratic_bound_g(double x, double mu, double sigma_x2, double beta1x, double beta2x, double k0);

QuadraticVariance transform_quadratic_variance(const ModelSpec& spec, double x, double k0);

}  // namespace eiv
