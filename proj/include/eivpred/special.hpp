#pragma once

namespace eiv {

double normal_pdf(double t);

/// Standard normal cdf via erfc.
double normal_cdf(double t);

/// E|g + a| for g ~ N(0, 1): 2 phi(a) + a (2 Phi(a) - 1).
double abs_F(double a);

/// F'(a) = 2 Phi(a) - 1.
double abs_F_derivative(double a);

/// Regularized lower incomplete gamma P(s, x).
double gamma_p(double s, double x);

/// Regularized upper incomplete gamma Q(s, x) = 1 - P(s, x).
double gamma_q(double s, double x);

/// Upper alpha-quantile of chi-square with `dof` degrees of freedom:
/// the c with P(chi2_dof > c) = alpha. Bisection, absolute error below 1e-10.
double chi2_upper_quantile(int dof, double alpha);

}  // namespace eiv
