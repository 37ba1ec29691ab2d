#pragma once

// Shared fixtures for the test binaries: hand-built specs and random spec
// generators for property tests.

#include <random>

#include "eivpred/linalg.hpp"
#include "eivpred/models.hpp"

namespace eiv::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Rng& rng, Eigen::Index dim, double lo = 0.3, double hi = 2.0) {
  Matrix g(dim, dim);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = uniform(rng, -1.0, 1.0);
  const Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();
  Vector ev(dim);
  for (Eigen::Index i = 0; i < dim; ++i) ev(i) = uniform(rng, lo, hi);
  Matrix a = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

inline Matrix zeros(Eigen::Index r, Eigen::Index c) { return Matrix::Zero(r, c); }
inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

/// Scalar spec skeleton: xi ~ N(mu, sxi2), delta ~ N(0, sdelta2), e ~ N(0, se2).
inline ModelSpec scalar_spec(Family family, LatentParams params, double mu, double sxi2, double sdelta2, double se2,
                             double seps2 = 0.0, double sed = 0.0) {
  ModelSpec s;
  s.family = family;
  s.params = std::move(params);
  s.xi_mean = Vector::Constant(1, mu);
  s.xi_cov = scalar(sxi2);
  s.z.mean = Vector(0);
  s.z.cov = Matrix(0, 0);
  s.z.half_width = Vector(0);
  s.z.shift = Vector(0);
  s.errors.sigma_e = scalar(se2);
  s.errors.sigma_eps = scalar(seps2);
  s.errors.sigma_delta = scalar(sdelta2);
  s.errors.sigma_eps_delta = scalar(sed);
  return s;
}

inline ModelSpec linear_scalar_spec(double b, double c, double B, double mu, double sxi2, double sdelta2, double se2,
                                    double seps2, double sed, ZDistribution::Kind zkind = ZDistribution::Kind::gaussian) {
  ModelSpec s = scalar_spec(Family::linear_mv, LinearParams{Vector::Constant(1, b), scalar(c), scalar(B)}, mu, sxi2,
                            sdelta2, se2, seps2, sed);
  s.z.kind = zkind;
  s.z.mean = Vector::Constant(1, 0.5);
  s.z.cov = scalar(1.0);
  s.z.half_width = Vector::Constant(1, 1.5);
  s.z.shift = Vector::Constant(1, 1.0);
  if (zkind == ZDistribution::Kind::two_point_mixture) s.z.cov = scalar(0.25);
  return s;
}

/// Random multivariate linear spec with correlated (eps, delta).
inline ModelSpec random_linear_spec(Rng& rng, Eigen::Index d, Eigen::Index q, Eigen::Index m) {
  ModelSpec s;
  s.family = Family::linear_mv;
  LinearParams p;
  p.b = Vector(d);
  p.C = Matrix(q, d);
  p.B = Matrix(m, d);
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b(i) = uniform(rng, -2, 2);
  for (Eigen::Index i = 0; i < p.C.size(); ++i) p.C(i) = uniform(rng, -2, 2);
  for (Eigen::Index i = 0; i < p.B.size(); ++i) p.B(i) = uniform(rng, -2, 2);
  s.params = p;
  s.xi_mean = Vector(m);
  for (Eigen::Index i = 0; i < m; ++i) s.xi_mean(i) = uniform(rng, -2, 2);
  s.xi_cov = random_spd(rng, m);
  s.z.kind = ZDistribution::Kind::gaussian;
  s.z.mean = Vector::Zero(q);
  s.z.cov = q > 0 ? random_spd(rng, q) : Matrix(0, 0);
  s.z.half_width = Vector(0);
  s.z.shift = Vector(0);
  s.errors.sigma_e = random_spd(rng, d, 0.1, 0.5);
  // Joint (eps, delta) covariance, then split into blocks.
  const Matrix joint = random_spd(rng, d + m, 0.2, 1.0);
  s.errors.sigma_eps = joint.topLeftCorner(d, d);
  s.errors.sigma_delta = joint.bottomRightCorner(m, m);
  s.errors.sigma_eps_delta = joint.topRightCorner(d, m);
  return s;
}

}  // namespace eiv::testing
