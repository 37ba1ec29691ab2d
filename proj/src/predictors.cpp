#include "eivpred/predictors.hpp"

#include <cmath>

#include <fmt/format.h>

#include "eivpred/errors.hpp"
#include "eivpred/special.hpp"
#include "eivpred/transform.hpp"

namespace eiv {

namespace {

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput(fmt::format("alpha must lie in (0, 1), got {}", alpha));
}

ConfidenceRegion ellipsoid(const FittedModel& fit, const Prediction& pred, double alpha, RegionKind kind) {
  require_alpha(alpha);
  const Eigen::Index d = fit.sigma_u.dim();
  if (pred.point.size() != d) throw DimensionError("region: prediction and fit disagree on d");
  ConfidenceRegion region;
  region.kind = kind;
  region.alpha = alpha;
  region.center = pred.point;
  const SymMatrix inv = pinv(fit.sigma_u);
  region.shape = sym_sqrt(inv).mat();
  const double cond = condition_number(fit.sigma_u);
  if (!(cond <= 1e12)) {
    region.degenerate = true;
    region.warnings.push_back(
        fmt::format("Sigma_u is near-singular (condition number {:.3e}); coverage applies on its range only", cond));
  }
  return region;
}

}  // namespace

std::string to_string(RegionKind k) {
  switch (k) {
    case RegionKind::chebyshev: return "chebyshev";
    case RegionKind::chisquare: return "chisquare";
    case RegionKind::quadratic: return "quadratic";
  }
  return "?";
}

RegionKind region_kind_from_string(const std::string& s) {
  if (s == "chebyshev") return RegionKind::chebyshev;
  if (s == "chisquare") return RegionKind::chisquare;
  if (s == "quadratic") return RegionKind::quadratic;
  throw InvalidInput("unknown region kind '" + s + "' (expected chebyshev, chisquare or quadratic)");
}

Prediction predict_individual(const FittedModel& fit, const Vector& z0, const Vector& x0) {
  Prediction p;
  p.point = evaluate(fit, z0, x0);
  p.kind = PredictionKind::individual;
  p.z0 = z0;
  p.x0 = x0;
  if (!p.point.allFinite()) throw InvalidInput("prediction is not finite");
  return p;
}

Prediction predict_mean(const FittedModel& fit, const Vector& z0, const Vector& x0, const Matrix& sigma_eps_delta) {
  Prediction p = predict_individual(fit, z0, x0);
  p.kind = PredictionKind::mean;
  if (sigma_eps_delta.rows() != p.point.size() || sigma_eps_delta.cols() != x0.size()) {
    throw DimensionError(fmt::format("predict_mean: Sigma_eps_delta must be {} x {}", p.point.size(), x0.size()));
  }
  // Nondifferential error: the mean and individual predictions coincide exactly.
  if ((sigma_eps_delta.array() == 0.0).all()) return p;
  const Matrix sx_inv = spd_inverse(fit.moments.sigma_x_hat, "sample covariance of x");
  p.point -= sigma_eps_delta * (sx_inv * (x0 - fit.moments.mu_hat));
  return p;
}

ConfidenceRegion region_chebyshev(const FittedModel& fit, const Prediction& pred, double alpha) {
  ConfidenceRegion region = ellipsoid(fit, pred, alpha, RegionKind::chebyshev);
  region.threshold = static_cast<double>(pred.point.size()) / alpha;
  return region;
}

ConfidenceRegion region_chisquare(const FittedModel& fit, const Prediction& pred, double alpha, bool purely_normal) {
  ConfidenceRegion region = ellipsoid(fit, pred, alpha, RegionKind::chisquare);
  region.threshold = chi2_upper_quantile(static_cast<int>(pred.point.size()), alpha);
  region.purely_normal_asserted = purely_normal;
  if (!purely_normal) region.warnings.push_back("purely-normal assumption not asserted");
  return region;
}

ConfidenceRegion region_quadratic(const FittedModel& fit, const Prediction& pred, double alpha, double k0) {
  require_alpha(alpha);
  if (!(k0 > 0.0 && k0 <= 0.5)) throw InvalidInput(fmt::format("K0 must lie in (0, 1/2], got {}", k0));
  const bool quadratic = fit.family == Family::quadratic || (fit.family == Family::polynomial && fit.degree == 2 && fit.q == 0);
  if (!quadratic) throw InvalidInput("region_quadratic: needs a quadratic fit");
  if (pred.point.size() != 1 || pred.x0.size() != 1) throw DimensionError("region_quadratic: scalar prediction expected");

  const double sx2 = fit.moments.sigma_x_hat(0, 0);
  const double g = quadratic_bound_g(pred.x0(0), fit.moments.mu_hat(0), sx2, fit.slopes(0, 0), fit.slopes(1, 0), k0);
  const double bracket = fit.m_u2() + 4.0 * (1.0 / k0 - 1.0) * sx2 * g;

  ConfidenceRegion region;
  region.kind = RegionKind::quadratic;
  region.alpha = alpha;
  region.k0 = k0;
  region.center = pred.point;
  region.shape = Matrix::Identity(1, 1);
  if (bracket <= 0.0) {
    region.degenerate = true;
    region.warnings.push_back("variance bound is not positive; interval has zero width");
  }
  region.threshold = std::sqrt(std::max(bracket, 0.0) / alpha);
  return region;
}

bool region_contains(const ConfidenceRegion& region, const Vector& h) {
  if (h.size() != region.center.size()) {
    throw DimensionError(fmt::format("region_contains: h has {} entries, region has {}", h.size(), region.center.size()));
  }
  const Vector dev = h - region.center;
  if (region.kind == RegionKind::quadratic) return std::abs(dev(0)) <= region.threshold;
  return (region.shape * dev).squaredNorm() <= region.threshold;
}

}  // namespace eiv
