#include "eivpred/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "eivpred/errors.hpp"
#include "eivpred/special.hpp"

namespace eiv {

namespace {

Matrix column_means_removed(const Matrix& a, Vector& mean) {
  mean = a.colwise().mean().transpose();
  return a.rowwise() - mean.transpose();
}

void require_rows(const Dataset& data) {
  if (data.x.rows() != data.n() || (data.z.cols() > 0 && data.z.rows() != data.n())) {
    throw DimensionError("dataset: y, z and x must have the same number of rows");
  }
}

Vector scalar_column(const Matrix& a, const char* what) {
  if (a.cols() != 1) throw DimensionError(fmt::format("{} must be a single column for this family", what));
  return a.col(0);
}

double sample_sd(const Vector& v) {
  const double mean = v.mean();
  const double var = (v.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(v.size()) - 1.0);
  return var > 0.0 ? std::sqrt(var) : 1.0;
}

int parameter_count(Family family, int harmonics) {
  switch (family) {
    case Family::exponential: return 2;
    case Family::trigonometric: return 2 * harmonics + 2;
    case Family::absolute_value: return 3;
    default: return 0;
  }
}

// Residuals y - f(x; theta) and their Jacobian for the nonlinear families.
ResidualFn residual_function(Family family, int harmonics, const Vector& x, const Vector& y) {
  switch (family) {
    case Family::exponential:
      return [&x, &y](const Vector& t, Vector& r, Matrix* jac) {
        const Vector e = (t(1) * x.array()).exp().matrix();
        r = y - t(0) * e;
        if (jac) {
          jac->resize(x.size(), 2);
          jac->col(0) = -e;
          jac->col(1) = -(t(0) * x.array() * e.array()).matrix();
        }
      };
    case Family::trigonometric:
      return [&x, &y, harmonics](const Vector& t, Vector& r, Matrix* jac) {
        const double omega = t(2 * harmonics + 1);
        r = y.array() - t(0);
        Vector d_omega = Vector::Zero(x.size());
        if (jac) {
          jac->resize(x.size(), 2 * harmonics + 2);
          jac->col(0).setConstant(-1.0);
        }
        for (int h = 1; h <= harmonics; ++h) {
          const Eigen::ArrayXd arg = h * omega * x.array();
          const Eigen::ArrayXd c = arg.cos();
          const Eigen::ArrayXd s = arg.sin();
          const double a = t(h);
          const double b = t(harmonics + h);
          r.array() -= a * c + b * s;
          if (jac) {
            jac->col(h) = -c.matrix();
            jac->col(harmonics + h) = -s.matrix();
            d_omega.array() -= h * x.array() * (b * c - a * s);
          }
        }
        if (jac) jac->col(2 * harmonics + 1) = d_omega;
      };
    case Family::absolute_value:
      return [&x, &y](const Vector& t, Vector& r, Matrix* jac) {
        const Eigen::Index n = x.size();
        r.resize(n);
        if (jac) jac->resize(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double arg = t(1) * x(i) + t(2);
          const double f = abs_F(arg);
          r(i) = y(i) - t(0) * f;
          if (jac) {
            const double df = abs_F_derivative(arg);
            (*jac)(i, 0) = -f;
            (*jac)(i, 1) = -t(0) * df * x(i);
            (*jac)(i, 2) = -t(0) * df;
          }
        }
      };
    default:
      throw InvalidInput("nls_fit: family must be exponential, trigonometric or absolute-value");
  }
}

std::vector<Vector> exponential_starts(const Vector& x, const Vector& y) {
  // log|y| regression on the points sharing the sign of the mean response
  const double sign = y.mean() < 0.0 ? -1.0 : 1.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (sign * y(i) <= 0.0) continue;
    const double ly = std::log(sign * y(i));
    sx += x(i);
    sy += ly;
    sxx += x(i) * x(i);
    sxy += x(i) * ly;
    ++count;
  }
  double beta = y.mean();
  double lambda = 0.0;
  const double denom = count * sxx - sx * sx;
  if (count >= 3 && denom > 0.0) {
    lambda = (count * sxy - sx * sy) / denom;
    beta = sign * std::exp((sy - lambda * sx) / count);
  }
  if (!std::isfinite(beta) || !std::isfinite(lambda)) {
    beta = y.mean();
    lambda = 0.0;
  }
  auto v = [](double b, double l) { return Vector{{b, l}}; };
  return {v(beta, lambda),        v(-beta, lambda),        v(beta, -lambda),       v(-beta, -lambda),
          v(beta, 0.5 * lambda), v(beta, 2.0 * lambda), v(y.mean(), 0.0), v(-y.mean(), 0.5 * lambda)};
}

// Linear least squares of y on (1, cos(h w x), sin(h w x)) for fixed w.
Vector trig_linear_part(const Vector& x, const Vector& y, int harmonics, double omega, double* sse) {
  const Eigen::Index p = 2 * harmonics + 1;
  Matrix design(x.size(), p);
  design.col(0).setOnes();
  for (int h = 1; h <= harmonics; ++h) {
    design.col(h) = (h * omega * x.array()).cos().matrix();
    design.col(harmonics + h) = (h * omega * x.array()).sin().matrix();
  }
  const Matrix gram = design.transpose() * design;
  const Vector coef = pinv(SymMatrix(gram)).mat() * (design.transpose() * y);
  if (sse) *sse = (y - design * coef).squaredNorm();
  return coef;
}

std::vector<Vector> trig_starts(const Vector& x, const Vector& y, int harmonics, int wanted) {
  constexpr int kGrid = 256;
  const double sd = sample_sd(x);
  const double lo = std::log(0.05 / sd);
  const double hi = std::log(20.0 / sd);
  std::vector<double> omega(kGrid), sse(kGrid);
  for (int g = 0; g < kGrid; ++g) {
    omega[g] = std::exp(lo + (hi - lo) * g / (kGrid - 1));
    trig_linear_part(x, y, harmonics, omega[g], &sse[g]);
  }
  std::vector<int> minima;
  for (int g = 0; g < kGrid; ++g) {
    const bool left = g == 0 || sse[g] <= sse[g - 1];
    const bool right = g == kGrid - 1 || sse[g] <= sse[g + 1];
    if (left && right) minima.push_back(g);
  }
  std::sort(minima.begin(), minima.end(), [&](int a, int b) { return sse[a] < sse[b]; });
  if (static_cast<int>(minima.size()) > wanted) minima.resize(wanted);

  std::vector<Vector> starts;
  for (int g : minima) {
    Vector t(2 * harmonics + 2);
    t.head(2 * harmonics + 1) = trig_linear_part(x, y, harmonics, omega[g], nullptr);
    t(2 * harmonics + 1) = omega[g];
    starts.push_back(t);
  }
  return starts;
}

// Best (beta, a) for y ~ beta |x + a| over a grid of kink positions.
std::pair<double, double> naive_profile_start(const Vector& x, const Vector& y) {
  const double mean = x.mean();
  const double sd = sample_sd(x);
  double best_sse = std::numeric_limits<double>::infinity();
  std::pair<double, double> best{0.0, -mean};
  for (int g = 0; g < 65; ++g) {
    const double a = -(mean + sd * (-3.0 + 6.0 * g / 64.0));
    const Vector v = (x.array() + a).abs().matrix();
    const double vv = v.squaredNorm();
    if (vv <= 0.0) continue;
    const double beta = v.dot(y) / vv;
    const double sse = (y - beta * v).squaredNorm();
    if (sse < best_sse) {
      best_sse = sse;
      best = {beta, a};
    }
  }
  return best;
}

std::vector<Vector> abs_starts(const Vector& x, const Vector& y) {
  const auto [beta_n, a_n] = naive_profile_start(x, y);
  const double sd = sample_sd(x);
  std::vector<Vector> starts;
  for (double sign : {1.0, -1.0}) {
    for (double scale : {1.0, 0.5, 2.0, 4.0}) {
      const double k = scale / sd;
      starts.push_back(Vector{{beta_n / k, k, sign * k * a_n}});
    }
  }
  return starts;
}

std::vector<Vector> with_user_start(const std::optional<Vector>& initial, std::vector<Vector> starts, int wanted) {
  std::vector<Vector> out;
  if (initial) {
    out.push_back(*initial);
    Vector flipped = *initial;
    flipped(0) = -flipped(0);
    out.push_back(flipped);
  }
  for (auto& s : starts) out.push_back(std::move(s));
  if (static_cast<int>(out.size()) > wanted) out.resize(wanted);
  return out;
}

}  // namespace

Matrix build_regressors(Family family, int degree, const Matrix& z, const Matrix& x) {
  const Eigen::Index n = x.rows();
  switch (family) {
    case Family::linear_mv: {
      Matrix r(n, z.cols() + x.cols());
      if (z.cols() > 0) r.leftCols(z.cols()) = z;
      r.rightCols(x.cols()) = x;
      return r;
    }
    case Family::polynomial:
    case Family::quadratic: {
      if (x.cols() != 1) throw DimensionError("polynomial regressors need scalar x");
      const Eigen::Index q = family == Family::quadratic ? 0 : z.cols();
      Matrix r(n, q + degree);
      if (q > 0) r.leftCols(q) = z;
      Vector power = Vector::Ones(n);
      for (int j = 1; j <= degree; ++j) {
        power = power.cwiseProduct(x.col(0));
        r.col(q + j - 1) = power;
      }
      return r;
    }
    default:
      // The nonlinear families use x itself as the regressor for moment summaries.
      return x;
  }
}

SampleMoments sample_moments(const Dataset& data, Family family, int degree) {
  require_rows(data);
  const Eigen::Index n = data.n();
  if (n < 2) throw InsufficientData("sample_moments: need at least 2 observations");
  SampleMoments m;
  m.n = n;
  const Matrix r = build_regressors(family, degree, data.z, data.x);
  const Matrix rc = column_means_removed(r, m.r_mean);
  const Matrix yc = column_means_removed(data.y, m.y_mean);
  const Matrix xc = column_means_removed(data.x, m.mu_hat);
  const double dn = static_cast<double>(n);
  m.s_rr = SymMatrix(rc.transpose() * rc / dn).mat();
  m.s_ry = rc.transpose() * yc / dn;
  const Matrix cross = SymMatrix(xc.transpose() * xc).mat();
  m.s_xx = cross / dn;
  m.sigma_x_hat = cross / (dn - 1.0);
  return m;
}

FittedModel ols_fit(const Dataset& data, Family family, int degree, const OlsOptions& opts) {
  if (is_nonlinear_family(family)) throw InvalidInput("ols_fit: use nls_fit for " + to_string(family));
  if (family == Family::linear_mv) degree = 1;
  if (family == Family::quadratic && degree != 2) throw InvalidInput("ols_fit: the quadratic family has degree 2");
  if (family == Family::polynomial && (degree < 1 || degree > opts.max_degree)) {
    throw InvalidInput(fmt::format("ols_fit: polynomial degree must be in [1, {}]", opts.max_degree));
  }
  require_rows(data);
  const Eigen::Index dim_r =
      (family == Family::quadratic ? 0 : data.z.cols()) + (family == Family::linear_mv ? data.x.cols() : degree);
  if (data.n() < dim_r + 1 || data.n() < 2) {
    throw InsufficientData(fmt::format("ols_fit: n = {} but at least {} observations are needed", data.n(),
                                       std::max<Eigen::Index>(dim_r + 1, 2)));
  }

  FittedModel fit;
  fit.family = family;
  fit.degree = degree;
  fit.q = family == Family::quadratic ? 0 : data.z.cols();
  fit.n = data.n();
  fit.moments = sample_moments(data, family, degree);

  const SymMatrix s_rr(fit.moments.s_rr);
  fit.condition_number = condition_number(s_rr);
  if (!(fit.condition_number <= opts.condition_warning)) {
    fit.warnings.push_back(fmt::format("S_rr condition number {:.3e} exceeds {:.0e}", fit.condition_number,
                                       opts.condition_warning));
  }
  fit.slopes = pinv(s_rr).mat() * fit.moments.s_ry;
  fit.intercept = fit.moments.y_mean - fit.slopes.transpose() * fit.moments.r_mean;
  fit.sigma_u = residual_covariance(data, fit);
  fit.objective = fit.sigma_u.mat().trace() * static_cast<double>(fit.n);
  return fit;
}

Vector evaluate(const FittedModel& fit, const Vector& z, const Vector& x) {
  if (!is_nonlinear_family(fit.family)) {
    if (z.size() != fit.q) throw DimensionError(fmt::format("predict: z has {} entries, fit expects {}", z.size(), fit.q));
    const Eigen::Index px = fit.slopes.rows() - fit.q;
    const Eigen::Index want_x = fit.family == Family::linear_mv ? px : 1;
    if (x.size() != want_x) {
      throw DimensionError(fmt::format("predict: x has {} entries, fit expects {}", x.size(), want_x));
    }
    Vector r(fit.slopes.rows());
    r.head(fit.q) = z;
    if (fit.family == Family::linear_mv) {
      r.tail(px) = x;
    } else {
      double power = 1.0;
      for (Eigen::Index j = 0; j < px; ++j) r(fit.q + j) = power *= x(0);
    }
    return fit.intercept + fit.slopes.transpose() * r;
  }

  if (z.size() != 0) throw DimensionError("predict: this family has no z covariate");
  if (x.size() != 1) throw DimensionError("predict: this family needs scalar x");
  const Vector& t = fit.theta;
  const double x0 = x(0);
  double value = 0.0;
  switch (fit.family) {
    case Family::exponential:
      value = t(0) * std::exp(t(1) * x0);
      break;
    case Family::trigonometric: {
      const int harmonics = fit.harmonics;
      const double omega = t(2 * harmonics + 1);
      value = t(0);
      for (int h = 1; h <= harmonics; ++h) {
        value += t(h) * std::cos(h * omega * x0) + t(harmonics + h) * std::sin(h * omega * x0);
      }
      break;
    }
    case Family::absolute_value:
      value = t(0) * abs_F(t(1) * x0 + t(2));
      break;
    default:
      break;
  }
  return Vector::Constant(1, value);
}

SymMatrix residual_covariance(const Dataset& data, const FittedModel& fit) {
  require_rows(data);
  const Eigen::Index n = data.n();
  if (n < 1) throw InsufficientData("residual_covariance: empty dataset");
  Matrix u(n, data.y.cols());
  if (!is_nonlinear_family(fit.family)) {
    const Matrix r = build_regressors(fit.family, fit.degree, data.z, data.x);
    u = (data.y - r * fit.slopes).rowwise() - fit.intercept.transpose();
  } else {
    const Vector none;
    for (Eigen::Index i = 0; i < n; ++i) {
      u(i, 0) = data.y(i, 0) - evaluate(fit, none, data.x.row(i).transpose())(0);
    }
  }
  return SymMatrix(u.transpose() * u / static_cast<double>(n));
}

FittedModel nls_fit(const Dataset& data, Family family, const NlsOptions& opts) {
  if (!is_nonlinear_family(family)) throw InvalidInput("nls_fit: use ols_fit for " + to_string(family));
  require_rows(data);
  if (data.z.cols() != 0) throw DimensionError("nls_fit: this family has no z covariate");
  const Vector x = scalar_column(data.x, "x");
  const Vector y = scalar_column(data.y, "y");
  const int harmonics = family == Family::trigonometric ? opts.harmonics : 0;
  if (family == Family::trigonometric && harmonics < 1) throw InvalidInput("nls_fit: harmonics must be >= 1");
  const int p = parameter_count(family, harmonics);
  if (data.n() < p + 1) {
    throw InsufficientData(fmt::format("nls_fit: n = {} but at least {} observations are needed", data.n(), p + 1));
  }
  if (opts.initial && opts.initial->size() != p) {
    throw DimensionError(fmt::format("nls_fit: initial point has {} entries, expected {}", opts.initial->size(), p));
  }

  std::vector<Vector> starts;
  switch (family) {
    case Family::exponential: starts = exponential_starts(x, y); break;
    case Family::trigonometric: starts = trig_starts(x, y, harmonics, opts.starts); break;
    default: starts = abs_starts(x, y); break;
  }
  starts = with_user_start(opts.initial, std::move(starts), std::max(1, opts.starts));

  const ResidualFn fn = residual_function(family, harmonics, x, y);
  OptimizeResult best;
  best.objective = std::numeric_limits<double>::infinity();
  int converged = 0;
  double best_failed = std::numeric_limits<double>::infinity();
  for (const Vector& s : starts) {
    const OptimizeResult res = levenberg_marquardt(fn, s, opts.optimizer);
    if (!res.converged || !std::isfinite(res.objective) || !res.params.allFinite()) {
      if (std::isfinite(res.objective)) best_failed = std::min(best_failed, res.objective);
      continue;
    }
    ++converged;
    if (res.objective < best.objective) best = res;
  }
  if (converged == 0) {
    throw NonConvergence(fmt::format("nls_fit ({}): none of {} starts converged; best objective {:.6g}",
                                     to_string(family), starts.size(), best_failed));
  }

  FittedModel fit;
  fit.family = family;
  fit.harmonics = harmonics;
  fit.degree = 0;
  fit.q = 0;
  fit.n = data.n();
  fit.theta = best.params;
  if (family == Family::absolute_value && fit.theta(1) < 0.0) {
    // F is even, so (beta, k, b) and (beta, -k, -b) give the same function.
    fit.theta(1) = -fit.theta(1);
    fit.theta(2) = -fit.theta(2);
  }
  if (family == Family::trigonometric && fit.theta(2 * harmonics + 1) < 0.0) {
    // cos is even and sin odd in omega
    fit.theta(2 * harmonics + 1) = -fit.theta(2 * harmonics + 1);
    fit.theta.segment(harmonics + 1, harmonics) *= -1.0;
  }
  fit.objective = best.objective;
  fit.converged = true;
  fit.iterations = best.iterations;
  fit.starts_converged = converged;
  fit.moments = sample_moments(data, family);
  fit.intercept = Vector::Zero(1);
  fit.slopes = Matrix::Zero(0, 1);
  fit.sigma_u = SymMatrix(Matrix::Constant(1, 1, best.objective / static_cast<double>(fit.n)));
  return fit;
}

NaiveAbsFit naive_ols_abs(const Dataset& data, const NlsOptions& opts) {
  require_rows(data);
  const Vector x = scalar_column(data.x, "x");
  const Vector y = scalar_column(data.y, "y");
  if (data.n() < 3) throw InsufficientData("naive_ols_abs: need at least 3 observations");

  const auto objective = [&x, &y](const Vector& t) { return (y.array() - t(0) * (x.array() + t(1)).abs()).square().sum(); };
  const auto [beta_n, a_n] = naive_profile_start(x, y);
  const double sd = sample_sd(x);
  std::vector<Vector> starts = {Vector{{beta_n, a_n}},         Vector{{beta_n, a_n + sd}}, Vector{{beta_n, a_n - sd}},
                                Vector{{-beta_n, a_n}},        Vector{{beta_n, -a_n}},     Vector{{-beta_n, -a_n}},
                                Vector{{2.0 * beta_n, a_n}},   Vector{{0.5 * beta_n, a_n}}};
  starts = with_user_start(opts.initial, std::move(starts), std::max(1, opts.starts));

  NaiveAbsFit out;
  out.objective = std::numeric_limits<double>::infinity();
  for (const Vector& s : starts) {
    if (s.size() != 2) throw DimensionError("naive_ols_abs: initial point must have 2 entries");
    const Vector step{{0.1 * std::max(std::abs(s(0)), 1.0), 0.1 * sd}};
    const OptimizeResult res = nelder_mead(objective, s, step, opts.optimizer);
    if (!res.converged || !std::isfinite(res.objective)) continue;
    ++out.starts_converged;
    if (res.objective < out.objective) {
      out.beta = res.params(0);
      out.a = res.params(1);
      out.objective = res.objective;
      out.converged = true;
    }
  }
  if (!out.converged) throw NonConvergence("naive_ols_abs: no start converged");
  return out;
}

}  // namespace eiv
