#include "eivpred/transform.hpp"

#include <cmath>
#include <vector>

#include "eivpred/errors.hpp"
#include "eivpred/special.hpp"

namespace eiv {

namespace {

struct ScalarLaw {
  double mu;
  double sxi2;
  double sdelta2;
  double sx2;
  double K;
};

ScalarLaw scalar_law(const ModelSpec& spec) {
  if (spec.m() != 1 || spec.d() != 1) throw DimensionError("scalar transform needs m = d = 1");
  ScalarLaw law;
  law.mu = spec.xi_mean(0);
  law.sxi2 = spec.xi_cov(0, 0);
  law.sdelta2 = spec.errors.sigma_delta(0, 0);
  law.sx2 = law.sxi2 + law.sdelta2;
  if (!(law.sx2 > 0.0)) throw SingularCovariance("sigma_x^2 = sigma_xi^2 + sigma_delta^2 is zero");
  law.K = law.sxi2 / law.sx2;
  return law;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

void require_family(const ModelSpec& spec, std::initializer_list<Family> allowed, const char* op) {
  for (Family f : allowed) {
    if (spec.family == f) return;
  }
  throw InvalidInput(std::string(op) + ": unsupported family " + to_string(spec.family));
}

}  // namespace

ConditionalGaussian condition_gaussian(const ModelSpec& spec) {
  const Eigen::Index d = spec.d();
  const Eigen::Index m = spec.m();
  const Matrix sx_inv = spd_inverse(spec.sigma_x(), "Sigma_x");
  const ErrorStructure& err = spec.errors;

  ConditionalGaussian cg;
  cg.coeff_xi = spec.xi_cov * sx_inv;
  cg.offset_xi = err.sigma_delta * sx_inv * spec.xi_mean;
  cg.coeff_eps = err.sigma_eps_delta * sx_inv;

  Matrix s11 = Matrix::Zero(m + d, m + d);
  s11.topLeftCorner(m, m) = spec.xi_cov;
  s11.bottomRightCorner(d, d) = err.sigma_eps;
  Matrix s12(m + d, m);
  s12 << spec.xi_cov, err.sigma_eps_delta;
  cg.v12 = s11 - s12 * sx_inv * s12.transpose();
  cg.v12 = 0.5 * (cg.v12 + cg.v12.transpose());
  return cg;
}

LinearTransformed transform_linear(const ModelSpec& spec) {
  require_family(spec, {Family::linear_mv}, "transform_linear");
  const auto& p = spec.as<LinearParams>();
  const ConditionalGaussian cg = condition_gaussian(spec);
  const Eigen::Index d = spec.d();
  const Eigen::Index m = spec.m();

  LinearTransformed out;
  out.C = p.C;
  out.b_x = p.b + p.B.transpose() * cg.offset_xi - cg.coeff_eps * spec.xi_mean;
  out.B_x = cg.coeff_xi.transpose() * p.B + cg.coeff_eps.transpose();

  // u = e + B^T gamma1 + gamma2
  Matrix mix(d, m + d);
  mix << p.B.transpose(), Matrix::Identity(d, d);
  out.sigma_u = SymMatrix(spec.errors.sigma_e + mix * cg.v12 * mix.transpose());
  return out;
}

double gaussian_central_moment(int p, double variance) {
  if (p < 0) throw InvalidInput("gaussian_central_moment: p must be >= 0");
  if (variance < 0.0) throw InvalidInput("gaussian_central_moment: variance must be >= 0");
  if (p % 2 == 1) return 0.0;
  double double_factorial = 1.0;
  for (int i = p - 1; i > 1; i -= 2) double_factorial *= i;
  return double_factorial * std::pow(variance, p / 2);
}

PolynomialTransformed transform_polynomial(const ModelSpec& spec) {
  require_family(spec, {Family::polynomial, Family::quadratic}, "transform_polynomial");
  const auto& p = spec.as<PolynomialParams>();
  const ScalarLaw law = scalar_law(spec);
  const int k = p.degree();

  PolynomialTransformed out;
  out.c = p.c;
  out.K = law.K;
  out.a = law.sdelta2 * law.mu / law.sx2;
  out.gamma_var = law.K * law.sdelta2;
  out.f = spec.errors.sigma_eps_delta(0, 0) / law.sx2;

  // coeff[s] multiplies x^s in E[y | x, z] - c^T z.
  std::vector<double> coeff(k + 1, 0.0);
  coeff[0] = p.beta0;
  for (int j = 1; j <= k; ++j) {
    const double beta_j = p.beta(j - 1);
    for (int pw = 0; pw <= j; pw += 2) {
      const double moment = gaussian_central_moment(pw, out.gamma_var);
      const double outer = beta_j * binomial(j, pw) * moment;
      const int r = j - pw;
      // (a + K x)^r = sum_s C(r, s) a^(r - s) K^s x^s
      for (int s = 0; s <= r; ++s) {
        coeff[s] += outer * binomial(r, s) * std::pow(out.a, r - s) * std::pow(out.K, s);
      }
    }
  }
  coeff[0] -= out.f * law.mu;
  coeff[1] += out.f;

  out.beta0_x = coeff[0];
  out.beta_x.resize(k);
  for (int j = 1; j <= k; ++j) out.beta_x(j - 1) = coeff[j];
  return out;
}

ExponentialTransformed transform_exponential(const ModelSpec& spec) {
  require_family(spec, {Family::exponential}, "transform_exponential");
  const auto& p = spec.as<ExponentialParams>();
  const ScalarLaw law = scalar_law(spec);
  ExponentialTransformed out;
  out.beta_x = p.beta * std::exp(p.lambda * (1.0 - law.K) * law.mu) *
               std::exp(0.5 * p.lambda * p.lambda * law.K * law.sdelta2);
  out.lambda_x = law.K * p.lambda;
  return out;
}

TrigTransformed transform_trig(const ModelSpec& spec) {
  require_family(spec, {Family::trigonometric}, "transform_trig");
  const auto& p = spec.as<TrigParams>();
  const ScalarLaw law = scalar_law(spec);
  const int harmonics = p.harmonics();
  const double gamma_var = law.K * law.sdelta2;

  // E[cos(h w xi) | x] = exp(-h^2 w^2 Var(gamma)/2) cos(h w m_x), m_x = K x + (1 - K) mu
  TrigTransformed out;
  out.a0_x = p.a0;
  out.omega_x = law.K * p.omega;
  out.a_x.resize(harmonics);
  out.b_x.resize(harmonics);
  out.damping.resize(harmonics);
  out.phase.resize(harmonics);
  for (int h = 1; h <= harmonics; ++h) {
    const double hw = h * p.omega;
    const double damp = std::exp(-0.5 * hw * hw * gamma_var);
    const double phase = hw * (1.0 - law.K) * law.mu;
    const double a = p.a(h - 1);
    const double b = p.b(h - 1);
    out.damping(h - 1) = damp;
    out.phase(h - 1) = phase;
    out.a_x(h - 1) = damp * (a * std::cos(phase) + b * std::sin(phase));
    out.b_x(h - 1) = damp * (b * std::cos(phase) - a * std::sin(phase));
  }
  return out;
}

AbsTransformed transform_abs(const ModelSpec& spec) {
  require_family(spec, {Family::absolute_value}, "transform_abs");
  const auto& p = spec.as<AbsParams>();
  const ScalarLaw law = scalar_law(spec);
  if (!(law.sxi2 > 0.0) || !(law.sdelta2 > 0.0)) {
    throw InvalidInput("transform_abs: sigma_xi^2 and sigma_delta^2 must be positive");
  }
  const double sdelta = std::sqrt(law.sdelta2);
  const double root_k = std::sqrt(law.K);
  AbsTransformed out;
  out.beta_x = p.beta * sdelta * root_k;
  out.k_x = root_k / sdelta;
  out.b_x = (p.a + (1.0 - law.K) * law.mu) / (sdelta * root_k);
  return out;
}

TransformedParams transform(const ModelSpec& spec) {
  switch (spec.family) {
    case Family::linear_mv: return {spec.family, transform_linear(spec)};
    case Family::polynomial:
    case Family::quadratic: return {spec.family, transform_polynomial(spec)};
    case Family::exponential: return {spec.family, transform_exponential(spec)};
    case Family::trigonometric: return {spec.family, transform_trig(spec)};
    case Family::absolute_value: return {spec.family, transform_abs(spec)};
  }
  throw Unsupported("transform: unknown family");
}

Vector best_predictor(const TransformedParams& tp, const Vector& z, const Vector& x) {
  switch (tp.family) {
    case Family::linear_mv: {
      const auto& p = tp.as<LinearTransformed>();
      if (x.size() != p.B_x.rows() || z.size() != p.C.rows()) throw DimensionError("best_predictor: shape mismatch");
      Vector out = p.b_x + p.B_x.transpose() * x;
      if (p.C.rows() > 0) out += p.C.transpose() * z;
      return out;
    }
    case Family::polynomial:
    case Family::quadratic: {
      const auto& p = tp.as<PolynomialTransformed>();
      if (x.size() != 1 || z.size() != p.c.size()) throw DimensionError("best_predictor: shape mismatch");
      double value = p.beta0_x + (p.c.size() > 0 ? p.c.dot(z) : 0.0);
      double power = 1.0;
      for (Eigen::Index j = 0; j < p.beta_x.size(); ++j) {
        power *= x(0);
        value += p.beta_x(j) * power;
      }
      return Vector::Constant(1, value);
    }
    case Family::exponential: {
      const auto& p = tp.as<ExponentialTransformed>();
      return Vector::Constant(1, p.beta_x * std::exp(p.lambda_x * x(0)));
    }
    case Family::trigonometric: {
      const auto& p = tp.as<TrigTransformed>();
      double value = p.a0_x;
      for (Eigen::Index h = 1; h <= p.a_x.size(); ++h) {
        const double arg = static_cast<double>(h) * p.omega_x * x(0);
        value += p.a_x(h - 1) * std::cos(arg) + p.b_x(h - 1) * std::sin(arg);
      }
      return Vector::Constant(1, value);
    }
    case Family::absolute_value: {
      const auto& p = tp.as<AbsTransformed>();
      return Vector::Constant(1, p.beta_x * abs_F(p.k_x * x(0) + p.b_x));
    }
  }
  throw Unsupported("best_predictor: unknown family");
}

double quadratic_bound_g(double x, double mu, double sigma_x2, double beta1x, double beta2x, double k0) {
  const double dev = mu * (x - mu);
  const double dev_minus = dev < 0.0 ? -dev : 0.0;
  const double bracket =
      x * x - mu * mu - sigma_x2 + 2.0 * dev_minus * (1.0 - k0) * (1.0 - k0) * (1.0 + 1.0 / k0);
  const double cross = beta1x * beta2x * (x - mu);
  return beta2x * beta2x * std::max(bracket, 0.0) + std::max(cross, 0.0);
}

QuadraticVariance transform_quadratic_variance(const ModelSpec& spec, double x, double k0) {
  if (!(k0 > 0.0 && k0 <= 0.5)) throw InvalidInput("k0 must lie in (0, 1/2]");
  require_family(spec, {Family::quadratic}, "transform_quadratic_variance");
  const auto& p = spec.as<PolynomialParams>();
  const ScalarLaw law = scalar_law(spec);
  const double beta1 = p.beta(0);
  const double beta2 = p.beta(1);
  const double sigma_e2 = spec.errors.sigma_e(0, 0);
  const double gamma_var = law.K * law.sdelta2;
  const double m_x = law.K * x + (1.0 - law.K) * law.mu;

  QuadraticVariance out;
  const double slope = beta1 + 2.0 * m_x * beta2;
  out.var_u_given_x = sigma_e2 + slope * slope * gamma_var + 2.0 * beta2 * beta2 * gamma_var * gamma_var;
  // E[(beta1 + 2 beta2 m_x)^2] with E m_x = mu, Var m_x = K^2 sigma_x^2
  const double mean_slope = beta1 + 2.0 * beta2 * law.mu;
  const double slope_sq = mean_slope * mean_slope + 4.0 * beta2 * beta2 * law.K * law.K * law.sx2;
  out.m_u2 = sigma_e2 + slope_sq * gamma_var + 2.0 * beta2 * beta2 * gamma_var * gamma_var;

  const PolynomialTransformed tp = transform_polynomial(spec);
  out.G = quadratic_bound_g(x, law.mu, law.sx2, tp.beta_x(0), tp.beta_x(1), k0);
  out.bound = out.m_u2 + 4.0 * (1.0 / k0 - 1.0) * law.sx2 * out.G;
  return out;
}

}  // namespace eiv
