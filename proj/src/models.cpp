#include "eivpred/models.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "eivpred/errors.hpp"
#include "eivpred/rng.hpp"

namespace eiv {

std::string to_string(Family f) {
  switch (f) {
    case Family::linear_mv: return "linear-mv";
    case Family::polynomial: return "polynomial";
    case Family::quadratic: return "quadratic";
    case Family::exponential: return "exponential";
    case Family::trigonometric: return "trigonometric";
    case Family::absolute_value: return "absolute-value";
  }
  return "unknown";
}

Family family_from_string(const std::string& s) {
  for (Family f : {Family::linear_mv, Family::polynomial, Family::quadratic, Family::exponential,
                   Family::trigonometric, Family::absolute_value}) {
    if (to_string(f) == s) return f;
  }
  throw SpecError("unknown model family '" + s + "'");
}

bool is_scalar_family(Family f) { return f != Family::linear_mv; }

bool is_nonlinear_family(Family f) {
  return f == Family::exponential || f == Family::trigonometric || f == Family::absolute_value;
}

std::string to_string(ZDistribution::Kind k) {
  switch (k) {
    case ZDistribution::Kind::gaussian: return "gaussian";
    case ZDistribution::Kind::uniform: return "uniform";
    case ZDistribution::Kind::two_point_mixture: return "two-point-mixture";
  }
  return "unknown";
}

Matrix ZDistribution::covariance() const {
  switch (kind) {
    case Kind::gaussian: return cov;
    case Kind::uniform: return Matrix((half_width.array().square() / 3.0).matrix().asDiagonal());
    case Kind::two_point_mixture: return cov + shift * shift.transpose();
  }
  return cov;
}

double ModelSpec::reliability() const {
  if (m() != 1) throw InvalidInput("reliability ratio is defined for scalar xi only");
  const double sx2 = xi_cov(0, 0) + errors.sigma_delta(0, 0);
  if (!(sx2 > 0.0)) throw SingularCovariance("sigma_x^2 is zero");
  return xi_cov(0, 0) / sx2;
}

namespace {

bool same_shape(const Matrix& a, Eigen::Index r, Eigen::Index c) { return a.rows() == r && a.cols() == c; }

bool psd_matrix(const Matrix& a) {
  if (a.rows() == 0) return true;
  if (!a.allFinite()) return false;
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + a.cwiseAbs().maxCoeff())) return false;
  return is_psd(SymMatrix(a));
}

bool nonsingular_psd(const Matrix& a) {
  if (!psd_matrix(a)) return false;
  const SymEigen es = sym_eigen(SymMatrix(a));
  return es.values.minCoeff() > default_rank_tol(a.rows()) * 16.0 * es.values.cwiseAbs().maxCoeff();
}

bool is_zero(const Matrix& a) { return a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0; }

struct Violations {
  std::vector<std::string> structural;  // make sampling impossible
  std::vector<std::string> modelling;   // break the identifiability assumptions
};

Violations collect(const ModelSpec& spec) {
  Violations v;
  auto bad = [&v](std::string msg) { v.structural.push_back(std::move(msg)); };
  auto weak = [&v](std::string msg) { v.modelling.push_back(std::move(msg)); };

  const Eigen::Index d = spec.d();
  const Eigen::Index q = spec.q();
  const Eigen::Index m = spec.m();
  const ErrorStructure& err = spec.errors;

  if (m < 1) bad("latent covariate dimension m must be >= 1");
  if (d < 1) bad("response dimension d must be >= 1 (sigma_e sets it)");
  if (!same_shape(spec.xi_cov, m, m)) bad("xi_cov must be m x m");
  if (!same_shape(err.sigma_e, d, d)) bad("sigma_e must be d x d");
  if (!same_shape(err.sigma_eps, d, d)) bad("sigma_eps must be d x d");
  if (!same_shape(err.sigma_delta, m, m)) bad("sigma_delta must be m x m");
  if (!same_shape(err.sigma_eps_delta, d, m)) bad("sigma_eps_delta must be d x m");
  if (!v.structural.empty()) return v;

  if (!spec.xi_mean.allFinite()) bad("xi_mean has non-finite entries");
  if (!psd_matrix(spec.xi_cov)) bad("xi_cov is not PSD");
  if (!psd_matrix(err.sigma_e)) bad("sigma_e is not PSD");
  {
    Matrix stacked(d + m, d + m);
    stacked << err.sigma_eps, err.sigma_eps_delta, err.sigma_eps_delta.transpose(), err.sigma_delta;
    if (!psd_matrix(stacked)) bad("error covariance not PSD: stacked (eps, delta) covariance is indefinite");
  }

  const ZDistribution& z = spec.z;
  switch (z.kind) {
    case ZDistribution::Kind::gaussian:
      if (!same_shape(z.cov, q, q)) bad("z.cov must be q x q");
      else if (!psd_matrix(z.cov)) bad("z.cov is not PSD");
      break;
    case ZDistribution::Kind::uniform:
      if (z.half_width.size() != q) bad("z.half_width must have length q");
      else if (q > 0 && (z.half_width.array() < 0.0).any()) bad("z.half_width must be non-negative");
      break;
    case ZDistribution::Kind::two_point_mixture:
      if (!same_shape(z.cov, q, q) || z.shift.size() != q) bad("mixture z needs q x q cov and length-q shift");
      else if (!psd_matrix(z.cov)) bad("z.cov is not PSD");
      break;
  }
  if (!v.structural.empty()) return v;
  if (q > 0 && !nonsingular_psd(z.covariance())) weak("Sigma_z is singular");
  if (!nonsingular_psd(spec.sigma_x())) weak("Sigma_x = Sigma_xi + Sigma_delta is singular");

  const bool no_eps = is_zero(err.sigma_eps) && is_zero(err.sigma_eps_delta);
  switch (spec.family) {
    case Family::linear_mv: {
      if (!std::holds_alternative<LinearParams>(spec.params)) { bad("linear-mv family needs linear parameters"); break; }
      const auto& p = spec.as<LinearParams>();
      if (p.b.size() != d) bad("b must have length d");
      if (!same_shape(p.C, q, d)) bad("C must be q x d");
      if (!same_shape(p.B, m, d)) bad("B must be m x d");
      break;
    }
    case Family::polynomial:
    case Family::quadratic: {
      if (!std::holds_alternative<PolynomialParams>(spec.params)) { bad("polynomial family needs polynomial parameters"); break; }
      const auto& p = spec.as<PolynomialParams>();
      if (d != 1 || m != 1) bad("polynomial family needs scalar y and xi");
      if (p.c.size() != q) bad("c must have length q");
      if (p.degree() < 2) bad("polynomial degree k must be >= 2");
      if (spec.family == Family::quadratic) {
        if (p.degree() != 2) bad("quadratic family needs degree 2");
        if (q != 0) bad("quadratic family has no z covariate");
        if (!no_eps) bad("quadratic family has no response error eps");
      }
      break;
    }
    case Family::exponential:
    case Family::trigonometric:
    case Family::absolute_value: {
      if (d != 1 || m != 1) bad(to_string(spec.family) + " family needs scalar y and xi");
      if (q != 0) bad(to_string(spec.family) + " family has no z covariate");
      if (!no_eps) bad(to_string(spec.family) + " family has no response error eps");
      if (spec.family == Family::exponential && !std::holds_alternative<ExponentialParams>(spec.params)) {
        bad("exponential family needs exponential parameters");
      }
      if (spec.family == Family::trigonometric) {
        if (!std::holds_alternative<TrigParams>(spec.params)) { bad("trigonometric family needs trig parameters"); break; }
        const auto& p = spec.as<TrigParams>();
        if (p.a.size() < 1 || p.a.size() != p.b.size()) bad("trig harmonics: a and b need equal length >= 1");
        if (!(p.omega > 0.0)) bad("trig frequency omega must be positive");
      }
      if (spec.family == Family::absolute_value) {
        if (!std::holds_alternative<AbsParams>(spec.params)) { bad("absolute-value family needs abs parameters"); break; }
        if (d == 1 && m == 1 && !(spec.xi_cov(0, 0) > 0.0 && err.sigma_delta(0, 0) > 0.0)) {
          weak("absolute-value family needs positive sigma_xi^2 and sigma_delta^2");
        }
      }
      break;
    }
  }

  if (spec.k0) {
    const double k0 = *spec.k0;
    if (!(k0 > 0.0 && k0 <= 0.5)) weak("k0 must lie in (0, 1/2]");
    if (m != 1) {
      weak("k0 applies to scalar-xi families only");
    } else if (v.structural.empty()) {
      const double sx2 = spec.xi_cov(0, 0) + err.sigma_delta(0, 0);
      if (sx2 > 0.0 && spec.xi_cov(0, 0) / sx2 < k0) weak("reliability ratio K is below the stated lower bound k0");
    }
  }
  return v;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

Matrix factor_or_throw(const Matrix& a) {
  if (a.rows() == 0) return a;
  return cholesky(SymMatrix(a));
}

}  // namespace

std::vector<std::string> validate(const ModelSpec& spec) {
  Violations v = collect(spec);
  v.structural.insert(v.structural.end(), v.modelling.begin(), v.modelling.end());
  return v.structural;
}

void require_valid(const ModelSpec& spec) {
  const auto violations = validate(spec);
  if (!violations.empty()) throw SpecError("invalid model spec: " + join(violations));
}

Vector regression_function(const ModelSpec& spec, const Vector& z, const Vector& xi) {
  switch (spec.family) {
    case Family::linear_mv: {
      const auto& p = spec.as<LinearParams>();
      Vector out = p.b + p.B.transpose() * xi;
      if (p.C.rows() > 0) out += p.C.transpose() * z;
      return out;
    }
    case Family::polynomial:
    case Family::quadratic: {
      const auto& p = spec.as<PolynomialParams>();
      double value = p.beta0 + (p.c.size() > 0 ? p.c.dot(z) : 0.0);
      double power = 1.0;
      for (int j = 0; j < p.degree(); ++j) {
        power *= xi(0);
        value += p.beta(j) * power;
      }
      return Vector::Constant(1, value);
    }
    case Family::exponential: {
      const auto& p = spec.as<ExponentialParams>();
      return Vector::Constant(1, p.beta * std::exp(p.lambda * xi(0)));
    }
    case Family::trigonometric: {
      const auto& p = spec.as<TrigParams>();
      double value = p.a0;
      for (int h = 1; h <= p.harmonics(); ++h) {
        const double arg = h * p.omega * xi(0);
        value += p.a(h - 1) * std::cos(arg) + p.b(h - 1) * std::sin(arg);
      }
      return Vector::Constant(1, value);
    }
    case Family::absolute_value: {
      const auto& p = spec.as<AbsParams>();
      return Vector::Constant(1, p.beta * std::abs(xi(0) + p.a));
    }
  }
  throw Unsupported("regression_function: unknown family");
}

Sampler::Sampler(ModelSpec spec) : spec_(std::move(spec)) {
  const Violations v = collect(spec_);
  if (!v.structural.empty()) throw SpecError("invalid model spec: " + join(v.structural));
  xi_chol_ = factor_or_throw(spec_.xi_cov);
  e_chol_ = factor_or_throw(spec_.errors.sigma_e);
  const Eigen::Index d = spec_.d();
  const Eigen::Index m = spec_.m();
  Matrix stacked(d + m, d + m);
  stacked << spec_.errors.sigma_eps, spec_.errors.sigma_eps_delta, spec_.errors.sigma_eps_delta.transpose(),
      spec_.errors.sigma_delta;
  err_chol_ = factor_or_throw(stacked);
  if (spec_.q() > 0 && spec_.z.kind != ZDistribution::Kind::uniform) z_chol_ = factor_or_throw(spec_.z.cov);
}

Sampler::Draw Sampler::draw(std::uint64_t seed, std::uint64_t replication, std::uint64_t index) const {
  Stream rng(seed, replication, index);
  const Eigen::Index d = spec_.d();
  const Eigen::Index q = spec_.q();
  const Eigen::Index m = spec_.m();
  auto normals = [&rng](Eigen::Index k) {
    Vector g(k);
    for (Eigen::Index i = 0; i < k; ++i) g(i) = rng.normal();
    return g;
  };

  Draw out;
  const ZDistribution& zd = spec_.z;
  switch (zd.kind) {
    case ZDistribution::Kind::gaussian:
      out.z = zd.mean + z_chol_ * normals(q);
      break;
    case ZDistribution::Kind::uniform: {
      out.z.resize(q);
      for (Eigen::Index i = 0; i < q; ++i) out.z(i) = zd.mean(i) + zd.half_width(i) * (2.0 * rng.uniform() - 1.0);
      break;
    }
    case ZDistribution::Kind::two_point_mixture: {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      out.z = zd.mean + sign * zd.shift + z_chol_ * normals(q);
      break;
    }
  }
  out.xi = spec_.xi_mean + xi_chol_ * normals(m);
  out.e = e_chol_ * normals(d);
  const Vector joint = err_chol_ * normals(d + m);
  out.eps = joint.head(d);
  out.delta = joint.tail(m);
  out.x = out.xi + out.delta;
  out.y = regression_function(spec_, out.z, out.xi) + out.e + out.eps;
  return out;
}

Dataset Sampler::sample(std::int64_t n, std::uint64_t seed, std::uint64_t replication, bool keep_hidden) const {
  if (n < 1) throw InvalidInput("sample size n must be >= 1");
  const Eigen::Index d = spec_.d();
  const Eigen::Index q = spec_.q();
  const Eigen::Index m = spec_.m();
  Dataset data;
  data.seed = seed;
  data.y.resize(n, d);
  data.z.resize(n, q);
  data.x.resize(n, m);
  HiddenDraws hidden;
  if (keep_hidden) {
    hidden.xi.resize(n, m);
    hidden.delta.resize(n, m);
    hidden.e.resize(n, d);
    hidden.eps.resize(n, d);
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const Draw dr = draw(seed, replication, static_cast<std::uint64_t>(i));
    data.y.row(i) = dr.y.transpose();
    if (q > 0) data.z.row(i) = dr.z.transpose();
    data.x.row(i) = dr.x.transpose();
    if (keep_hidden) {
      hidden.xi.row(i) = dr.xi.transpose();
      hidden.delta.row(i) = dr.delta.transpose();
      hidden.e.row(i) = dr.e.transpose();
      hidden.eps.row(i) = dr.eps.transpose();
    }
  }
  if (keep_hidden) data.hidden = std::move(hidden);
  return data;
}

Subject Sampler::new_subject(std::uint64_t seed, std::uint64_t replication, std::uint64_t index) const {
  // Subjects live in their own stream family so they never coincide with a
  // training row of the same replication.
  constexpr std::uint64_t kSubjectDomain = 0x5b1ec7d0a11e5eedULL;
  const Draw dr = draw(derive_seed(seed, kSubjectDomain), replication, index);
  Subject s;
  s.z0 = dr.z;
  s.x0 = dr.x;
  s.y0 = dr.y;
  s.xi0 = dr.xi;
  s.eta0 = regression_function(spec_, dr.z, dr.xi);
  return s;
}

Dataset sample(const ModelSpec& spec, std::int64_t n, std::uint64_t seed) { return Sampler(spec).sample(n, seed); }

Subject new_subject(const ModelSpec& spec, std::uint64_t seed) { return Sampler(spec).new_subject(seed); }

}  // namespace eiv
