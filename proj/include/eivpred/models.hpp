#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "eivpred/linalg.hpp"

namespace eiv {

enum class Family { linear_mv, polynomial, quadratic, exponential, trigonometric, absolute_value };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

/// Families whose response and latent covariate are scalar.
bool is_scalar_family(Family f);

/// Families fitted by nonlinear least squares rather than OLS.
bool is_nonlinear_family(Family f);

/// Distribution of the exactly observed covariate z.
struct ZDistribution {
  enum class Kind { gaussian, uniform, two_point_mixture };

  Kind kind = Kind::gaussian;
  Vector mean;        // q
  Matrix cov;         // gaussian: covariance; mixture: within-component covariance
  Vector half_width;  // uniform: component i ~ U(mean_i - h_i, mean_i + h_i)
  Vector shift;       // mixture: components centred at mean +- shift

  Eigen::Index dim() const { return mean.size(); }
  Matrix covariance() const;
};

std::string to_string(ZDistribution::Kind k);

/// Covariances of the equation error e, the response error eps, the covariate
/// error delta, and the cross-covariance E[eps delta^T].
struct ErrorStructure {
  Matrix sigma_e;          // d x d
  Matrix sigma_eps;        // d x d
  Matrix sigma_delta;      // m x m
  Matrix sigma_eps_delta;  // d x m
};

/// y = b + C^T z + B^T xi + e + eps
struct LinearParams {
  Vector b;  // d
  Matrix C;  // q x d
  Matrix B;  // m x d
};

/// y = c^T z + beta0 + sum_j beta_j xi^j + e + eps  (quadratic: k = 2, no z, no eps)
struct PolynomialParams {
  Vector c;  // q
  double beta0 = 0.0;
  Vector beta;  // k, beta(j - 1) multiplies xi^j
  int degree() const { return static_cast<int>(beta.size()); }
};

/// y = beta exp(lambda xi) + e
struct ExponentialParams {
  double beta = 1.0;
  double lambda = 0.0;
};

/// y = a0 + sum_h (a_h cos(h w xi) + b_h sin(h w xi)) + e
struct TrigParams {
  double a0 = 0.0;
  Vector a;  // harmonics 1..H
  Vector b;
  double omega = 1.0;
  int harmonics() const { return static_cast<int>(a.size()); }
};

/// y = beta |xi + a| + e
struct AbsParams {
  double beta = 1.0;
  double a = 0.0;
};

using LatentParams = std::variant<LinearParams, PolynomialParams, ExponentialParams, TrigParams, AbsParams>;

struct ModelSpec {
  Family family = Family::linear_mv;
  LatentParams params;
  Vector xi_mean;  // mu, m
  Matrix xi_cov;   // Sigma_xi, m x m
  ZDistribution z;
  ErrorStructure errors;
  std::optional<double> k0;  // optional lower bound on the reliability ratio

  Eigen::Index d() const { return errors.sigma_e.rows(); }
  Eigen::Index q() const { return z.dim(); }
  Eigen::Index m() const { return xi_mean.size(); }

  /// Sigma_x = Sigma_xi + Sigma_delta.
  Matrix sigma_x() const { return xi_cov + errors.sigma_delta; }

  /// Reliability ratio sigma_xi^2 / sigma_x^2 (scalar families only).
  double reliability() const;

  template <class P>
  const P& as() const { return std::get<P>(params); }
};

/// Hidden draws kept alongside the observables for oracle checks.
struct HiddenDraws {
  Matrix xi;     // n x m
  Matrix delta;  // n x m
  Matrix e;      // n x d
  Matrix eps;    // n x d
};

struct Dataset {
  Matrix y;  // n x d
  Matrix z;  // n x q
  Matrix x;  // n x m
  std::optional<HiddenDraws> hidden;
  std::uint64_t seed = 0;

  Eigen::Index n() const { return y.rows(); }
};

/// A fresh subject: observables, the response, and the noiseless mean
/// eta0 = E[y0 | z0, xi0].
struct Subject {
  Vector z0;
  Vector x0;
  Vector y0;
  Vector eta0;
  Vector xi0;
};

/// Human-readable list of violated model assumptions; empty when the spec is usable.
std::vector<std::string> validate(const ModelSpec& spec);

/// Throws SpecError listing the violations when validate() is non-empty.
void require_valid(const ModelSpec& spec);

/// Regression function E[y | z, xi] of the latent model.
Vector regression_function(const ModelSpec& spec, const Vector& z, const Vector& xi);

/// Draws observations for one replication. Observation i uses the stream
/// (seed, replication, i), so any subset of rows can be regenerated alone.
class Sampler {
 public:
  explicit Sampler(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }

  Dataset sample(std::int64_t n, std::uint64_t seed, std::uint64_t replication = 0,
                 bool keep_hidden = true) const;

  /// New subject number `index` for the given seed/replication; drawn from a
  /// stream family disjoint from the training observations.
  Subject new_subject(std::uint64_t seed, std::uint64_t replication = 0, std::uint64_t index = 0) const;

 private:
  struct Draw {
    Vector z, xi, delta, e, eps, x, y;
  };
  Draw draw(std::uint64_t seed, std::uint64_t replication, std::uint64_t index) const;

  ModelSpec spec_;
  Matrix xi_chol_;
  Matrix e_chol_;
  Matrix err_chol_;  // stacked (eps, delta)
  Matrix z_chol_;
};

Dataset sample(const ModelSpec& spec, std::int64_t n, std::uint64_t seed);
Subject new_subject(const ModelSpec& spec, std::uint64_t seed);

}  // namespace eiv
