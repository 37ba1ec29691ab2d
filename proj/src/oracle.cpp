#include "eivpred/oracle.hpp"

#include <map>
#include <memory>
#include <mutex>

#include "eivpred/errors.hpp"

namespace eiv {

namespace {

QuadratureRule golub_welsch(const Vector& off_diagonal, double total_mass) {
  const Eigen::Index n = off_diagonal.size() + 1;
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(Vector::Zero(n), off_diagonal, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw InvalidMatrix("Golub-Welsch eigensolver failed");
  QuadratureRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights = total_mass * es.eigenvectors().row(0).transpose().array().square();
  return rule;
}

// Law of xi given x: mean mu + Sigma_xi Sigma_x^-1 (x - mu), covariance
// Sigma_xi - Sigma_xi Sigma_x^-1 Sigma_xi, plus E[eps | x].
struct LatentGivenX {
  Vector mean;
  Matrix factor;  // lower-triangular root of the conditional covariance
  Vector eps_mean;
};

LatentGivenX latent_given_x(const ModelSpec& spec, const Vector& x) {
  if (x.size() != spec.m()) throw DimensionError("oracle: x has wrong dimension");
  const Matrix sx_inv = spd_inverse(spec.sigma_x(), "Sigma_x");
  const Vector dev = x - spec.xi_mean;
  LatentGivenX law;
  law.mean = spec.xi_mean + spec.xi_cov * (sx_inv * dev);
  law.factor = cholesky(SymMatrix(spec.xi_cov - spec.xi_cov * sx_inv * spec.xi_cov));
  law.eps_mean = spec.errors.sigma_eps_delta * (sx_inv * dev);
  return law;
}

// Calls visit(xi, weight) over the product Gauss-Hermite grid for N(mean, L L^T).
template <class Visit>
void product_grid(const LatentGivenX& law, int nodes, Visit&& visit) {
  const Eigen::Index m = law.mean.size();
  if (m > 3) throw Unsupported("oracle: product quadrature supports m <= 3");
  const QuadratureRule& rule = hermite_rule(nodes);
  std::vector<int> idx(m, 0);
  Vector t(m);
  while (true) {
    double w = 1.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      t(j) = rule.nodes(idx[j]);
      w *= rule.weights(idx[j]);
    }
    visit(Vector(law.mean + law.factor * t), w);
    Eigen::Index j = 0;
    while (j < m && ++idx[j] == nodes) idx[j++] = 0;
    if (j == m) break;
  }
}

void require_oracle_family(const ModelSpec& spec) {
  const auto violations = validate(spec);
  if (!violations.empty()) throw SpecError("oracle: invalid spec: " + violations.front());
}

}  // namespace

QuadratureRule gauss_hermite(int count) {
  if (count < 1) throw InvalidInput("gauss_hermite: count must be >= 1");
  Vector off(count - 1);
  for (int k = 1; k < count; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
  return golub_welsch(off, 1.0);
}

QuadratureRule gauss_legendre(int count) {
  if (count < 1) throw InvalidInput("gauss_legendre: count must be >= 1");
  Vector off(count - 1);
  for (int k = 1; k < count; ++k) off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  return golub_welsch(off, 2.0);
}

const QuadratureRule& hermite_rule(int count) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[count];
  if (!slot) slot = std::make_unique<QuadratureRule>(gauss_hermite(count));
  return *slot;
}

Vector conditional_expectation(const ModelSpec& spec, const Vector& z, const Vector& x, int nodes) {
  if (nodes < 8) throw InvalidInput("conditional_expectation: nodes must be >= 8");
  require_oracle_family(spec);
  if (z.size() != spec.q()) throw DimensionError("oracle: z has wrong dimension");
  const LatentGivenX law = latent_given_x(spec, x);

  if (spec.family == Family::absolute_value) {
    const auto& p = spec.as<AbsParams>();
    const double centre = law.mean(0) + p.a;
    const double scale = law.factor(0, 0);
    double value;
    if (scale == 0.0) {
      value = p.beta * std::abs(centre);
    } else {
      value = p.beta * normal_expectation_kinked([&](double t) { return std::abs(centre + scale * t); },
                                                 -centre / scale);
    }
    return Vector::Constant(1, value) + law.eps_mean;
  }

  Vector total = Vector::Zero(spec.d());
  product_grid(law, nodes, [&](const Vector& xi, double w) { total += w * regression_function(spec, z, xi); });
  return total + law.eps_mean;
}

double conditional_variance(const ModelSpec& spec, const Vector& x, int nodes) {
  if (nodes < 8) throw InvalidInput("conditional_variance: nodes must be >= 8");
  require_oracle_family(spec);
  if (spec.d() != 1 || spec.m() != 1) throw Unsupported("conditional_variance: scalar families only");

  const double sxi2 = spec.xi_cov(0, 0);
  const double sx2 = sxi2 + spec.errors.sigma_delta(0, 0);
  const double sed = spec.errors.sigma_eps_delta(0, 0);
  const double v11 = sxi2 - sxi2 * sxi2 / sx2;
  const double v12 = -sxi2 * sed / sx2;
  const double v22 = spec.errors.sigma_eps(0, 0) - sed * sed / sx2;
  const double sigma_e2 = spec.errors.sigma_e(0, 0);
  if (v11 <= 0.0) return sigma_e2 + std::max(v22, 0.0);

  // eps - E[eps | x] = rho gamma1 + independent remainder
  const double rho = v12 / v11;
  const double remainder = std::max(v22 - v12 * v12 / v11, 0.0);
  const double mean_xi = spec.xi_mean(0) + sxi2 / sx2 * (x(0) - spec.xi_mean(0));
  const double scale = std::sqrt(v11);
  const Vector z = Vector::Zero(spec.q());
  // Only the xi-dependent part varies; z enters additively and is held fixed.
  auto h = [&](double t) {
    Vector xi(1);
    xi(0) = mean_xi + scale * t;
    return regression_function(spec, z, xi)(0) + rho * scale * t;
  };

  double mean = 0.0;
  double second = 0.0;
  if (spec.family == Family::absolute_value) {
    const double kink = -(mean_xi + spec.as<AbsParams>().a) / scale;
    mean = normal_expectation_kinked(h, kink);
    second = normal_expectation_kinked([&](double t) { const double r = h(t) - mean; return r * r; }, kink);
  } else {
    const QuadratureRule& rule = hermite_rule(nodes);
    for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) mean += rule.weights(i) * h(rule.nodes(i));
    for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
      const double r = h(rule.nodes(i)) - mean;
      second += rule.weights(i) * r * r;
    }
  }
  return sigma_e2 + second + remainder;
}

std::vector<BinCheck> mc_conditional_check(const ModelSpec& spec, const std::vector<double>& bin_edges,
                                           std::int64_t n, std::uint64_t seed, int nodes) {
  if (n < 100000) throw InvalidInput("mc_conditional_check: n must be >= 1e5");
  if (spec.m() != 1 || spec.d() != 1) throw Unsupported("mc_conditional_check: scalar x and y only");
  if (bin_edges.size() < 2 || !std::is_sorted(bin_edges.begin(), bin_edges.end())) {
    throw InvalidInput("mc_conditional_check: need >= 2 ascending bin edges");
  }
  const Sampler sampler(spec);
  const Dataset data = sampler.sample(n, seed, 0, false);

  const std::size_t bins = bin_edges.size() - 1;
  std::vector<double> sum_y(bins, 0.0), sum_o(bins, 0.0), sum_r(bins, 0.0), sum_r2(bins, 0.0);
  std::vector<long> count(bins, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    const double xi = data.x(i, 0);
    const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), xi);
    if (it == bin_edges.begin() || it == bin_edges.end()) continue;
    const std::size_t b = static_cast<std::size_t>(it - bin_edges.begin()) - 1;
    const Vector zi = data.z.row(i).transpose();
    const double oracle = conditional_expectation(spec, zi, data.x.row(i).transpose(), nodes)(0);
    const double r = data.y(i, 0) - oracle;
    sum_y[b] += data.y(i, 0);
    sum_o[b] += oracle;
    sum_r[b] += r;
    sum_r2[b] += r * r;
    ++count[b];
  }

  std::vector<BinCheck> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    BinCheck& c = out[b];
    c.lo = bin_edges[b];
    c.hi = bin_edges[b + 1];
    c.count = count[b];
    c.empty = count[b] < 2;
    if (c.empty) continue;
    const double k = static_cast<double>(count[b]);
    c.y_mean = sum_y[b] / k;
    c.oracle_mean = sum_o[b] / k;
    const double mean_r = sum_r[b] / k;
    const double var_r = std::max(sum_r2[b] / k - mean_r * mean_r, 0.0) * k / (k - 1.0);
    c.se = std::sqrt(var_r / k);
  }
  return out;
}

}  // namespace eiv
