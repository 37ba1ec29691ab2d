#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "eivpred/linalg.hpp"
#include "eivpred/models.hpp"

namespace eiv {

/// Nodes and weights of a quadrature rule. For Gauss-Hermite rules the weight
/// function is the standard normal density and the weights sum to one.
struct QuadratureRule {
  Vector nodes;
  Vector weights;
};

/// Probabilists' Gauss-Hermite rule via Golub-Welsch.
QuadratureRule gauss_hermite(int count);

/// Gauss-Legendre rule on [-1, 1] via Golub-Welsch.
QuadratureRule gauss_legendre(int count);

/// Cached Gauss-Hermite rule; rules are built once and shared read-only.
const QuadratureRule& hermite_rule(int count);

/// E[g(t)] for t ~ N(0, 1), integrand with a possible kink at `kink`.
/// Composite Gauss-Legendre over [-14, 14] (shifted to contain the kink) with
/// the kink as a panel boundary.
template <class F>
double normal_expectation_kinked(F&& g, double kink);

/// E[y | z, x] from first principles: the latent regression function is
/// integrated against the exact Gaussian law of xi given x, and E[eps | x] is
/// added. Product Gauss-Hermite rule with `nodes` points per latent dimension
/// (m <= 3); the absolute-value family uses a kink-aware composite rule instead.
Vector conditional_expectation(const ModelSpec& spec, const Vector& z, const Vector& x, int nodes = 64);

/// Var(y | z, x) for scalar families (equals Var(u | x) in the observable
/// regression y = E[y | z, x] + u).
double conditional_variance(const ModelSpec& spec, const Vector& x, int nodes = 64);

struct BinCheck {
  double lo = 0.0;
  double hi = 0.0;
  long count = 0;
  double y_mean = 0.0;       // simulated mean of y over the bin
  double oracle_mean = 0.0;  // mean of the quadrature E[y | z_i, x_i] over the same points
  double se = 0.0;           // standard error of y_mean - oracle_mean
  bool empty = true;

  bool agrees(double k) const { return empty || std::abs(y_mean - oracle_mean) <= k * se; }
};

/// Simulation cross-check of the quadrature oracle: n draws, binned on scalar x.
/// Bins with fewer than two points are flagged empty and excluded.
std::vector<BinCheck> mc_conditional_check(const ModelSpec& spec, const std::vector<double>& bin_edges,
                                           std::int64_t n, std::uint64_t seed, int nodes = 64);

// Implementation of the template above.
template <class F>
double normal_expectation_kinked(F&& g, double kink) {
  static const QuadratureRule panel_rule = gauss_legendre(20);
  constexpr double kHalfSpan = 14.0;
  double lo = -kHalfSpan;
  double hi = kHalfSpan;
  std::vector<double> breaks;
  breaks.push_back(lo);
  if (kink > lo && kink < hi) breaks.push_back(kink);
  breaks.push_back(hi);
  double total = 0.0;
  for (std::size_t b = 0; b + 1 < breaks.size(); ++b) {
    const double seg_lo = breaks[b];
    const double seg_hi = breaks[b + 1];
    const int panels = std::max(1, static_cast<int>(std::ceil(seg_hi - seg_lo)));
    const double width = (seg_hi - seg_lo) / panels;
    for (int p = 0; p < panels; ++p) {
      const double centre = seg_lo + (p + 0.5) * width;
      for (Eigen::Index i = 0; i < panel_rule.nodes.size(); ++i) {
        const double t = centre + 0.5 * width * panel_rule.nodes(i);
        const double density = std::exp(-0.5 * t * t) * 0.39894228040143267794;
        total += 0.5 * width * panel_rule.weights(i) * density * g(t);
      }
    }
  }
  return total;
}

}  // namespace eiv
