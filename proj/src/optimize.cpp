#include "eivpred/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace eiv {

OptimizeResult levenberg_marquardt(const ResidualFn& fn, Vector start, const OptimizeOptions& opts) {
  OptimizeResult out;
  out.params = std::move(start);
  Vector r;
  Matrix jac;
  fn(out.params, r, &jac);
  double sse = r.squaredNorm();
  if (!std::isfinite(sse)) return out;

  double lambda = 1e-3;
  Vector trial_r;
  for (int it = 0; it < opts.max_iterations; ++it) {
    out.iterations = it + 1;
    const Matrix jtj = jac.transpose() * jac;
    const Vector grad = jac.transpose() * r;
    const Vector scale = jtj.diagonal().cwiseMax(1e-12 * std::max(1.0, jtj.diagonal().maxCoeff()));

    bool improved = false;
    while (lambda < 1e20) {
      Matrix damped = jtj;
      damped.diagonal() += lambda * scale;
      const Vector step = damped.ldlt().solve(-grad);
      const Vector trial = out.params + step;
      fn(trial, trial_r, nullptr);
      const double trial_sse = trial_r.squaredNorm();
      if (std::isfinite(trial_sse) && trial_sse < sse) {
        const double decrease = sse - trial_sse;
        out.params = trial;
        const bool small = decrease <= opts.rel_tol * sse;
        sse = trial_sse;
        lambda = std::max(lambda / 3.0, 1e-15);
        fn(out.params, r, &jac);
        improved = true;
        if (small || sse == 0.0) {
          out.objective = sse;
          out.converged = true;
          return out;
        }
        break;
      }
      lambda *= 4.0;
    }
    if (!improved) {
      // No damped step reduces the objective: stationary to working precision.
      out.objective = sse;
      out.converged = true;
      return out;
    }
  }
  out.objective = sse;
  return out;
}

OptimizeResult nelder_mead(const std::function<double(const Vector&)>& f, Vector start, const Vector& step,
                           const OptimizeOptions& opts) {
  const Eigen::Index p = start.size();
  std::vector<Vector> simplex(p + 1, start);
  for (Eigen::Index i = 0; i < p; ++i) simplex[i + 1](i) += step(i);
  std::vector<double> value(p + 1);
  auto eval = [&f](const Vector& v) {
    const double y = f(v);
    return std::isfinite(y) ? y : std::numeric_limits<double>::infinity();
  };
  for (Eigen::Index i = 0; i <= p; ++i) value[i] = eval(simplex[i]);

  std::vector<Eigen::Index> order(p + 1);
  OptimizeResult out;
  for (int it = 0; it < opts.max_iterations; ++it) {
    out.iterations = it + 1;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return value[a] < value[b]; });
    const Eigen::Index best = order.front();
    const Eigen::Index worst = order.back();
    const Eigen::Index second = order[p - 1];

    const double spread = value[worst] - value[best];
    if (std::isfinite(spread) && spread <= opts.rel_tol * std::abs(value[best]) + 1e-300) {
      out.converged = true;
      break;
    }
    double diameter = 0.0;
    for (Eigen::Index i = 0; i <= p; ++i) diameter = std::max(diameter, (simplex[i] - simplex[best]).cwiseAbs().maxCoeff());
    if (std::isfinite(value[best]) && diameter <= opts.x_tol * (1.0 + simplex[best].cwiseAbs().maxCoeff())) {
      out.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(p);
    for (Eigen::Index i = 0; i < p; ++i) centroid += simplex[order[i]];
    centroid /= static_cast<double>(p);

    const Vector reflected = centroid + (centroid - simplex[worst]);
    const double fr = eval(reflected);
    if (fr < value[best]) {
      const Vector expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        value[worst] = fe;
      } else {
        simplex[worst] = reflected;
        value[worst] = fr;
      }
      continue;
    }
    if (fr < value[second]) {
      simplex[worst] = reflected;
      value[worst] = fr;
      continue;
    }
    const bool outside = fr < value[worst];
    const Vector contracted =
        outside ? Vector(centroid + 0.5 * (reflected - centroid)) : Vector(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(contracted);
    if (fc < std::min(fr, value[worst])) {
      simplex[worst] = contracted;
      value[worst] = fc;
      continue;
    }
    for (Eigen::Index i = 0; i <= p; ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      value[i] = eval(simplex[i]);
    }
  }
  const auto best_it = std::min_element(value.begin(), value.end());
  out.params = simplex[static_cast<std::size_t>(best_it - value.begin())];
  out.objective = *best_it;
  return out;
}

}  // namespace eiv
