#include "eivpred/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "eivpred/errors.hpp"
#include "eivpred/estimators.hpp"
#include "eivpred/rng.hpp"
#include "eivpred/special.hpp"
#include "eivpred/transform.hpp"

#ifndef EIVPRED_VERSION
#define EIVPRED_VERSION "0.0.0"
#endif

namespace eiv {

namespace {

constexpr std::size_t kMaxFailureMessages = 10;
constexpr std::uint64_t kFixedResponseDomain = 0x7f4a7c159e3779b9ULL;

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs task(i) for i in [0, count) on a shared work queue. Each task writes
// only its own result slot, so the outcome does not depend on scheduling.
template <class Task>
void parallel_for(std::size_t count, int threads, Task&& task) {
  const int workers = std::min<int>(resolve_threads(threads), static_cast<int>(std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = count;
  auto worker = [&]() {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

Quantiles summarize(std::vector<double> v) {
  Quantiles q;
  if (v.empty()) {
    q.q10 = q.q50 = q.q90 = q.mean = std::nan("");
    return q;
  }
  std::sort(v.begin(), v.end());
  const auto at = [&v](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  q.q10 = at(0.1);
  q.q50 = at(0.5);
  q.q90 = at(0.9);
  double sum = 0.0;
  for (double x : v) sum += x;
  q.mean = sum / static_cast<double>(v.size());
  return q;
}

std::uint64_t seed_for_n(const ExperimentConfig& cfg, std::size_t n_index) {
  return derive_seed(cfg.master_seed, n_index);
}

FittedModel fit_for(const ModelSpec& spec, const Dataset& data) {
  switch (spec.family) {
    case Family::linear_mv: return ols_fit(data, Family::linear_mv);
    case Family::polynomial: return ols_fit(data, Family::polynomial, spec.as<PolynomialParams>().degree());
    case Family::quadratic: return ols_fit(data, Family::quadratic, 2);
    case Family::trigonometric: {
      NlsOptions opts;
      opts.harmonics = spec.as<TrigParams>().harmonics();
      return nls_fit(data, spec.family, opts);
    }
    default: return nls_fit(data, spec.family);
  }
}

// Slope coefficients of the fit and of the transformed model, in matching order.
std::pair<Vector, Vector> coefficient_pair(const FittedModel& fit, const TransformedParams& tp) {
  auto flat = [](const Matrix& a) { return Vector(Eigen::Map<const Vector>(a.data(), a.size())); };
  switch (tp.family) {
    case Family::linear_mv: {
      const auto& t = tp.as<LinearTransformed>();
      Matrix truth(t.C.rows() + t.B_x.rows(), t.B_x.cols());
      truth << t.C, t.B_x;
      return {flat(fit.slopes), flat(truth)};
    }
    case Family::polynomial:
    case Family::quadratic: {
      const auto& t = tp.as<PolynomialTransformed>();
      Vector truth(fit.slopes.rows());
      truth << (tp.family == Family::quadratic ? Vector(0) : t.c), t.beta_x;
      return {flat(fit.slopes), truth};
    }
    case Family::exponential: {
      const auto& t = tp.as<ExponentialTransformed>();
      return {fit.theta, Vector{{t.beta_x, t.lambda_x}}};
    }
    case Family::trigonometric: {
      const auto& t = tp.as<TrigTransformed>();
      Vector truth(fit.theta.size());
      truth << t.a0_x, t.a_x, t.b_x, t.omega_x;
      return {fit.theta, truth};
    }
    case Family::absolute_value: {
      const auto& t = tp.as<AbsTransformed>();
      return {fit.theta, Vector{{t.beta_x, t.k_x, t.b_x}}};
    }
  }
  return {};
}

struct SubjectPoint {
  Vector z0;
  Vector x0;
  Vector y0;
};

SubjectPoint subject_for(const ExperimentConfig& cfg, const Sampler& sampler, std::uint64_t seed, std::uint64_t rep) {
  if (cfg.fixed_x0) {
    const Vector z0 = cfg.fixed_z0 ? *cfg.fixed_z0 : Vector(0);
    return {z0, *cfg.fixed_x0, draw_response_given(cfg.spec, z0, *cfg.fixed_x0, seed, rep)};
  }
  const Subject s = sampler.new_subject(seed, rep, 0);
  return {s.z0, s.x0, s.y0};
}

struct TaskFailure {
  bool failed = false;
  std::string message;
};

void record_failure(McReport& report, const TaskFailure& f, std::int64_t n, std::size_t rep) {
  if (!f.failed) return;
  ++report.failures;
  if (report.failure_messages.size() < kMaxFailureMessages) {
    report.failure_messages.push_back(fmt::format("n={} replication={}: {}", n, rep, f.message));
  }
}

McReport report_header(const ExperimentConfig& cfg, ExperimentKind kind) {
  validate_config(cfg);
  McReport report;
  report.kind = kind;
  report.version = EIVPRED_VERSION;
  report.config = cfg;
  report.config.kind = kind;
  return report;
}

std::optional<double> slope_if_positive(const std::vector<std::int64_t>& n, const std::vector<double>& v) {
  if (n.size() < 2) return std::nullopt;
  for (double x : v) {
    if (!(x > 0.0) || !std::isfinite(x)) return std::nullopt;
  }
  return log_log_slope(n, v);
}

}  // namespace

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::consistency: return "consistency";
    case ExperimentKind::coverage: return "coverage";
    case ExperimentKind::abs_failure: return "abs-failure";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "consistency") return ExperimentKind::consistency;
  if (s == "coverage") return ExperimentKind::coverage;
  if (s == "abs-failure") return ExperimentKind::abs_failure;
  throw SpecError("unknown experiment '" + s + "' (expected consistency, coverage or abs-failure)");
}

void validate_config(const ExperimentConfig& cfg) {
  require_valid(cfg.spec);
  if (cfg.replications < 1) throw InvalidInput("replications must be >= 1");
  if (cfg.n_grid.empty()) throw InvalidInput("n_grid must not be empty");
  for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
    if (cfg.n_grid[i] < 2) throw InvalidInput("every n in n_grid must be >= 2");
    if (i > 0 && cfg.n_grid[i] <= cfg.n_grid[i - 1]) throw InvalidInput("n_grid must be strictly ascending");
  }
  for (double a : cfg.alphas) {
    if (!(a > 0.0 && a < 1.0)) throw InvalidInput(fmt::format("alpha {} outside (0, 1)", a));
  }
  if (cfg.fixed_x0 && cfg.fixed_x0->size() != cfg.spec.m()) throw DimensionError("fixed x0 has the wrong dimension");
  if (cfg.fixed_x0 && cfg.spec.q() > 0 && (!cfg.fixed_z0 || cfg.fixed_z0->size() != cfg.spec.q())) {
    throw DimensionError("fixed z0 missing or of the wrong dimension");
  }
  if (cfg.kind == ExperimentKind::abs_failure && cfg.spec.family != Family::absolute_value) {
    throw InvalidInput("abs-failure needs an absolute-value spec");
  }
  if (cfg.kind == ExperimentKind::abs_failure && cfg.test_subjects < 2) throw InvalidInput("test_subjects must be >= 2");
  if (cfg.kind == ExperimentKind::coverage) {
    if (is_nonlinear_family(cfg.spec.family)) throw InvalidInput("coverage runs need an OLS family");
    if (cfg.regions.empty() || cfg.alphas.empty()) throw InvalidInput("coverage needs alphas and regions");
    const bool wants_quadratic = std::count(cfg.regions.begin(), cfg.regions.end(), RegionKind::quadratic) > 0;
    if (wants_quadratic && cfg.spec.family != Family::quadratic) {
      throw InvalidInput("quadratic regions need a quadratic spec");
    }
    if (wants_quadratic && cfg.k0s.empty() && !cfg.spec.k0) throw InvalidInput("quadratic regions need k0");
  }
}

Vector draw_response_given(const ModelSpec& spec, const Vector& z0, const Vector& x0, std::uint64_t seed,
                           std::uint64_t replication) {
  const ConditionalGaussian cg = condition_gaussian(spec);
  const Eigen::Index m = spec.m();
  const Eigen::Index d = spec.d();
  const Matrix root = cholesky(SymMatrix(cg.v12));
  const Matrix e_root = cholesky(SymMatrix(spec.errors.sigma_e));
  Stream rng(derive_seed(seed, kFixedResponseDomain), replication, 0);
  Vector g(m + d);
  for (Eigen::Index i = 0; i < m + d; ++i) g(i) = rng.normal();
  Vector ge(d);
  for (Eigen::Index i = 0; i < d; ++i) ge(i) = rng.normal();
  const Vector gamma = root * g;
  const Vector xi = cg.offset_xi + cg.coeff_xi * x0 + gamma.head(m);
  const Vector eps = cg.coeff_eps * (x0 - spec.xi_mean) + gamma.tail(d);
  return regression_function(spec, z0, xi) + e_root * ge + eps;
}

double log_log_slope(const std::vector<std::int64_t>& n, const std::vector<double>& values) {
  if (n.size() != values.size() || n.size() < 2) throw InvalidInput("log_log_slope: need >= 2 matching points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double lx = std::log(static_cast<double>(n[i]));
    const double ly = std::log(values[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

McReport run_consistency(const ExperimentConfig& cfg) {
  McReport report = report_header(cfg, ExperimentKind::consistency);
  const ModelSpec& spec = cfg.spec;
  const Sampler sampler(spec);
  const TransformedParams tp = transform(spec);
  const Matrix sed = spec.errors.sigma_eps_delta;
  const Matrix sx_inv = spd_inverse(spec.sigma_x(), "Sigma_x");

  struct Result {
    TaskFailure failure;
    double prediction_error = 0.0;
    double coefficient_error = 0.0;
    double mean_error = 0.0;
    double mean_relative_error = 0.0;
    bool mean_equals_individual = false;
  };
  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  std::vector<Result> results(cfg.n_grid.size() * reps);
  parallel_for(results.size(), cfg.threads, [&](std::size_t task) {
    const std::size_t ni = task / reps;
    const std::size_t rep = task % reps;
    const std::uint64_t seed = seed_for_n(cfg, ni);
    Result& r = results[task];
    try {
      const Dataset data = sampler.sample(cfg.n_grid[ni], seed, rep, false);
      const FittedModel fit = fit_for(spec, data);
      const SubjectPoint s = subject_for(cfg, sampler, seed, rep);
      const Vector best = best_predictor(tp, s.z0, s.x0);
      const Prediction ind = predict_individual(fit, s.z0, s.x0);
      r.prediction_error = (ind.point - best).norm();
      const auto [est, truth] = coefficient_pair(fit, tp);
      const double scale = truth.norm();
      r.coefficient_error = (est - truth).norm() / (scale > 0.0 ? scale : 1.0);
      if (!is_nonlinear_family(spec.family)) {
        const Prediction mean = predict_mean(fit, s.z0, s.x0, sed);
        const Vector eta_best = best - sed * (sx_inv * (s.x0 - spec.xi_mean));
        r.mean_error = (mean.point - eta_best).norm();
        const double eta_scale = eta_best.norm();
        r.mean_relative_error = eta_scale > 0.0 ? r.mean_error / eta_scale : std::numeric_limits<double>::infinity();
        r.mean_equals_individual = (mean.point.array() == ind.point.array()).all();
      }
    } catch (const Error& e) {
      r.failure = {true, e.what()};
    }
  });

  std::vector<double> medians, coef_medians;
  for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
    ConsistencyRow row;
    row.n = cfg.n_grid[ni];
    std::vector<double> pe, ce, me, mre;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const Result& r = results[ni * reps + rep];
      record_failure(report, r.failure, row.n, rep);
      if (r.failure.failed) {
        ++row.failures;
        continue;
      }
      ++row.completed;
      pe.push_back(r.prediction_error);
      ce.push_back(r.coefficient_error);
      me.push_back(r.mean_error);
      mre.push_back(r.mean_relative_error);
      row.mean_equals_individual += r.mean_equals_individual ? 1 : 0;
    }
    row.prediction_error = summarize(pe);
    row.coefficient_error = summarize(ce);
    row.mean_error = summarize(me);
    row.mean_relative_error = summarize(mre);
    medians.push_back(row.prediction_error.q50);
    coef_medians.push_back(row.coefficient_error.q50);
    report.consistency.push_back(row);
  }
  report.prediction_error_slope = slope_if_positive(cfg.n_grid, medians);
  report.coefficient_error_slope = slope_if_positive(cfg.n_grid, coef_medians);
  return report;
}

McReport run_coverage(const ExperimentConfig& cfg) {
  McReport report = report_header(cfg, ExperimentKind::coverage);
  const ModelSpec& spec = cfg.spec;
  const Sampler sampler(spec);

  struct Cell {
    double alpha;
    RegionKind region;
    double k0;
  };
  std::vector<Cell> cells;
  const std::vector<double> k0s = cfg.k0s.empty() && spec.k0 ? std::vector<double>{*spec.k0} : cfg.k0s;
  for (double alpha : cfg.alphas) {
    for (RegionKind kind : cfg.regions) {
      if (kind == RegionKind::quadratic) {
        for (double k0 : k0s) cells.push_back({alpha, kind, k0});
      } else {
        cells.push_back({alpha, kind, 0.0});
      }
    }
  }

  struct Result {
    TaskFailure failure;
    std::vector<char> hit;
    std::vector<char> degenerate;
  };
  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  std::vector<Result> results(cfg.n_grid.size() * reps);
  parallel_for(results.size(), cfg.threads, [&](std::size_t task) {
    const std::size_t ni = task / reps;
    const std::size_t rep = task % reps;
    const std::uint64_t seed = seed_for_n(cfg, ni);
    Result& r = results[task];
    try {
      const Dataset data = sampler.sample(cfg.n_grid[ni], seed, rep, false);
      const FittedModel fit = fit_for(spec, data);
      const SubjectPoint s = subject_for(cfg, sampler, seed, rep);
      const Prediction pred = predict_individual(fit, s.z0, s.x0);
      r.hit.resize(cells.size());
      r.degenerate.resize(cells.size());
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const Cell& cell = cells[c];
        ConfidenceRegion region;
        switch (cell.region) {
          case RegionKind::chebyshev: region = region_chebyshev(fit, pred, cell.alpha); break;
          case RegionKind::chisquare: region = region_chisquare(fit, pred, cell.alpha, cfg.purely_normal); break;
          case RegionKind::quadratic: region = region_quadratic(fit, pred, cell.alpha, cell.k0); break;
        }
        r.hit[c] = region_contains(region, s.y0) ? 1 : 0;
        r.degenerate[c] = region.degenerate ? 1 : 0;
      }
    } catch (const Error& e) {
      r.failure = {true, e.what()};
    }
  });

  for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
    std::vector<CoverageRow> rows(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      rows[c].n = cfg.n_grid[ni];
      rows[c].alpha = cells[c].alpha;
      rows[c].region = cells[c].region;
      rows[c].k0 = cells[c].k0;
    }
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const Result& r = results[ni * reps + rep];
      record_failure(report, r.failure, cfg.n_grid[ni], rep);
      if (r.failure.failed) continue;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        ++rows[c].trials;
        rows[c].hits += r.hit[c];
        rows[c].degenerate += r.degenerate[c];
      }
    }
    for (auto& row : rows) {
      if (row.trials > 0) {
        row.coverage = static_cast<double>(row.hits) / static_cast<double>(row.trials);
        row.se = std::sqrt(row.coverage * (1.0 - row.coverage) / static_cast<double>(row.trials));
      } else {
        row.coverage = row.se = std::nan("");
      }
      report.coverage.push_back(row);
    }
  }
  return report;
}

McReport run_abs_failure(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.kind = ExperimentKind::abs_failure;
  McReport report = report_header(c, ExperimentKind::abs_failure);
  const ModelSpec& spec = cfg.spec;
  const Sampler sampler(spec);
  const TransformedParams tp = transform(spec);

  // Per-task sums over the test subjects of the squared errors and of their
  // paired difference (naive - LS).
  struct Result {
    TaskFailure failure;
    double s_ls = 0, s_ls2 = 0, s_nv = 0, s_nv2 = 0, s_d = 0, s_d2 = 0;
  };
  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  std::vector<Result> results(cfg.n_grid.size() * reps);
  parallel_for(results.size(), cfg.threads, [&](std::size_t task) {
    const std::size_t ni = task / reps;
    const std::size_t rep = task % reps;
    const std::uint64_t seed = seed_for_n(cfg, ni);
    Result& r = results[task];
    try {
      const Dataset data = sampler.sample(cfg.n_grid[ni], seed, rep, false);
      const FittedModel fit = nls_fit(data, Family::absolute_value);
      const NaiveAbsFit naive = naive_ols_abs(data);
      const Vector none(0);
      for (std::int64_t j = 0; j < cfg.test_subjects; ++j) {
        const Subject s = sampler.new_subject(seed, rep, static_cast<std::uint64_t>(j));
        const double best = best_predictor(tp, none, s.x0)(0);
        const double ls = evaluate(fit, none, s.x0)(0);
        const double nv = naive.beta * std::abs(s.x0(0) + naive.a);
        const double e_ls = (ls - best) * (ls - best);
        const double e_nv = (nv - best) * (nv - best);
        r.s_ls += e_ls;
        r.s_ls2 += e_ls * e_ls;
        r.s_nv += e_nv;
        r.s_nv2 += e_nv * e_nv;
        r.s_d += e_nv - e_ls;
        r.s_d2 += (e_nv - e_ls) * (e_nv - e_ls);
      }
    } catch (const Error& e) {
      r.failure = {true, e.what()};
    }
  });

  const auto mean_se = [](double s, double s2, double k) {
    const double mean = s / k;
    const double var = std::max(s2 / k - mean * mean, 0.0) * k / (k - 1.0);
    return std::pair<double, double>{mean, std::sqrt(var / k)};
  };
  std::vector<double> rmse_ls, rmse_nv;
  for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
    AbsFailureRow row;
    row.n = cfg.n_grid[ni];
    Result total;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const Result& r = results[ni * reps + rep];
      record_failure(report, r.failure, row.n, rep);
      if (r.failure.failed) {
        ++row.failures;
        continue;
      }
      row.subjects += cfg.test_subjects;
      total.s_ls += r.s_ls;
      total.s_ls2 += r.s_ls2;
      total.s_nv += r.s_nv;
      total.s_nv2 += r.s_nv2;
      total.s_d += r.s_d;
      total.s_d2 += r.s_d2;
    }
    if (row.subjects >= 2) {
      const double k = static_cast<double>(row.subjects);
      std::tie(row.mse_ls, row.se_ls) = mean_se(total.s_ls, total.s_ls2, k);
      std::tie(row.mse_naive, row.se_naive) = mean_se(total.s_nv, total.s_nv2, k);
      std::tie(row.gap, row.gap_se) = mean_se(total.s_d, total.s_d2, k);
    } else {
      row.mse_ls = row.se_ls = row.mse_naive = row.se_naive = row.gap = row.gap_se = std::nan("");
    }
    rmse_ls.push_back(std::sqrt(row.mse_ls));
    rmse_nv.push_back(std::sqrt(row.mse_naive));
    report.abs_failure.push_back(row);
  }
  report.ls_error_slope = slope_if_positive(cfg.n_grid, rmse_ls);
  report.naive_error_slope = slope_if_positive(cfg.n_grid, rmse_nv);
  return report;
}

McReport run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::consistency: return run_consistency(cfg);
    case ExperimentKind::coverage: return run_coverage(cfg);
    case ExperimentKind::abs_failure: return run_abs_failure(cfg);
  }
  throw InvalidInput("unknown experiment kind");
}

ExperimentConfig config_from_json(const Json& j) {
  require_keys(j,
               {"experiment", "spec", "n_grid", "replications", "alphas", "regions", "k0", "purely_normal",
                "master_seed", "threads", "fixed_subject", "test_subjects", "check"},
               "experiment config");
  ExperimentConfig cfg;
  const auto get = [&](const char* key, auto& out, const char* type) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const Json::exception&) {
      throw SpecError(fmt::format("experiment config: '{}' must be {}", key, type));
    }
  };
  if (!j.contains("experiment") || !j["experiment"].is_string()) {
    throw SpecError("experiment config: 'experiment' (string) is required");
  }
  cfg.kind = experiment_kind_from_string(j["experiment"].get<std::string>());
  if (!j.contains("spec")) throw SpecError("experiment config: 'spec' is required");
  cfg.spec = spec_from_json(j["spec"]);
  get("n_grid", cfg.n_grid, "an array of integers");
  get("replications", cfg.replications, "an integer");
  get("alphas", cfg.alphas, "an array of numbers");
  if (j.contains("regions")) {
    std::vector<std::string> names;
    get("regions", names, "an array of strings");
    cfg.regions.clear();
    for (const auto& name : names) {
      try {
        cfg.regions.push_back(region_kind_from_string(name));
      } catch (const InvalidInput& e) {
        throw SpecError(e.what());
      }
    }
  }
  if (j.contains("k0") && j["k0"].is_number()) {
    cfg.k0s = {j["k0"].get<double>()};
  } else {
    get("k0", cfg.k0s, "a number or an array of numbers");
  }
  get("purely_normal", cfg.purely_normal, "a boolean");
  get("master_seed", cfg.master_seed, "a non-negative integer");
  get("threads", cfg.threads, "an integer");
  get("test_subjects", cfg.test_subjects, "an integer");
  if (j.contains("fixed_subject")) {
    const Json& f = j["fixed_subject"];
    require_keys(f, {"z0", "x0"}, "experiment config.fixed_subject");
    if (!f.contains("x0")) throw SpecError("experiment config.fixed_subject: 'x0' is required");
    cfg.fixed_x0 = vector_from_json(f["x0"], "fixed_subject.x0");
    cfg.fixed_z0 = f.contains("z0") ? vector_from_json(f["z0"], "fixed_subject.z0") : Vector(0);
  }
  return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
  // threads is deliberately left out: reports must not depend on it.
  Json j;
  j["experiment"] = to_string(cfg.kind);
  j["spec"] = spec_to_json(cfg.spec);
  j["n_grid"] = cfg.n_grid;
  j["replications"] = cfg.replications;
  j["master_seed"] = cfg.master_seed;
  if (cfg.kind == ExperimentKind::coverage) {
    j["alphas"] = cfg.alphas;
    Json regions = Json::array();
    for (RegionKind r : cfg.regions) regions.push_back(to_string(r));
    j["regions"] = regions;
    j["k0"] = cfg.k0s;
    j["purely_normal"] = cfg.purely_normal;
  }
  if (cfg.kind == ExperimentKind::abs_failure) j["test_subjects"] = cfg.test_subjects;
  if (cfg.fixed_x0) {
    j["fixed_subject"] = {{"z0", to_json(cfg.fixed_z0 ? *cfg.fixed_z0 : Vector(0))}, {"x0", to_json(*cfg.fixed_x0)}};
  }
  return j;
}

namespace {

Json quantiles_json(const Quantiles& q) { return {{"q10", q.q10}, {"q50", q.q50}, {"q90", q.q90}, {"mean", q.mean}}; }

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json report_to_json(const McReport& report) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["experiment"] = to_string(report.kind);
  j["version"] = report.version;
  j["config"] = config_to_json(report.config);
  Json rows = Json::array();
  for (const auto& r : report.consistency) {
    rows.push_back({{"n", r.n},
                    {"completed", r.completed},
                    {"failures", r.failures},
                    {"prediction_error", quantiles_json(r.prediction_error)},
                    {"coefficient_relative_error", quantiles_json(r.coefficient_error)},
                    {"mean_prediction_error", quantiles_json(r.mean_error)},
                    {"mean_prediction_relative_error", quantiles_json(r.mean_relative_error)},
                    {"mean_equals_individual", r.mean_equals_individual}});
  }
  for (const auto& r : report.coverage) {
    Json row = {{"n", r.n},         {"alpha", r.alpha},   {"region", to_string(r.region)},
                {"trials", r.trials}, {"hits", r.hits},   {"coverage", r.coverage},
                {"se", r.se},       {"degenerate", r.degenerate}};
    if (r.region == RegionKind::quadratic) row["k0"] = r.k0;
    rows.push_back(row);
  }
  for (const auto& r : report.abs_failure) {
    rows.push_back({{"n", r.n},
                    {"subjects", r.subjects},
                    {"failures", r.failures},
                    {"mse_ls", r.mse_ls},
                    {"se_ls", r.se_ls},
                    {"mse_naive", r.mse_naive},
                    {"se_naive", r.se_naive},
                    {"gap", r.gap},
                    {"gap_se", r.gap_se}});
  }
  j["rows"] = rows;
  Json slopes;
  if (report.kind == ExperimentKind::consistency) {
    slopes["prediction_error"] = optional_json(report.prediction_error_slope);
    slopes["coefficient_error"] = optional_json(report.coefficient_error_slope);
  } else if (report.kind == ExperimentKind::abs_failure) {
    slopes["ls_rmse"] = optional_json(report.ls_error_slope);
    slopes["naive_rmse"] = optional_json(report.naive_error_slope);
  }
  if (!slopes.is_null()) j["log_log_slopes"] = slopes;
  j["failures"] = report.failures;
  j["failure_messages"] = report.failure_messages;
  return j;
}

std::string report_to_csv(const McReport& report) {
  std::string out = "experiment,n,alpha,region,k0,statistic,value\n";
  const std::string exp = to_string(report.kind);
  const auto num = [](double v) { return std::isfinite(v) ? fmt::format("{:.17g}", v) : std::string("nan"); };
  const auto line = [&](std::int64_t n, const std::string& alpha, const std::string& region, const std::string& k0,
                        const std::string& stat, const std::string& value) {
    out += fmt::format("{},{},{},{},{},{},{}\n", exp, n, alpha, region, k0, stat, value);
  };
  for (const auto& r : report.consistency) {
    line(r.n, "", "", "", "completed", std::to_string(r.completed));
    line(r.n, "", "", "", "failures", std::to_string(r.failures));
    const std::pair<const char*, const Quantiles*> groups[] = {{"prediction_error", &r.prediction_error},
                                                               {"coefficient_relative_error", &r.coefficient_error},
                                                               {"mean_prediction_error", &r.mean_error},
                                                               {"mean_prediction_relative_error", &r.mean_relative_error}};
    for (const auto& [name, q] : groups) {
      line(r.n, "", "", "", fmt::format("{}_q10", name), num(q->q10));
      line(r.n, "", "", "", fmt::format("{}_q50", name), num(q->q50));
      line(r.n, "", "", "", fmt::format("{}_q90", name), num(q->q90));
      line(r.n, "", "", "", fmt::format("{}_mean", name), num(q->mean));
    }
    line(r.n, "", "", "", "mean_equals_individual", std::to_string(r.mean_equals_individual));
  }
  for (const auto& r : report.coverage) {
    const std::string k0 = r.region == RegionKind::quadratic ? num(r.k0) : "";
    line(r.n, num(r.alpha), to_string(r.region), k0, "trials", std::to_string(r.trials));
    line(r.n, num(r.alpha), to_string(r.region), k0, "coverage", num(r.coverage));
    line(r.n, num(r.alpha), to_string(r.region), k0, "se", num(r.se));
    line(r.n, num(r.alpha), to_string(r.region), k0, "degenerate", std::to_string(r.degenerate));
  }
  for (const auto& r : report.abs_failure) {
    line(r.n, "", "", "", "subjects", std::to_string(r.subjects));
    line(r.n, "", "", "", "mse_ls", num(r.mse_ls));
    line(r.n, "", "", "", "se_ls", num(r.se_ls));
    line(r.n, "", "", "", "mse_naive", num(r.mse_naive));
    line(r.n, "", "", "", "se_naive", num(r.se_naive));
    line(r.n, "", "", "", "gap", num(r.gap));
    line(r.n, "", "", "", "gap_se", num(r.gap_se));
  }
  return out;
}

CheckThresholds thresholds_from_json(const Json& j) {
  require_keys(j,
               {"slope_min", "slope_max", "coefficient_error_max", "mean_relative_error_max", "coverage_min",
                "coverage_max", "gap_se_min", "max_failure_rate"},
               "check");
  CheckThresholds t;
  const auto opt = [&j](const char* key, std::optional<double>& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw SpecError(fmt::format("check: '{}' must be a number", key));
    out = j[key].get<double>();
  };
  opt("slope_min", t.slope_min);
  opt("slope_max", t.slope_max);
  opt("coefficient_error_max", t.coefficient_error_max);
  opt("mean_relative_error_max", t.mean_relative_error_max);
  opt("coverage_min", t.coverage_min);
  opt("coverage_max", t.coverage_max);
  opt("gap_se_min", t.gap_se_min);
  opt("max_failure_rate", t.max_failure_rate);
  return t;
}

std::vector<CheckOutcome> evaluate_checks(const McReport& report, const CheckThresholds& t) {
  std::vector<CheckOutcome> out;
  const auto add = [&out](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };
  const std::optional<double> slope =
      report.kind == ExperimentKind::abs_failure ? report.ls_error_slope : report.prediction_error_slope;
  if (t.slope_min || t.slope_max) {
    const bool ok = slope && (!t.slope_min || *slope >= *t.slope_min) && (!t.slope_max || *slope <= *t.slope_max);
    add("error slope", ok, slope ? fmt::format("slope {:.4f}", *slope) : "slope unavailable");
  }
  if (t.coefficient_error_max && !report.consistency.empty()) {
    const double v = report.consistency.back().coefficient_error.q50;
    add("coefficient error", v < *t.coefficient_error_max, fmt::format("median relative error {:.4g}", v));
  }
  if (t.mean_relative_error_max && !report.consistency.empty()) {
    const double v = report.consistency.back().mean_relative_error.q50;
    add("mean prediction error", v < *t.mean_relative_error_max, fmt::format("median relative error {:.4g}", v));
  }
  for (const auto& r : report.coverage) {
    if (!t.coverage_min && !t.coverage_max) break;
    const bool ok = (!t.coverage_min || r.coverage >= *t.coverage_min) && (!t.coverage_max || r.coverage <= *t.coverage_max);
    std::string name = fmt::format("coverage {} alpha={} n={}", to_string(r.region), r.alpha, r.n);
    if (r.region == RegionKind::quadratic) name += fmt::format(" k0={}", r.k0);
    add(std::move(name), ok, fmt::format("{:.4f} (se {:.4f})", r.coverage, r.se));
  }
  if (t.gap_se_min && !report.abs_failure.empty()) {
    const auto& r = report.abs_failure.back();
    add("naive gap", r.gap > *t.gap_se_min * r.gap_se, fmt::format("gap {:.4g}, se {:.4g}", r.gap, r.gap_se));
  }
  if (t.max_failure_rate) {
    const std::size_t tasks = report.config.n_grid.size() * static_cast<std::size_t>(report.config.replications);
    const double rate = tasks == 0 ? 0.0 : static_cast<double>(report.failures) / static_cast<double>(tasks);
    add("failure rate", rate <= *t.max_failure_rate, fmt::format("{} of {}", report.failures, tasks));
  }
  return out;
}

}  // namespace eiv
