#include <doctest.h>

#include <cmath>

#include "eivpred/errors.hpp"
#include "eivpred/montecarlo.hpp"
#include "eivpred/transform.hpp"
#include "support.hpp"

using namespace eiv;
using eiv::testing::linear_scalar_spec;
using eiv::testing::scalar_spec;

namespace {

ExperimentConfig consistency_config() {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::consistency;
  cfg.spec = linear_scalar_spec(1, 0.5, 1, 2, 1, 1, 0.25, 0.5, 0.3, ZDistribution::Kind::uniform);
  cfg.n_grid = {200, 800};
  cfg.replications = 40;
  cfg.master_seed = 7;
  return cfg;
}

std::string report_text(ExperimentConfig cfg, int threads) {
  cfg.threads = threads;
  const McReport r = run_experiment(cfg);
  return dump_json(report_to_json(r)) + report_to_csv(r);
}

}  // namespace

TEST_CASE("log_log_slope") {
  CHECK(log_log_slope({100, 1000, 10000}, {1.0, 1.0 / std::sqrt(10.0), 0.1}) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(log_log_slope({10, 100}, {3.0, 3.0}) == doctest::Approx(0.0));
}

TEST_CASE("reports are identical across thread counts") {
  ExperimentConfig cons = consistency_config();
  const std::string one = report_text(cons, 1);
  CHECK(report_text(cons, 3) == one);
  CHECK(report_text(cons, 8) == one);

  ExperimentConfig cov = consistency_config();
  cov.kind = ExperimentKind::coverage;
  cov.regions = {RegionKind::chebyshev, RegionKind::chisquare};
  cov.alphas = {0.05, 0.5};
  CHECK(report_text(cov, 1) == report_text(cov, 4));

  ExperimentConfig abs;
  abs.kind = ExperimentKind::abs_failure;
  abs.spec = scalar_spec(Family::absolute_value, AbsParams{1, 1}, 0, 1, 1, 0.25);
  abs.n_grid = {500, 2000};
  abs.replications = 2;
  abs.test_subjects = 500;
  CHECK(report_text(abs, 1) == report_text(abs, 2));

  ExperimentConfig other = cons;
  other.master_seed = 8;
  CHECK(report_text(other, 1) != one);
}

TEST_CASE("consistency driver") {
  SUBCASE("zero-noise spec has no prediction error") {
    ExperimentConfig cfg = consistency_config();
    cfg.spec = linear_scalar_spec(1, 0.5, 1, 2, 1, 0, 0, 0, 0);
    const McReport r = run_consistency(cfg);
    for (const ConsistencyRow& row : r.consistency) {
      CHECK(row.completed == cfg.replications);
      CHECK(row.prediction_error.q90 <= 1e-10);
      CHECK(row.mean_error.q90 <= 1e-10);
    }
  }
  SUBCASE("errors shrink with n and the mean predictor tracks its target") {
    ExperimentConfig cfg = consistency_config();
    cfg.n_grid = {1000, 10000, 100000};
    cfg.replications = 40;
    const McReport r = run_consistency(cfg);
    REQUIRE(r.prediction_error_slope);
    CHECK(*r.prediction_error_slope < -0.3);
    CHECK(*r.prediction_error_slope > -0.7);
    CHECK(r.consistency.back().mean_relative_error.q50 < 0.05);
    CHECK(r.failures == 0);
    CHECK(r.consistency.back().mean_equals_individual == 0);
  }
  SUBCASE("zero cross-covariance: mean prediction equals the individual one") {
    ExperimentConfig cfg = consistency_config();
    cfg.spec.errors.sigma_eps_delta.setZero();
    const McReport r = run_consistency(cfg);
    for (const ConsistencyRow& row : r.consistency) CHECK(row.mean_equals_individual == cfg.replications);
  }
}

TEST_CASE("coverage driver") {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::coverage;
  ModelSpec s = linear_scalar_spec(1, 0.5, 1, 0, 1, 1, 0, 0.5, 0.2);
  cfg.spec = s;
  cfg.n_grid = {2000};
  cfg.replications = 2000;
  cfg.alphas = {0.5};
  cfg.regions = {RegionKind::chisquare, RegionKind::chebyshev};
  cfg.purely_normal = true;
  cfg.master_seed = 31;
  const McReport r = run_coverage(cfg);
  REQUIRE(r.coverage.size() == 2);
  const CoverageRow& d = r.coverage[0];
  const CoverageRow& e = r.coverage[1];
  CHECK(d.region == RegionKind::chisquare);
  CHECK(std::abs(d.coverage - 0.5) <= 0.03);
  CHECK(d.se == doctest::Approx(std::sqrt(d.coverage * (1 - d.coverage) / 2000)));
  CHECK(e.hits >= d.hits);
  CHECK(e.coverage >= 0.5);
}

TEST_CASE("quadratic coverage is weakly higher when the bound is slack") {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::coverage;
  cfg.spec = scalar_spec(Family::quadratic, PolynomialParams{Vector(0), 1, Vector{{0.5, 1}}}, 1, 1, 1, 0.5);
  cfg.n_grid = {2000};
  cfg.replications = 1000;
  cfg.alphas = {0.2};
  cfg.regions = {RegionKind::quadratic};
  cfg.k0s = {0.5, 0.3};
  const McReport r = run_coverage(cfg);
  REQUIRE(r.coverage.size() == 2);
  CHECK(r.coverage[1].hits >= r.coverage[0].hits);
  CHECK(r.coverage[0].coverage >= 0.8 - 2 * r.coverage[0].se);
}

TEST_CASE("abs failure driver without covariate error") {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::abs_failure;
  cfg.spec = scalar_spec(Family::absolute_value, AbsParams{1, 1}, 0, 1, 1e-8, 0.25);
  cfg.n_grid = {5000};
  cfg.replications = 1;
  cfg.test_subjects = 5000;
  const McReport r = run_abs_failure(cfg);
  REQUIRE(r.abs_failure.size() == 1);
  const AbsFailureRow& row = r.abs_failure[0];
  // With (almost) no measurement error both predictors are consistent.
  CHECK(std::abs(row.gap) <= 4 * row.gap_se + 1e-4);
  CHECK(row.mse_ls < 1e-2);
  CHECK(row.mse_naive < 1e-2);
}

TEST_CASE("draw_response_given follows the conditional law") {
  const ModelSpec s = linear_scalar_spec(1, 0.5, 2, 0, 1, 1, 0.2, 1, 0.3);
  const TransformedParams tp = transform(s);
  const Vector z0 = Vector::Constant(1, 0.7), x0 = Vector::Constant(1, -0.4);
  const double mean = best_predictor(tp, z0, x0)(0);
  const double var = tp.as<LinearTransformed>().sigma_u(0, 0);
  const int n = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = draw_response_given(s, z0, x0, 3, static_cast<std::uint64_t>(i))(0);
    sum += y;
    sum2 += y * y;
  }
  const double m = sum / n;
  const double v = sum2 / n - m * m;
  CHECK(std::abs(m - mean) <= 4 * std::sqrt(var / n));
  CHECK(std::abs(v - var) <= 4 * var * std::sqrt(2.0 / n));
  CHECK(draw_response_given(s, z0, x0, 3, 5) == draw_response_given(s, z0, x0, 3, 5));
}

TEST_CASE("config JSON") {
  const Json j = Json::parse(R"({
    "experiment": "coverage",
    "spec": {"family": "linear-mv", "params": {"b": [0], "B": [[1]]}, "xi_mean": [0], "xi_cov": [[1]],
             "errors": {"sigma_e": [[1]], "sigma_delta": [[1]]}},
    "n_grid": [100, 1000], "replications": 10, "alphas": [0.1, 0.05], "regions": ["chebyshev", "chisquare"],
    "purely_normal": true, "master_seed": 5, "threads": 2, "fixed_subject": {"x0": [0.5]}})");
  const ExperimentConfig cfg = config_from_json(j);
  CHECK(cfg.kind == ExperimentKind::coverage);
  CHECK(cfg.n_grid == std::vector<std::int64_t>{100, 1000});
  CHECK(cfg.regions.size() == 2);
  CHECK(cfg.threads == 2);
  REQUIRE(cfg.fixed_x0);
  CHECK((*cfg.fixed_x0)(0) == 0.5);
  const Json back = config_to_json(cfg);
  CHECK_FALSE(back.contains("threads"));
  CHECK(dump_json(config_to_json(config_from_json(back))) == dump_json(back));

  Json bad = j;
  bad["replicates"] = 3;
  CHECK_THROWS_AS(config_from_json(bad), SpecError);
  bad = j;
  bad["n_grid"] = "many";
  CHECK_THROWS_AS(config_from_json(bad), SpecError);

  ExperimentConfig invalid = cfg;
  invalid.n_grid = {1000, 100};
  CHECK_THROWS(validate_config(invalid));
  invalid = cfg;
  invalid.replications = 0;
  CHECK_THROWS(validate_config(invalid));
}

TEST_CASE("threshold checks") {
  ExperimentConfig cfg = consistency_config();
  const McReport r = run_consistency(cfg);
  CheckThresholds t = thresholds_from_json(Json::parse(R"({"max_failure_rate": 0.0})"));
  auto outcomes = evaluate_checks(r, t);
  REQUIRE(outcomes.size() == 1);
  CHECK(outcomes[0].passed);
  t = thresholds_from_json(Json::parse(R"({"coefficient_error_max": 1e-9})"));
  outcomes = evaluate_checks(r, t);
  REQUIRE(outcomes.size() == 1);
  CHECK_FALSE(outcomes[0].passed);
  CHECK_THROWS_AS(thresholds_from_json(Json::parse(R"({"coverage": 0.9})")), SpecError);
}
