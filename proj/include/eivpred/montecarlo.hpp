#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eivpred/io.hpp"
#include "eivpred/models.hpp"
#include "eivpred/predictors.hpp"

namespace eiv {

enum class ExperimentKind { consistency, coverage, abs_failure };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::consistency;
  ModelSpec spec;
  std::vector<std::int64_t> n_grid;
  int replications = 200;
  std::vector<double> alphas = {0.05};
  std::vector<RegionKind> regions = {RegionKind::chebyshev};
  std::vector<double> k0s;  // quadratic regions; defaults to spec.k0
  bool purely_normal = false;
  std::uint64_t master_seed = 1;
  int threads = 1;  // 0 selects the hardware concurrency; never affects results
  /// Conditioning point (z0, x0) held fixed across replications; y0 is then
  /// drawn from its conditional law given the point. Unset: a fresh subject per replication.
  std::optional<Vector> fixed_z0;
  std::optional<Vector> fixed_x0;
  std::int64_t test_subjects = 10000;  // abs_failure
};

/// Throws InvalidInput / SpecError when the configuration cannot run.
void validate_config(const ExperimentConfig& cfg);

struct Quantiles {
  double q10 = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
  double mean = 0.0;
};

struct ConsistencyRow {
  std::int64_t n = 0;
  int completed = 0;
  int failures = 0;
  Quantiles prediction_error;      // |y~0 - y^0|
  Quantiles coefficient_error;     // relative, slope coefficients
  Quantiles mean_error;            // |eta~0 - eta^0|
  Quantiles mean_relative_error;   // |eta~0 - eta^0| / |eta^0|
  int mean_equals_individual = 0;  // replications with eta~0 == y~0 bit for bit
};

struct CoverageRow {
  std::int64_t n = 0;
  double alpha = 0.0;
  RegionKind region = RegionKind::chebyshev;
  double k0 = 0.0;
  std::int64_t trials = 0;
  std::int64_t hits = 0;
  int degenerate = 0;
  double coverage = 0.0;
  double se = 0.0;  // sqrt(p (1 - p) / trials)
};

struct AbsFailureRow {
  std::int64_t n = 0;
  std::int64_t subjects = 0;
  int failures = 0;
  double mse_ls = 0.0;     // mean (F-based prediction - best predictor)^2
  double se_ls = 0.0;
  double mse_naive = 0.0;  // same for beta |x0 + a|
  double se_naive = 0.0;
  double gap = 0.0;        // mse_naive - mse_ls
  double gap_se = 0.0;     // paired standard error
};

struct McReport {
  ExperimentKind kind = ExperimentKind::consistency;
  std::string version;
  ExperimentConfig config;
  std::vector<ConsistencyRow> consistency;
  std::vector<CoverageRow> coverage;
  std::vector<AbsFailureRow> abs_failure;
  /// Log-log least-squares slope of the median errors against n.
  std::optional<double> prediction_error_slope;
  std::optional<double> coefficient_error_slope;
  std::optional<double> ls_error_slope;     // abs_failure: F-based mse
  std::optional<double> naive_error_slope;  // abs_failure: naive mse
  int failures = 0;
  std::vector<std::string> failure_messages;  // first few, in replication order
};

McReport run_consistency(const ExperimentConfig& cfg);
McReport run_coverage(const ExperimentConfig& cfg);
McReport run_abs_failure(const ExperimentConfig& cfg);
McReport run_experiment(const ExperimentConfig& cfg);

/// Draws y0 given fixed (z0, x0) from the exact conditional law of the model.
Vector draw_response_given(const ModelSpec& spec, const Vector& z0, const Vector& x0, std::uint64_t seed,
                           std::uint64_t replication);

/// Slope of log(values) against log(n) by least squares.
double log_log_slope(const std::vector<std::int64_t>& n, const std::vector<double>& values);

ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& cfg);
Json report_to_json(const McReport& report);
/// Flat table: experiment, n, alpha, region, k0, statistic, value.
std::string report_to_csv(const McReport& report);

/// Acceptance thresholds evaluated by `experiment --check`; unset entries are skipped.
struct CheckThresholds {
  std::optional<double> slope_min;
  std::optional<double> slope_max;
  std::optional<double> coefficient_error_max;  // median relative error at the largest n
  std::optional<double> mean_relative_error_max;
  std::optional<double> coverage_min;
  std::optional<double> coverage_max;
  std::optional<double> gap_se_min;  // abs_failure: gap / gap_se at the largest n
  std::optional<double> max_failure_rate;
};

CheckThresholds thresholds_from_json(const Json& j);

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<CheckOutcome> evaluate_checks(const McReport& report, const CheckThresholds& t);

}  // namespace eiv
