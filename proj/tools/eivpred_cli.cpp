// eivpred command-line front end: simulate, transform, fit-predict, experiment.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "eivpred/errors.hpp"
#include "eivpred/estimators.hpp"
#include "eivpred/io.hpp"
#include "eivpred/montecarlo.hpp"
#include "eivpred/predictors.hpp"
#include "eivpred/transform.hpp"

namespace fs = std::filesystem;
using namespace eiv;

namespace {

enum ExitCode { kOk = 0, kCheckFailed = 1, kConfigError = 2, kRuntimeError = 3 };

// Anything raised while reading and validating the configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool check = false;
  std::optional<int> threads;
};

Json load_config(const std::string& path) {
  if (path.empty()) throw ConfigError("--config is required");
  try {
    return read_json_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

template <class F>
auto configure(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  } catch (const Json::exception& e) {
    throw ConfigError(e.what());
  }
}

std::string output_dir(const Options& opt, const Json& cfg) {
  std::string dir = opt.out;
  if (dir.empty() && cfg.contains("out")) {
    if (!cfg["out"].is_string()) throw ConfigError("'out' must be a string");
    dir = cfg["out"].get<std::string>();
  }
  if (dir.empty()) dir = ".";
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidInput("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

ModelSpec checked_spec(const Json& j) {
  ModelSpec spec = spec_from_json(j);
  const auto violations = validate(spec);
  if (!violations.empty()) {
    std::string msg = "invalid model spec:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ConfigError(msg);
  }
  return spec;
}

int default_threads() {
  if (const char* env = std::getenv("EIVPRED_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 0) return static_cast<int>(v);
    std::cerr << "warning: ignoring malformed EIVPRED_THREADS='" << env << "'\n";
  }
  return 0;
}

int cmd_simulate(const Options& opt) {
  const Json cfg = load_config(opt.config);
  const auto [spec, n, seed, hidden] = configure([&] {
    require_keys(cfg, {"spec", "n", "seed", "hidden", "out"}, "simulate config");
    if (!cfg.contains("spec") || !cfg.contains("n")) throw ConfigError("simulate config needs 'spec' and 'n'");
    if (!cfg["n"].is_number_integer() || cfg["n"].get<std::int64_t>() < 1) throw ConfigError("'n' must be a positive integer");
    if (cfg.contains("seed") && !cfg["seed"].is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
    if (cfg.contains("hidden") && !cfg["hidden"].is_boolean()) throw ConfigError("'hidden' must be a boolean");
    const std::uint64_t s = opt.seed ? *opt.seed : cfg.value("seed", std::uint64_t{0});
    return std::tuple{checked_spec(cfg["spec"]), cfg["n"].get<std::int64_t>(), s, cfg.value("hidden", true)};
  });
  const std::string dir = output_dir(opt, cfg);
  const Dataset data = Sampler(spec).sample(n, seed, 0, hidden);
  write_text_file((fs::path(dir) / "dataset.csv").string(), dataset_to_csv(data, hidden));
  write_text_file((fs::path(dir) / "dataset.json").string(), dump_json(dataset_sidecar(spec, data, "dataset.csv")));
  std::cout << fmt::format("wrote {} rows to {}\n", n, (fs::path(dir) / "dataset.csv").string());
  return kOk;
}

int cmd_transform(const Options& opt) {
  const Json cfg = load_config(opt.config);
  const auto [spec, x_grid, k0] = configure([&] {
    require_keys(cfg, {"spec", "x_grid", "k0", "out"}, "transform config");
    if (!cfg.contains("spec")) throw ConfigError("transform config needs 'spec'");
    const Vector grid = cfg.contains("x_grid") ? vector_from_json(cfg["x_grid"], "x_grid") : Vector(0);
    std::optional<double> k = cfg.contains("k0") ? std::optional<double>(cfg["k0"].get<double>()) : std::nullopt;
    return std::tuple{checked_spec(cfg["spec"]), grid, k};
  });
  const TransformedParams tp = transform(spec);
  Json j = transformed_to_json(tp);
  if (x_grid.size() > 0 && is_scalar_family(spec.family)) {
    // Best predictor (and for the quadratic family the variance bound) along a grid.
    Json rows = Json::array();
    const std::optional<double> bound_k0 = k0 ? k0 : spec.k0;
    for (Eigen::Index i = 0; i < x_grid.size(); ++i) {
      const Vector x = Vector::Constant(1, x_grid(i));
      Json row = {{"x", x_grid(i)}, {"best_predictor", best_predictor(tp, Vector::Zero(spec.q()), x)(0)}};
      if (spec.family == Family::quadratic && bound_k0) {
        const QuadraticVariance qv = transform_quadratic_variance(spec, x_grid(i), *bound_k0);
        row["var_u_given_x"] = qv.var_u_given_x;
        row["m_u2"] = qv.m_u2;
        row["G"] = qv.G;
        row["bound"] = qv.bound;
      }
      rows.push_back(row);
    }
    j["grid"] = rows;
  }
  const std::string text = dump_json(j);
  if (!opt.out.empty() || cfg.contains("out")) write_text_file((fs::path(output_dir(opt, cfg)) / "transform.json").string(), text);
  std::cout << text;
  return kOk;
}

struct PointRequest {
  Vector z0;
  Vector x0;
};

int cmd_fit_predict(const Options& opt) {
  const Json cfg = load_config(opt.config);
  struct Plan {
    Dataset data;
    std::optional<ModelSpec> spec;
    Family family;
    int degree = 1;
    int harmonics = 1;
    std::vector<PointRequest> points;
    std::vector<double> alphas;
    std::vector<RegionKind> regions;
    std::optional<double> k0;
    bool purely_normal = false;
    std::optional<Matrix> sigma_eps_delta;
  };
  const Plan plan = configure([&] {
    require_keys(cfg,
                 {"data", "family", "degree", "harmonics", "points", "alphas", "regions", "k0", "purely_normal",
                  "sigma_eps_delta", "out"},
                 "fit-predict config");
    if (!cfg.contains("data") || !cfg["data"].is_string()) throw ConfigError("fit-predict config needs 'data' (path)");
    Plan p;
    const fs::path data_path = cfg["data"].get<std::string>();
    if (data_path.extension() == ".json") {
      const Json side = read_json_file(data_path.string());
      require_keys(side, {"schema_version", "csv", "n", "seed", "spec"}, "dataset sidecar");
      p.spec = spec_from_json(side.at("spec"));
      p.data = dataset_from_csv(read_text_file((data_path.parent_path() / side.at("csv").get<std::string>()).string()));
      p.data.seed = side.value("seed", std::uint64_t{0});
    } else {
      p.data = dataset_from_csv(read_text_file(data_path.string()));
    }
    if (cfg.contains("family")) {
      p.family = family_from_string(cfg["family"].get<std::string>());
    } else if (p.spec) {
      p.family = p.spec->family;
    } else {
      throw ConfigError("'family' is required when 'data' is a bare CSV");
    }
    if (p.spec && p.spec->family == Family::polynomial) p.degree = p.spec->as<PolynomialParams>().degree();
    if (p.spec && p.spec->family == Family::trigonometric) p.harmonics = p.spec->as<TrigParams>().harmonics();
    if (p.family == Family::quadratic) p.degree = 2;
    if (cfg.contains("degree")) p.degree = cfg["degree"].get<int>();
    if (cfg.contains("harmonics")) p.harmonics = cfg["harmonics"].get<int>();
    if (cfg.contains("points")) {
      for (const auto& pt : cfg["points"]) {
        require_keys(pt, {"z0", "x0"}, "fit-predict point");
        if (!pt.contains("x0")) throw ConfigError("every point needs 'x0'");
        p.points.push_back({pt.contains("z0") ? vector_from_json(pt["z0"], "z0") : Vector(0), vector_from_json(pt["x0"], "x0")});
      }
    }
    p.alphas = cfg.value("alphas", std::vector<double>{0.05});
    for (const auto& name : cfg.value("regions", std::vector<std::string>{})) p.regions.push_back(region_kind_from_string(name));
    if (cfg.contains("k0")) p.k0 = cfg["k0"].get<double>();
    else if (p.spec) p.k0 = p.spec->k0;
    p.purely_normal = cfg.value("purely_normal", false);
    if (cfg.contains("sigma_eps_delta")) p.sigma_eps_delta = matrix_from_json(cfg["sigma_eps_delta"], "sigma_eps_delta");
    else if (p.spec) p.sigma_eps_delta = p.spec->errors.sigma_eps_delta;
    return p;
  });

  FittedModel fit;
  if (is_nonlinear_family(plan.family)) {
    NlsOptions nls;
    nls.harmonics = plan.harmonics;
    fit = nls_fit(plan.data, plan.family, nls);
  } else {
    fit = ols_fit(plan.data, plan.family, plan.degree);
  }

  Json out;
  out["schema_version"] = kSchemaVersion;
  out["fit"] = fit_to_json(fit);
  Json preds = Json::array();
  for (const auto& pt : plan.points) {
    const Prediction ind = predict_individual(fit, pt.z0, pt.x0);
    Json entry;
    entry["individual"] = prediction_to_json(ind);
    if (plan.sigma_eps_delta && !is_nonlinear_family(plan.family)) {
      entry["mean"] = prediction_to_json(predict_mean(fit, pt.z0, pt.x0, *plan.sigma_eps_delta));
    }
    Json regions = Json::array();
    for (double alpha : plan.alphas) {
      for (RegionKind kind : plan.regions) {
        switch (kind) {
          case RegionKind::chebyshev: regions.push_back(region_to_json(region_chebyshev(fit, ind, alpha))); break;
          case RegionKind::chisquare:
            regions.push_back(region_to_json(region_chisquare(fit, ind, alpha, plan.purely_normal)));
            break;
          case RegionKind::quadratic:
            if (!plan.k0) throw InvalidInput("quadratic region requested without k0");
            regions.push_back(region_to_json(region_quadratic(fit, ind, alpha, *plan.k0)));
            break;
        }
      }
    }
    entry["regions"] = regions;
    preds.push_back(entry);
  }
  out["predictions"] = preds;
  const std::string text = dump_json(out);
  if (!opt.out.empty() || cfg.contains("out")) {
    write_text_file((fs::path(output_dir(opt, cfg)) / "fit_predict.json").string(), text);
  }
  std::cout << text;
  return kOk;
}

int cmd_experiment(const Options& opt) {
  const Json cfg = load_config(opt.config);
  auto [ecfg, thresholds] = configure([&] {
    Json body = cfg;
    if (body.contains("out")) {
      if (!body["out"].is_string()) throw ConfigError("'out' must be a string");
      body.erase("out");
    }
    ExperimentConfig c = config_from_json(body);
    const CheckThresholds t = body.contains("check") ? thresholds_from_json(body["check"]) : CheckThresholds{};
    if (opt.seed) c.master_seed = *opt.seed;
    c.threads = opt.threads ? *opt.threads : (cfg.contains("threads") ? c.threads : default_threads());
    validate_config(c);
    return std::pair{c, t};
  });
  const std::string dir = output_dir(opt, cfg);

  const auto start = std::chrono::steady_clock::now();
  const McReport report = run_experiment(ecfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_text_file((fs::path(dir) / "report.json").string(), dump_json(report_to_json(report)));
  write_text_file((fs::path(dir) / "report.csv").string(), report_to_csv(report));
  // Timing stays out of the report files so that they are byte-reproducible.
  std::cerr << fmt::format("{} finished in {:.2f} s ({} failures)\n", to_string(report.kind), seconds, report.failures);
  std::cout << fmt::format("wrote {}/report.json and {}/report.csv\n", dir, dir);

  if (!opt.check) return kOk;
  bool all = true;
  for (const auto& c : evaluate_checks(report, thresholds)) {
    std::cout << fmt::format("[{}] {}: {}\n", c.passed ? "PASS" : "FAIL", c.name, c.detail);
    all = all && c.passed;
  }
  return all ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prediction under errors-in-variables: simulation, transforms, fitting, Monte Carlo checks"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  int threads = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON config file")->required();
    sub->add_option("--out", opt.out, "output directory");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "draw a dataset (CSV + JSON sidecar)");
  add_common(simulate);
  simulate->add_option("--seed", seed, "override the config seed");
  CLI::App* transform_cmd = app.add_subcommand("transform", "observable-regression parameters of a spec");
  add_common(transform_cmd);
  CLI::App* fit = app.add_subcommand("fit-predict", "fit a dataset, predict and build confidence regions");
  add_common(fit);
  CLI::App* experiment = app.add_subcommand("experiment", "run a Monte Carlo experiment");
  add_common(experiment);
  experiment->add_option("--seed", seed, "override master_seed");
  experiment->add_flag("--check", opt.check, "evaluate the config's check thresholds; exit 1 on failure");
  experiment->add_option("--threads", threads, "worker threads (0 = all cores; default from EIVPRED_THREADS)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  if ((simulate->parsed() && simulate->count("--seed") > 0) || (experiment->parsed() && experiment->count("--seed") > 0)) {
    opt.seed = seed;
  }
  if (experiment->parsed() && experiment->count("--threads") > 0) opt.threads = threads;

  try {
    if (simulate->parsed()) return cmd_simulate(opt);
    if (transform_cmd->parsed()) return cmd_transform(opt);
    if (fit->parsed()) return cmd_fit_predict(opt);
    return cmd_experiment(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
