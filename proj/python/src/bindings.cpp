#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eivpred/errors.hpp"
#include "eivpred/estimators.hpp"
#include "eivpred/io.hpp"
#include "eivpred/montecarlo.hpp"
#include "eivpred/oracle.hpp"
#include "eivpred/predictors.hpp"
#include "eivpred/transform.hpp"

namespace py = pybind11;
using namespace eiv;

namespace {

// Structured values cross the boundary as JSON text; the Python package wraps
// these functions with json.dumps / json.loads.
ModelSpec parse_spec(const std::string& text) {
  try {
    return spec_from_json(Json::parse(text));
  } catch (const Json::exception& e) {
    throw SpecError(std::string("spec: ") + e.what());
  }
}

Dataset make_dataset(const Matrix& y, const Matrix& z, const Matrix& x) {
  if (y.rows() != x.rows() || z.rows() != x.rows()) throw DimensionError("y, z and x need the same number of rows");
  Dataset d;
  d.y = y;
  d.z = z;
  d.x = x;
  return d;
}

ConfidenceRegion build_region(const FittedModel& fit, const std::string& kind, double alpha, const Vector& z0,
                              const Vector& x0, std::optional<double> k0, bool purely_normal) {
  const Prediction p = predict_individual(fit, z0, x0);
  switch (region_kind_from_string(kind)) {
    case RegionKind::chebyshev: return region_chebyshev(fit, p, alpha);
    case RegionKind::chisquare: return region_chisquare(fit, p, alpha, purely_normal);
    case RegionKind::quadratic:
      if (!k0) throw InvalidInput("quadratic region needs k0");
      return region_quadratic(fit, p, alpha, *k0);
  }
  throw InvalidInput("unknown region kind");
}

}  // namespace

PYBIND11_MODULE(_eivpred, m) {
  m.doc() = "Prediction in errors-in-variables regression models";
  m.attr("__version__") = EIVPRED_VERSION;

  static py::exception<Error> base(m, "EivError", PyExc_RuntimeError);
  py::register_exception<SpecError>(m, "SpecError", base.ptr());
  py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<InsufficientData>(m, "InsufficientData", base.ptr());
  py::register_exception<NonConvergence>(m, "NonConvergence", base.ptr());
  py::register_exception<SingularCovariance>(m, "SingularCovariance", base.ptr());

  m.def("validate", [](const std::string& spec) { return validate(parse_spec(spec)); }, py::arg("spec_json"));

  m.def("transform", [](const std::string& spec) { return dump_json(transformed_to_json(transform(parse_spec(spec)))); },
        py::arg("spec_json"));

  m.def(
      "best_predictor",
      [](const std::string& spec, const Vector& z, const Vector& x) { return best_predictor(transform(parse_spec(spec)), z, x); },
      py::arg("spec_json"), py::arg("z"), py::arg("x"));

  m.def(
      "conditional_expectation",
      [](const std::string& spec, const Vector& z, const Vector& x, int nodes) {
        return conditional_expectation(parse_spec(spec), z, x, nodes);
      },
      py::arg("spec_json"), py::arg("z"), py::arg("x"), py::arg("nodes") = 64);

  m.def(
      "simulate",
      [](const std::string& spec, std::int64_t n, std::uint64_t seed) {
        ModelSpec s = parse_spec(spec);
        require_valid(s);
        Dataset d;
        {
          py::gil_scoped_release release;
          d = sample(s, n, seed);
        }
        py::dict out;
        out["y"] = d.y;
        out["z"] = d.z;
        out["x"] = d.x;
        out["xi"] = d.hidden->xi;
        out["delta"] = d.hidden->delta;
        return out;
      },
      py::arg("spec_json"), py::arg("n"), py::arg("seed"));

  py::class_<FittedModel>(m, "FittedModel")
      .def_property_readonly("family", [](const FittedModel& f) { return to_string(f.family); })
      .def_property_readonly("n", [](const FittedModel& f) { return f.n; })
      .def_property_readonly("intercept", [](const FittedModel& f) { return f.intercept; })
      .def_property_readonly("slopes", [](const FittedModel& f) { return f.slopes; })
      .def_property_readonly("theta", [](const FittedModel& f) { return f.theta; })
      .def_property_readonly("sigma_u", [](const FittedModel& f) { return f.sigma_u.mat(); })
      .def("to_json", [](const FittedModel& f) { return dump_json(fit_to_json(f)); })
      .def(
          "predict", [](const FittedModel& f, const Vector& z0, const Vector& x0) { return predict_individual(f, z0, x0).point; },
          py::arg("z0"), py::arg("x0"))
      .def(
          "predict_mean",
          [](const FittedModel& f, const Vector& z0, const Vector& x0, const Matrix& sed) {
            return predict_mean(f, z0, x0, sed).point;
          },
          py::arg("z0"), py::arg("x0"), py::arg("sigma_eps_delta"))
      .def(
          "region",
          [](const FittedModel& f, const std::string& kind, double alpha, const Vector& z0, const Vector& x0,
             std::optional<double> k0, bool purely_normal) {
            return dump_json(region_to_json(build_region(f, kind, alpha, z0, x0, k0, purely_normal)));
          },
          py::arg("kind"), py::arg("alpha"), py::arg("z0"), py::arg("x0"), py::arg("k0") = py::none(),
          py::arg("purely_normal") = false)
      .def(
          "contains",
          [](const FittedModel& f, const std::string& kind, double alpha, const Vector& z0, const Vector& x0,
             const Vector& h, std::optional<double> k0, bool purely_normal) {
            return region_contains(build_region(f, kind, alpha, z0, x0, k0, purely_normal), h);
          },
          py::arg("kind"), py::arg("alpha"), py::arg("z0"), py::arg("x0"), py::arg("h"), py::arg("k0") = py::none(),
          py::arg("purely_normal") = false);

  m.def(
      "fit",
      [](const Matrix& y, const Matrix& z, const Matrix& x, const std::string& family, int degree, int harmonics) {
        const Dataset d = make_dataset(y, z, x);
        const Family f = family_from_string(family);
        py::gil_scoped_release release;
        if (is_nonlinear_family(f)) {
          NlsOptions opts;
          opts.harmonics = harmonics;
          return nls_fit(d, f, opts);
        }
        return ols_fit(d, f, f == Family::quadratic ? 2 : degree);
      },
      py::arg("y"), py::arg("z"), py::arg("x"), py::arg("family"), py::arg("degree") = 1, py::arg("harmonics") = 1);

  m.def(
      "run_experiment",
      [](const std::string& config, int threads) {
        Json j;
        try {
          j = Json::parse(config);
        } catch (const Json::exception& e) {
          throw SpecError(std::string("experiment config: ") + e.what());
        }
        j.erase("check");
        ExperimentConfig cfg = config_from_json(j);
        cfg.threads = threads;
        McReport report;
        {
          py::gil_scoped_release release;
          report = run_experiment(cfg);
        }
        return dump_json(report_to_json(report));
      },
      py::arg("config_json"), py::arg("threads") = 1);
}
