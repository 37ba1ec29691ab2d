#include "eivpred/io.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "eivpred/errors.hpp"

namespace eiv {

namespace {

void dump_value(const Json& j, int indent, int depth, std::string& out) {
  const auto newline = [&](int level) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * level), ' ');
  };
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        dump_value(it.value(), indent, depth + 1, out);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line; nested structures are broken up.
      const bool flat = std::none_of(j.begin(), j.end(), [](const Json& v) { return v.is_structured(); });
      out += '[';
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += flat && indent >= 0 ? ", " : ",";
        first = false;
        if (!flat) newline(depth + 1);
        dump_value(v, indent, depth + 1, out);
      }
      if (!flat) newline(depth);
      out += ']';
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? fmt::format("{:.17g}", v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

[[noreturn]] void spec_fail(const std::string& msg) { throw SpecError("spec: " + msg); }

double number(const Json& j, const std::string& what) {
  if (!j.is_number()) spec_fail(what + " must be a number");
  return j.get<double>();
}

const Json& member(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) spec_fail(where + " is missing '" + key + "'");
  return j.at(key);
}

ZDistribution::Kind z_kind_from_string(const std::string& s) {
  if (s == "gaussian") return ZDistribution::Kind::gaussian;
  if (s == "uniform") return ZDistribution::Kind::uniform;
  if (s == "two-point-mixture") return ZDistribution::Kind::two_point_mixture;
  spec_fail("unknown z kind '" + s + "'");
}

Matrix shaped(Matrix a, Eigen::Index rows, Eigen::Index cols, const char* what) {
  // An empty JSON array carries no shape; give it the one implied by the dimensions.
  if (a.size() == 0) return Matrix(rows, cols);
  if (a.rows() != rows || a.cols() != cols) {
    spec_fail(fmt::format("{} must be {} x {}, got {} x {}", what, rows, cols, a.rows(), a.cols()));
  }
  return a;
}

}  // namespace

std::string dump_json(const Json& j, int indent) {
  std::string out;
  dump_value(j, indent, 0, out);
  if (indent >= 0) out += '\n';
  return out;
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json to_json(const Matrix& a) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) out.push_back(to_json(Vector(a.row(i).transpose())));
  return out;
}

Vector vector_from_json(const Json& j, const std::string& what) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) spec_fail(what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], what);
  return v;
}

Matrix matrix_from_json(const Json& j, const std::string& what) {
  // A bare number is accepted as a 1x1 matrix.
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array()) spec_fail(what + " must be an array of rows");
  if (j.empty()) return Matrix(0, 0);
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix a(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) spec_fail(what + " rows must be arrays of equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(j[r][c], what);
    }
  }
  return a;
}

void require_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw SpecError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known = known || it.key() == k;
    if (!known) throw SpecError(where + ": unknown key '" + it.key() + "'");
  }
}

Json spec_to_json(const ModelSpec& spec) {
  Json j;
  j["family"] = to_string(spec.family);
  Json p;
  std::visit(
      [&p](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LinearParams>) {
          p["b"] = to_json(v.b);
          p["C"] = to_json(v.C);
          p["B"] = to_json(v.B);
        } else if constexpr (std::is_same_v<T, PolynomialParams>) {
          p["c"] = to_json(v.c);
          p["beta0"] = v.beta0;
          p["beta"] = to_json(v.beta);
        } else if constexpr (std::is_same_v<T, ExponentialParams>) {
          p["beta"] = v.beta;
          p["lambda"] = v.lambda;
        } else if constexpr (std::is_same_v<T, TrigParams>) {
          p["a0"] = v.a0;
          p["a"] = to_json(v.a);
          p["b"] = to_json(v.b);
          p["omega"] = v.omega;
        } else {
          p["beta"] = v.beta;
          p["a"] = v.a;
        }
      },
      spec.params);
  j["params"] = p;
  j["xi_mean"] = to_json(spec.xi_mean);
  j["xi_cov"] = to_json(spec.xi_cov);
  if (spec.q() > 0) {
    Json z;
    z["kind"] = to_string(spec.z.kind);
    z["mean"] = to_json(spec.z.mean);
    if (spec.z.kind != ZDistribution::Kind::uniform) z["cov"] = to_json(spec.z.cov);
    if (spec.z.kind == ZDistribution::Kind::uniform) z["half_width"] = to_json(spec.z.half_width);
    if (spec.z.kind == ZDistribution::Kind::two_point_mixture) z["shift"] = to_json(spec.z.shift);
    j["z"] = z;
  }
  Json e;
  e["sigma_e"] = to_json(spec.errors.sigma_e);
  e["sigma_eps"] = to_json(spec.errors.sigma_eps);
  e["sigma_delta"] = to_json(spec.errors.sigma_delta);
  e["sigma_eps_delta"] = to_json(spec.errors.sigma_eps_delta);
  j["errors"] = e;
  if (spec.k0) j["k0"] = *spec.k0;
  return j;
}

ModelSpec spec_from_json(const Json& j) {
  require_keys(j, {"family", "params", "xi_mean", "xi_cov", "z", "errors", "k0"}, "spec");
  ModelSpec spec;
  const Json& fam = member(j, "family", "spec");
  if (!fam.is_string()) spec_fail("family must be a string");
  try {
    spec.family = family_from_string(fam.get<std::string>());
  } catch (const Error& e) {
    spec_fail(e.what());
  }
  spec.xi_mean = vector_from_json(member(j, "xi_mean", "spec"), "xi_mean");
  const Eigen::Index m = spec.xi_mean.size();
  spec.xi_cov = shaped(matrix_from_json(member(j, "xi_cov", "spec"), "xi_cov"), m, m, "xi_cov");

  const Json& err = member(j, "errors", "spec");
  require_keys(err, {"sigma_e", "sigma_eps", "sigma_delta", "sigma_eps_delta"}, "spec.errors");
  spec.errors.sigma_e = matrix_from_json(member(err, "sigma_e", "spec.errors"), "sigma_e");
  const Eigen::Index d = spec.errors.sigma_e.rows();
  if (d == 0) spec_fail("errors.sigma_e must be a non-empty d x d matrix");
  spec.errors.sigma_delta = shaped(matrix_from_json(member(err, "sigma_delta", "spec.errors"), "sigma_delta"), m, m, "sigma_delta");
  spec.errors.sigma_eps =
      err.contains("sigma_eps") ? shaped(matrix_from_json(err["sigma_eps"], "sigma_eps"), d, d, "sigma_eps") : Matrix::Zero(d, d);
  spec.errors.sigma_eps_delta = err.contains("sigma_eps_delta")
                                    ? shaped(matrix_from_json(err["sigma_eps_delta"], "sigma_eps_delta"), d, m, "sigma_eps_delta")
                                    : Matrix::Zero(d, m);

  if (j.contains("z")) {
    const Json& z = j["z"];
    require_keys(z, {"kind", "mean", "cov", "half_width", "shift"}, "spec.z");
    const Json& kind = member(z, "kind", "spec.z");
    if (!kind.is_string()) spec_fail("z.kind must be a string");
    spec.z.kind = z_kind_from_string(kind.get<std::string>());
    spec.z.mean = vector_from_json(member(z, "mean", "spec.z"), "z.mean");
    const Eigen::Index q = spec.z.mean.size();
    spec.z.cov = z.contains("cov") ? shaped(matrix_from_json(z["cov"], "z.cov"), q, q, "z.cov") : Matrix::Zero(q, q);
    spec.z.half_width = z.contains("half_width") ? vector_from_json(z["half_width"], "z.half_width") : Vector::Zero(q);
    spec.z.shift = z.contains("shift") ? vector_from_json(z["shift"], "z.shift") : Vector::Zero(q);
  } else {
    spec.z.mean = Vector(0);
    spec.z.cov = Matrix(0, 0);
    spec.z.half_width = Vector(0);
    spec.z.shift = Vector(0);
  }
  const Eigen::Index q = spec.q();

  const Json& p = member(j, "params", "spec");
  switch (spec.family) {
    case Family::linear_mv: {
      require_keys(p, {"b", "C", "B"}, "spec.params");
      LinearParams lp;
      lp.b = vector_from_json(member(p, "b", "spec.params"), "b");
      lp.C = p.contains("C") ? shaped(matrix_from_json(p["C"], "C"), q, d, "C") : Matrix::Zero(q, d);
      lp.B = shaped(matrix_from_json(member(p, "B", "spec.params"), "B"), m, d, "B");
      spec.params = lp;
      break;
    }
    case Family::polynomial:
    case Family::quadratic: {
      require_keys(p, {"c", "beta0", "beta"}, "spec.params");
      PolynomialParams pp;
      pp.c = p.contains("c") ? vector_from_json(p["c"], "c") : Vector::Zero(q);
      if (pp.c.size() == 0) pp.c = Vector::Zero(q);
      pp.beta0 = p.contains("beta0") ? number(p["beta0"], "beta0") : 0.0;
      pp.beta = vector_from_json(member(p, "beta", "spec.params"), "beta");
      spec.params = pp;
      break;
    }
    case Family::exponential: {
      require_keys(p, {"beta", "lambda"}, "spec.params");
      spec.params = ExponentialParams{number(member(p, "beta", "spec.params"), "beta"),
                                      number(member(p, "lambda", "spec.params"), "lambda")};
      break;
    }
    case Family::trigonometric: {
      require_keys(p, {"a0", "a", "b", "omega"}, "spec.params");
      TrigParams tp;
      tp.a0 = p.contains("a0") ? number(p["a0"], "a0") : 0.0;
      tp.a = vector_from_json(member(p, "a", "spec.params"), "a");
      tp.b = vector_from_json(member(p, "b", "spec.params"), "b");
      tp.omega = number(member(p, "omega", "spec.params"), "omega");
      spec.params = tp;
      break;
    }
    case Family::absolute_value: {
      require_keys(p, {"beta", "a"}, "spec.params");
      spec.params = AbsParams{number(member(p, "beta", "spec.params"), "beta"), number(member(p, "a", "spec.params"), "a")};
      break;
    }
  }
  if (j.contains("k0")) spec.k0 = number(j["k0"], "k0");
  return spec;
}

Json transformed_to_json(const TransformedParams& tp) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["family"] = to_string(tp.family);
  std::visit(
      [&j](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LinearTransformed>) {
          j["b_x"] = to_json(v.b_x);
          j["C"] = to_json(v.C);
          j["B_x"] = to_json(v.B_x);
          j["sigma_u"] = to_json(v.sigma_u.mat());
        } else if constexpr (std::is_same_v<T, PolynomialTransformed>) {
          j["c"] = to_json(v.c);
          j["beta0_x"] = v.beta0_x;
          j["beta_x"] = to_json(v.beta_x);
          for (Eigen::Index i = 0; i < v.beta_x.size(); ++i) j[fmt::format("beta{}_x", i + 1)] = v.beta_x(i);
          j["K"] = v.K;
          j["a"] = v.a;
          j["gamma_var"] = v.gamma_var;
          j["f"] = v.f;
        } else if constexpr (std::is_same_v<T, ExponentialTransformed>) {
          j["beta_x"] = v.beta_x;
          j["lambda_x"] = v.lambda_x;
        } else if constexpr (std::is_same_v<T, TrigTransformed>) {
          j["a0_x"] = v.a0_x;
          j["a_x"] = to_json(v.a_x);
          j["b_x"] = to_json(v.b_x);
          j["omega_x"] = v.omega_x;
          j["damping"] = to_json(v.damping);
          j["phase"] = to_json(v.phase);
        } else {
          j["beta_x"] = v.beta_x;
          j["k_x"] = v.k_x;
          j["b_x"] = v.b_x;
        }
      },
      tp.params);
  return j;
}

Json fit_to_json(const FittedModel& fit) {
  Json j;
  j["family"] = to_string(fit.family);
  j["n"] = fit.n;
  switch (fit.family) {
    case Family::linear_mv:
      j["b_x"] = to_json(fit.intercept);
      j["C"] = to_json(fit.C());
      j["B_x"] = to_json(fit.B_x());
      j["sigma_u"] = to_json(fit.sigma_u.mat());
      break;
    case Family::polynomial:
    case Family::quadratic:
      j["degree"] = fit.degree;
      j["c"] = to_json(Vector(fit.C().col(0)));
      j["beta0_x"] = fit.intercept(0);
      j["beta_x"] = to_json(Vector(fit.B_x().col(0)));
      j["m_u2"] = fit.m_u2();
      break;
    case Family::exponential:
      j["beta_x"] = fit.theta(0);
      j["lambda_x"] = fit.theta(1);
      j["m_u2"] = fit.m_u2();
      break;
    case Family::trigonometric: {
      const int h = fit.harmonics;
      j["harmonics"] = h;
      j["a0_x"] = fit.theta(0);
      j["a_x"] = to_json(Vector(fit.theta.segment(1, h)));
      j["b_x"] = to_json(Vector(fit.theta.segment(1 + h, h)));
      j["omega_x"] = fit.theta(2 * h + 1);
      j["m_u2"] = fit.m_u2();
      break;
    }
    case Family::absolute_value:
      j["beta_x"] = fit.theta(0);
      j["k_x"] = fit.theta(1);
      j["b_x"] = fit.theta(2);
      j["m_u2"] = fit.m_u2();
      break;
  }
  j["mu_hat"] = to_json(fit.moments.mu_hat);
  j["sigma_x_hat"] = to_json(fit.moments.sigma_x_hat);
  Json diag;
  diag["condition_number"] = fit.condition_number;
  diag["objective"] = fit.objective;
  diag["converged"] = fit.converged;
  diag["iterations"] = fit.iterations;
  diag["starts_converged"] = fit.starts_converged;
  diag["warnings"] = fit.warnings;
  j["diagnostics"] = diag;
  return j;
}

Json prediction_to_json(const Prediction& p) {
  Json j;
  j["kind"] = p.kind == PredictionKind::individual ? "individual" : "mean";
  j["z0"] = to_json(p.z0);
  j["x0"] = to_json(p.x0);
  j["point"] = to_json(p.point);
  return j;
}

Json region_to_json(const ConfidenceRegion& r) {
  Json j;
  j["kind"] = to_string(r.kind);
  j["alpha"] = r.alpha;
  j["center"] = to_json(r.center);
  if (r.kind == RegionKind::quadratic) {
    j["half_width"] = r.threshold;
    j["k0"] = r.k0;
  } else {
    j["threshold"] = r.threshold;
    j["shape"] = to_json(r.shape);
  }
  if (r.kind == RegionKind::chisquare) j["purely_normal_asserted"] = r.purely_normal_asserted;
  j["degenerate"] = r.degenerate;
  j["warnings"] = r.warnings;
  return j;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw InvalidInput("write to '" + path + "' failed");
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw SpecError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::string dataset_to_csv(const Dataset& data, bool include_hidden) {
  std::vector<std::pair<std::string, const Matrix*>> blocks = {{"y", &data.y}, {"z", &data.z}, {"x", &data.x}};
  if (include_hidden && data.hidden) {
    blocks.emplace_back("hidden_xi", &data.hidden->xi);
    blocks.emplace_back("hidden_delta", &data.hidden->delta);
    blocks.emplace_back("hidden_e", &data.hidden->e);
    blocks.emplace_back("hidden_eps", &data.hidden->eps);
  }
  std::string out;
  bool first = true;
  for (const auto& [name, m] : blocks) {
    for (Eigen::Index c = 0; c < m->cols(); ++c) {
      if (!first) out += ',';
      first = false;
      out += fmt::format("{}_{}", name, c + 1);
    }
  }
  out += '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    first = true;
    for (const auto& block : blocks) {
      const Matrix& m = *block.second;
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (!first) out += ',';
        first = false;
        out += fmt::format("{:.17g}", m(i, c));
      }
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("dataset CSV is empty");
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  const auto prefix_count = [&](const std::string& prefix) {
    Eigen::Index count = 0;
    for (const auto& h : header) {
      if (h.rfind(prefix + "_", 0) == 0 && h.find_first_not_of("0123456789", prefix.size() + 1) == std::string::npos) {
        ++count;
      }
    }
    return count;
  };
  const Eigen::Index d = prefix_count("y");
  const Eigen::Index q = prefix_count("z");
  const Eigen::Index m = prefix_count("x");
  const Eigen::Index hm = prefix_count("hidden_xi");
  if (d == 0 || m == 0) throw InvalidInput("dataset CSV needs y_* and x_* columns");
  const bool hidden = hm > 0;
  const Eigen::Index width = d + q + m + (hidden ? 2 * m + 2 * d : 0);
  if (static_cast<Eigen::Index>(header.size()) != width) {
    throw InvalidInput(fmt::format("dataset CSV header has {} columns, expected {}", header.size(), width));
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(width));
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw InvalidInput(fmt::format("dataset CSV line {}: malformed number", line_no));
      row.push_back(v);
      if (*end == ',') {
        p = end + 1;
      } else if (*end == '\0' || *end == '\r') {
        break;
      } else {
        throw InvalidInput(fmt::format("dataset CSV line {}: unexpected character", line_no));
      }
    }
    if (static_cast<Eigen::Index>(row.size()) != width) {
      throw InvalidInput(fmt::format("dataset CSV line {}: {} fields, expected {}", line_no, row.size(), width));
    }
    rows.push_back(std::move(row));
  }

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Matrix all(n, width);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < width; ++c) all(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  }
  Dataset data;
  Eigen::Index col = 0;
  const auto take = [&](Eigen::Index k) {
    Matrix block = all.middleCols(col, k);
    col += k;
    return block;
  };
  data.y = take(d);
  data.z = take(q);
  data.x = take(m);
  if (hidden) {
    HiddenDraws h;
    h.xi = take(m);
    h.delta = take(m);
    h.e = take(d);
    h.eps = take(d);
    data.hidden = std::move(h);
  }
  return data;
}

Json dataset_sidecar(const ModelSpec& spec, const Dataset& data, const std::string& csv_name) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["csv"] = csv_name;
  j["n"] = data.n();
  j["seed"] = data.seed;
  j["spec"] = spec_to_json(spec);
  return j;
}

}  // namespace eiv
