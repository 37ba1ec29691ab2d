#pragma once

#include <string>

#include <json.hpp>

#include "eivpred/estimators.hpp"
#include "eivpred/models.hpp"
#include "eivpred/predictors.hpp"
#include "eivpred/transform.hpp"

namespace eiv {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Serialises with every floating-point number printed to 17 significant
/// digits, so parsing the text back recovers the same doubles bit for bit.
/// Non-finite numbers become null.
std::string dump_json(const Json& j, int indent = 2);

Json to_json(const Vector& v);
Json to_json(const Matrix& a);  // array of rows
Vector vector_from_json(const Json& j, const std::string& what);
Matrix matrix_from_json(const Json& j, const std::string& what);

/// Throws SpecError when `j` is not an object or carries a key outside `allowed`.
void require_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where);

Json spec_to_json(const ModelSpec& spec);
/// Strict parser: unknown keys and malformed shapes throw SpecError. Optional
/// blocks (z, sigma_eps, sigma_eps_delta, k0) default to "absent" / zero.
ModelSpec spec_from_json(const Json& j);

Json transformed_to_json(const TransformedParams& tp);
Json fit_to_json(const FittedModel& fit);
Json prediction_to_json(const Prediction& p);
Json region_to_json(const ConfidenceRegion& r);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
Json read_json_file(const std::string& path);

/// CSV with columns y_1..y_d, z_1..z_q, x_1..x_m and, when present and
/// requested, hidden_xi_*, hidden_delta_*, hidden_e_*, hidden_eps_*.
std::string dataset_to_csv(const Dataset& data, bool include_hidden = true);
Dataset dataset_from_csv(const std::string& text);

/// Sidecar describing a dataset: schema version, spec, seed, n, csv file name.
Json dataset_sidecar(const ModelSpec& spec, const Dataset& data, const std::string& csv_name);

}  // namespace eiv
