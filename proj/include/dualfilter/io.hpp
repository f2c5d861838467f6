#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include <json.hpp>

#include "dualfilter/models.hpp"

namespace dualfilter {

using Json = nlohmann::json;

/// Rectangular array of arrays -> matrix; ragged or non-numeric input throws.
Mat matrix_from_json(const Json& j, const std::string& field);
Vec vector_from_json(const Json& j, const std::string& field);
Json to_json(const Mat& m);
Json to_json(const Vec& v);

using AnyModel = std::variant<HmmModel, LinearGaussianModel>;

/// {"type": "hmm", "rate": [[..]], "obs": [[..]], "prior": [..]} or
/// {"type": "linear_gaussian", "a_mat", "h_mat", "sigma", "mean0", "cov0"}.
/// The model is validated before it is returned.
AnyModel model_from_json(const Json& j);
Json model_to_json(const AnyModel& model);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace dualfilter
