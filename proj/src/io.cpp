#include "dualfilter/io.hpp"

#include <fstream>
#include <stdexcept>

namespace dualfilter {

namespace {

double number_at(const Json& j, const std::string& field) {
  if (!j.is_number()) throw std::invalid_argument(field + ": expected a number");
  return j.get<double>();
}

const Json& require(const Json& j, const char* key) {
  if (!j.contains(key)) throw std::invalid_argument(std::string("model: missing field '") + key + "'");
  return j.at(key);
}

}  // namespace

Mat matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(field + ": expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) throw std::invalid_argument(field + ": rows must be non-empty arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::invalid_argument(field + ": ragged row " + std::to_string(r));
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      out(r, c) = number_at(row[static_cast<std::size_t>(c)], field);
    }
  }
  return out;
}

Vec vector_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(field + ": expected a non-empty array");
  Vec out(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) out(static_cast<Eigen::Index>(i)) = number_at(j[i], field);
  return out;
}

Json to_json(const Mat& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

Json to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

AnyModel model_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("model: expected an object");
  const std::string type = j.value("type", "hmm");
  if (type == "hmm") {
    HmmModel m{matrix_from_json(require(j, "rate"), "rate"), matrix_from_json(require(j, "obs"), "obs"),
               vector_from_json(require(j, "prior"), "prior")};
    require_valid(m);
    return m;
  }
  if (type == "linear_gaussian") {
    LinearGaussianModel m{matrix_from_json(require(j, "a_mat"), "a_mat"), matrix_from_json(require(j, "h_mat"), "h_mat"),
                          matrix_from_json(require(j, "sigma"), "sigma"), vector_from_json(require(j, "mean0"), "mean0"),
                          matrix_from_json(require(j, "cov0"), "cov0")};
    require_valid(m);
    return m;
  }
  throw std::invalid_argument("model: unknown type '" + type + "'");
}

Json model_to_json(const AnyModel& model) {
  if (const auto* h = std::get_if<HmmModel>(&model)) {
    return Json{{"type", "hmm"}, {"rate", to_json(h->rate)}, {"obs", to_json(h->obs)}, {"prior", to_json(h->prior)}};
  }
  const auto& g = std::get<LinearGaussianModel>(model);
  return Json{{"type", "linear_gaussian"}, {"a_mat", to_json(g.a_mat)}, {"h_mat", to_json(g.h_mat)},
              {"sigma", to_json(g.sigma)},  {"mean0", to_json(g.mean0)}, {"cov0", to_json(g.cov0)}};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace dualfilter
