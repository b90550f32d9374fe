#pragma once

// JSON formats for networks and mixtures, plus small CSV helpers.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relu_lawn/data.hpp"
#include "relu_lawn/errors.hpp"
#include "relu_lawn/gaussian_mixture.hpp"
#include "relu_lawn/network.hpp"
#include "relu_lawn/pattern.hpp"

namespace relu_lawn {

using Json = nlohmann::json;

namespace detail {

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vector json_to_vector(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected a 1-D array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(where + "[" + std::to_string(i) + "]: expected a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Matrix json_to_matrix(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw ParseError(where + ": expected a non-empty 2-D array");
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string row_where = where + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != cols) throw ParseError(row_where + ": ragged row");
    m.row(static_cast<Eigen::Index>(i)) = json_to_vector(j[i], row_where).transpose();
  }
  return m;
}

inline const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(where + ": missing field \"" + key + "\"");
  return j.at(key);
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON at byte " + std::to_string(e.byte));
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out << text;
}

}  // namespace detail

inline Json network_to_json(const NetworkParams& net) {
  Json j;
  if (net.activation().kind() == Activation::Kind::relu)
    j["activation"] = "relu";
  else
    j["activation"] = Json{{"leaky_relu", net.activation().negative_slope()}};
  Json layers = Json::array();
  for (const auto& layer : net.layers())
    layers.push_back(Json{{"weight", detail::matrix_to_json(layer.weight)}, {"bias", detail::vector_to_json(layer.bias)}});
  j["layers"] = std::move(layers);
  return j;
}

inline NetworkParams network_from_json(const Json& j, const std::string& where = "network") {
  const Json& act = detail::field(j, "activation", where);
  Activation activation = Activation::relu();
  if (act.is_string()) {
    if (act.get<std::string>() != "relu") throw ParseError(where + ".activation: unknown tag \"" + act.get<std::string>() + "\"");
  } else if (act.is_object() && act.size() == 1 && act.contains("leaky_relu") && act["leaky_relu"].is_number()) {
    try {
      activation = Activation::leaky_relu(act["leaky_relu"].get<double>());
    } catch (const DomainError& e) {
      throw ParseError(where + ".activation.leaky_relu: " + e.what());
    }
  } else {
    throw ParseError(where + ".activation: expected \"relu\" or {\"leaky_relu\": slope}");
  }
  const Json& lj = detail::field(j, "layers", where);
  if (!lj.is_array()) throw ParseError(where + ".layers: expected an array");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < lj.size(); ++l) {
    const std::string lw = where + ".layers[" + std::to_string(l) + "]";
    layers.push_back({detail::json_to_matrix(detail::field(lj[l], "weight", lw), lw + ".weight"),
                      detail::json_to_vector(detail::field(lj[l], "bias", lw), lw + ".bias")});
  }
  try {
    return NetworkParams(std::move(layers), activation);
  } catch (const std::logic_error& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline NetworkParams load_network(const std::filesystem::path& path) {
  return network_from_json(detail::read_json(path), path.string());
}

inline void save_network(const std::filesystem::path& path, const NetworkParams& net) {
  detail::write_text(path, network_to_json(net).dump(1) + "\n");
}

/// Diagonal mixtures store each covariance as the vector of its diagonal.
inline Json gmm_to_json(const GaussianMixture& g) {
  Json j;
  j["weights"] = g.weights();
  j["means"] = Json::array();
  j["covariances"] = Json::array();
  for (std::size_t k = 0; k < g.size(); ++k) {
    j["means"].push_back(detail::vector_to_json(g.mean(k)));
    if (g.kind() == CovarianceKind::diagonal)
      j["covariances"].push_back(detail::vector_to_json(g.covariance(k).diagonal()));
    else
      j["covariances"].push_back(detail::matrix_to_json(g.covariance(k)));
  }
  j["kind"] = g.kind() == CovarianceKind::diagonal ? "diagonal" : "full";
  return j;
}

inline GaussianMixture gmm_from_json(const Json& j, const std::string& where = "mixture") {
  const Json& wj = detail::field(j, "weights", where);
  const Json& mj = detail::field(j, "means", where);
  const Json& cj = detail::field(j, "covariances", where);
  CovarianceKind kind = CovarianceKind::full;
  if (j.contains("kind")) {
    const Json& kj = j["kind"];
    if (kj == "diagonal")
      kind = CovarianceKind::diagonal;
    else if (kj != "full")
      throw ParseError(where + ".kind: expected \"full\" or \"diagonal\"");
  }
  if (!wj.is_array() || !mj.is_array() || !cj.is_array())
    throw ParseError(where + ": weights, means and covariances must be arrays");
  const Vector w = detail::json_to_vector(wj, where + ".weights");
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (std::size_t k = 0; k < mj.size(); ++k)
    means.push_back(detail::json_to_vector(mj[k], where + ".means[" + std::to_string(k) + "]"));
  for (std::size_t k = 0; k < cj.size(); ++k) {
    const std::string cw = where + ".covariances[" + std::to_string(k) + "]";
    if (cj[k].is_array() && !cj[k].empty() && cj[k][0].is_number()) {
      covs.push_back(detail::json_to_vector(cj[k], cw).asDiagonal());
    } else {
      covs.push_back(detail::json_to_matrix(cj[k], cw));
    }
  }
  try {
    return GaussianMixture(std::vector<double>(w.data(), w.data() + w.size()), std::move(means), std::move(covs), kind);
  } catch (const std::logic_error& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline GaussianMixture load_gmm(const std::filesystem::path& path) {
  return gmm_from_json(detail::read_json(path), path.string());
}

inline void save_gmm(const std::filesystem::path& path, const GaussianMixture& g) {
  detail::write_text(path, gmm_to_json(g).dump(1) + "\n");
}

/// Shortest round-trip decimal form, independent of the locale.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Patterns from a CSV whose header has a `pattern_bits` column of 0/1 strings.
inline std::vector<ActivationPattern> read_patterns_csv(const std::filesystem::path& path,
                                                        const std::vector<std::size_t>& widths) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::size_t col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "pattern_bits") col = i;
  if (col == header.size()) throw ParseError(path.string() + ": no pattern_bits column");
  std::vector<ActivationPattern> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; i <= col; ++i)
      if (!std::getline(ss, cell, ',')) throw ParseError(path.string() + ": line " + std::to_string(lineno) + " too short");
    try {
      out.push_back(ActivationPattern::parse(widths, cell));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Dataset as CSV with header x0,...,x{d-1},label.
inline void write_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  std::string text;
  for (std::size_t j = 0; j < d.dim(); ++j) text += "x" + std::to_string(j) + ",";
  text += "label\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.dim(); ++j)
      text += format_double(d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) + ",";
    text += std::to_string(d.labels[i]) + "\n";
  }
  detail::write_text(path, text);
}

inline Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 2 || line.substr(line.rfind(',') + 1) != "label")
    throw ParseError(path.string() + ": header must end with a label column");
  std::vector<std::vector<double>> rows;
  Dataset d;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ": line " + std::to_string(lineno);
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (r.ec != std::errc() || r.ptr != cell.data() + cell.size()) throw ParseError(where + ": bad number \"" + cell + "\"");
      row.push_back(v);
    }
    if (row.size() != cols) throw ParseError(where + ": expected " + std::to_string(cols) + " fields");
    const double label = row.back();
    if (label < 0.0 || label != std::floor(label)) throw ParseError(where + ": label must be a nonnegative integer");
    d.labels.push_back(static_cast<int>(label));
    row.pop_back();
    rows.push_back(std::move(row));
  }
  d.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols - 1));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j + 1 < cols; ++j) d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  int top = 0;
  for (int y : d.labels) top = std::max(top, y);
  d.n_classes = static_cast<std::size_t>(top + 1);
  return d;
}

}  // namespace relu_lawn
