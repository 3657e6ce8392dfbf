#pragma once

#include <cstdint>
#include <fstream>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "activeid/error.hpp"
#include "activeid/linalg.hpp"
#include "activeid/lti.hpp"
#include "activeid/random.hpp"

namespace activeid {

/// Unknown scenario names and unreadable scenario files.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace scenarios {

/// Two-state pair whose only difference is the (0,1) entry of A, padded with
/// d identity-driven integrator channels.
inline Scenario example_3_1(int d = 0, double sigma_w = 1.0, double gamma_u = 1.0) {
  detail::require(d >= 0, "d must be nonnegative");
  const int n = 2 + d;
  Matrix a_star = Matrix::Zero(n, n);
  a_star(0, 1) = 0.1;
  a_star.bottomRightCorner(d, d).setIdentity();
  Matrix a_1 = a_star;
  a_1(0, 1) = 0.2;
  Matrix b = Matrix::Zero(n, 1 + d);
  b(1, 0) = 1.0;
  b.bottomRightCorner(d, d).setIdentity();
  return Scenario({LinearSystem(a_star, b), LinearSystem(a_1, b)}, NoiseModel::isotropic(n, sigma_w), gamma_u);
}

inline Matrix section5_b() {
  Matrix b = Matrix::Zero(3, 2);
  b(1, 0) = 1.0;
  b(2, 1) = 1.0;
  return b;
}

inline Matrix section5_a(int which) {
  Matrix a = Matrix::Zero(3, 3);
  const bool couples_1 = which == 0 || which == 3;
  (couples_1 ? a(0, 1) : a(0, 2)) = 0.1;
  a(2, 2) = which <= 1 ? 0.9 : 0.8;
  return a;
}

inline Scenario section5() {
  std::vector<LinearSystem> sys;
  for (int k = 0; k < 4; ++k) sys.emplace_back(section5_a(k), section5_b());
  return Scenario(std::move(sys), NoiseModel::isotropic(3, 1.0), 1.0);
}

inline Scenario appendix_f1() {
  Matrix a = Matrix::Zero(6, 6);
  a(0, 1) = 0.1;
  for (int k = 2; k < 6; ++k) a(k, k) = 0.9;
  Matrix a_1 = a;
  a_1(0, 1) = 0.2;
  Matrix b = Matrix::Zero(6, 5);
  b.bottomRows(5).setIdentity();
  return Scenario({LinearSystem(a, b), LinearSystem(a_1, b)}, NoiseModel::isotropic(6, 0.01), 1.0);
}

/// The three-state truth plus `count` candidates whose A and B entries are
/// perturbed by i.i.d. N(0, std^2). The truth sits at index 0.
inline Scenario appendix_f2(std::uint64_t seed, double std_dev = 0.1, int count = 20) {
  detail::require(std_dev > 0.0, "perturbation std must be positive");
  detail::require(count >= 1, "need at least one perturbed candidate");
  Rng rng(seed, 7);
  const Matrix a = section5_a(0);
  const Matrix b = section5_b();
  std::vector<LinearSystem> sys{LinearSystem(a, b)};
  for (int k = 0; k < count; ++k) {
    Matrix ak = a;
    Matrix bk = b;
    for (Eigen::Index j = 0; j < ak.size(); ++j) ak.data()[j] += std_dev * rng.normal();
    for (Eigen::Index j = 0; j < bk.size(); ++j) bk.data()[j] += std_dev * rng.normal();
    sys.emplace_back(ak, bk);
  }
  return Scenario(std::move(sys), NoiseModel::isotropic(3, 1.0), 1.0);
}

}  // namespace scenarios

/// Names: section5, appendix_f1, example_3_1 or example_3_1(d),
/// appendix_f2 or appendix_f2(seed) or appendix_f2(seed,std).
inline Scenario builtin_scenario(const std::string& name) {
  static const std::regex call(R"(^\s*([a-z0-9_]+)\s*(?:\(\s*([^)]*)\))?\s*$)");
  std::smatch m;
  if (!std::regex_match(name, m, call)) throw ScenarioError("unknown scenario '" + name + "'");
  const std::string base = m[1];
  std::vector<std::string> args;
  if (m[2].matched) {
    std::string rest = m[2];
    std::size_t pos = 0;
    while (pos <= rest.size() && !rest.empty()) {
      const std::size_t comma = rest.find(',', pos);
      args.push_back(rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  auto arg = [&](std::size_t i) -> const std::string& { return args.at(i); };
  try {
    if (base == "section5" && args.empty()) return scenarios::section5();
    if (base == "appendix_f1" && args.empty()) return scenarios::appendix_f1();
    if (base == "example_3_1" && args.size() <= 1) return scenarios::example_3_1(args.empty() ? 0 : std::stoi(arg(0)));
    if (base == "appendix_f2" && args.size() <= 2)
      return scenarios::appendix_f2(args.empty() ? 0 : std::stoull(arg(0)), args.size() < 2 ? 0.1 : std::stod(arg(1)));
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const DimensionError*>(&e)) throw;
    throw ScenarioError("bad arguments for scenario '" + name + "': " + e.what());
  }
  throw ScenarioError("unknown scenario '" + name + "'");
}

namespace detail {

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ScenarioError(what + " must be a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ScenarioError(what + " has ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ScenarioError(what + " has a non-numeric entry");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("systems") || !j["systems"].is_array())
    throw ScenarioError("scenario JSON needs a 'systems' array");
  std::vector<LinearSystem> sys;
  for (std::size_t i = 0; i < j["systems"].size(); ++i) {
    const auto& s = j["systems"][i];
    const std::string tag = "systems[" + std::to_string(i) + "]";
    if (!s.contains("A") || !s.contains("B")) throw ScenarioError(tag + " needs A and B");
    sys.emplace_back(detail::matrix_from_json(s["A"], tag + ".A"), detail::matrix_from_json(s["B"], tag + ".B"));
  }
  if (!j.contains("sigma_w")) throw ScenarioError("scenario JSON needs 'sigma_w'");
  const Matrix sw = detail::matrix_from_json(j["sigma_w"], "sigma_w");
  const double gamma = j.value("gamma_u", 1.0);
  const std::size_t ti = j.value("true_index", std::size_t{0});
  return Scenario(std::move(sys), NoiseModel(sw), gamma, ti);
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["systems"] = nlohmann::json::array();
  for (const auto& sys : s.systems())
    j["systems"].push_back({{"A", detail::matrix_to_json(sys.A())}, {"B", detail::matrix_to_json(sys.B())}});
  j["true_index"] = s.true_index();
  j["sigma_w"] = detail::matrix_to_json(s.noise().sigma_w());
  j["gamma_u"] = s.gamma_u();
  return j;
}

inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError("cannot parse '" + path + "': " + e.what());
  }
  return scenario_from_json(j);
}

/// Built-in name, or a path to a JSON file when the argument ends in .json.
inline Scenario resolve_scenario(const std::string& name_or_path) {
  const std::string ext = ".json";
  if (name_or_path.size() > ext.size() && name_or_path.compare(name_or_path.size() - ext.size(), ext.size(), ext) == 0)
    return load_scenario_file(name_or_path);
  return builtin_scenario(name_or_path);
}

}  // namespace activeid
