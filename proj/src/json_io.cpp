#include "exciteid/json_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "exciteid/error.hpp"

namespace exciteid {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) a.push_back(v(i));
    else a.push_back(nullptr);
  }
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw Error("expected a JSON array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = j[i].is_null() ? std::nan("") : j[i].get<double>();
  }
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw Error("expected a JSON array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != cols) throw Error("ragged matrix in JSON");
    m.row(static_cast<Eigen::Index>(r)) = vector_from_json(j[r]).transpose();
  }
  return m;
}

std::string boundary_name(BoundaryMode mode) {
  return mode == BoundaryMode::ZeroState ? "zero-state" : "paper-literal";
}

BoundaryMode boundary_from_name(const std::string& name) {
  if (name == "zero-state") return BoundaryMode::ZeroState;
  if (name == "paper-literal") return BoundaryMode::PaperLiteral;
  throw ConfigError("unknown boundary mode '" + name + "' (expected zero-state or paper-literal)");
}

json trajectory_to_json(const FourierTrajectory& traj, BoundaryMode mode) {
  return {{"omega_f", traj.omega_f()},
          {"L", traj.order()},
          {"boundary", boundary_name(mode)},
          {"q_offset", vector_to_json(traj.q_offset())},
          {"a", matrix_to_json(traj.a())},
          {"b", matrix_to_json(traj.b())}};
}

FourierTrajectory trajectory_from_json(const json& j) {
  FourierTrajectory traj(matrix_from_json(j.at("a")), matrix_from_json(j.at("b")), j.at("omega_f").get<double>(),
                         vector_from_json(j.at("q_offset")));
  if (j.contains("L") && j["L"].get<int>() != traj.order()) throw Error("trajectory JSON: L does not match a/b");
  return traj;
}

json projection_to_json(const BaseProjection& proj, int dof) {
  const auto labels = std_param_labels(dof);
  json b_names = json::array(), d_names = json::array();
  for (int c : proj.b_idx) b_names.push_back(labels.at(static_cast<std::size_t>(c)));
  for (int c : proj.d_idx) d_names.push_back(labels.at(static_cast<std::size_t>(c)));
  return {{"rank", proj.rank()},
          {"n_std", proj.n_std},
          {"b_idx", b_names},
          {"d_idx", d_names},
          {"b_index", proj.b_idx},
          {"d_index", proj.d_idx},
          {"K_d", matrix_to_json(proj.K_d)},
          {"K", matrix_to_json(proj.K)}};
}

BaseProjection projection_from_json(const json& j) {
  BaseProjection p;
  p.b_idx = j.at("b_index").get<std::vector<int>>();
  p.d_idx = j.at("d_index").get<std::vector<int>>();
  p.n_std = j.at("n_std").get<int>();
  p.K = matrix_from_json(j.at("K"));
  p.K_d = matrix_from_json(j.at("K_d"));
  if (p.K_d.size() == 0) p.K_d.resize(static_cast<Eigen::Index>(p.b_idx.size()), static_cast<Eigen::Index>(p.d_idx.size()));
  if (p.K.rows() != p.rank() || p.K.cols() != p.n_std ||
      static_cast<int>(p.b_idx.size() + p.d_idx.size()) != p.n_std) {
    throw Error("projection JSON: inconsistent dimensions");
  }
  return p;
}

void write_json_file(const std::string& path, const json& j) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

json read_json_file(const std::string& path, const std::string& producer) {
  std::ifstream in(path);
  if (!in) {
    std::string msg = "missing artifact '" + path + "'";
    if (!producer.empty()) msg += " (run the '" + producer + "' stage first)";
    throw MissingArtifactError(msg);
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("invalid JSON in '" + path + "': " + e.what());
  }
}

}  // namespace exciteid
