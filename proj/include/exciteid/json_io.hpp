#pragma once

#include <string>

#include <json.hpp>

#include "exciteid/base_params.hpp"
#include "exciteid/fourier.hpp"

namespace exciteid {

nlohmann::json trajectory_to_json(const FourierTrajectory& traj, BoundaryMode mode);
FourierTrajectory trajectory_from_json(const nlohmann::json& j);

nlohmann::json projection_to_json(const BaseProjection& proj, int dof);
BaseProjection projection_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);  // array of rows
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

std::string boundary_name(BoundaryMode mode);
BoundaryMode boundary_from_name(const std::string& name);

void write_json_file(const std::string& path, const nlohmann::json& j);
/// Throws MissingArtifactError mentioning `producer` when the file is absent.
nlohmann::json read_json_file(const std::string& path, const std::string& producer = "");

}  // namespace exciteid
