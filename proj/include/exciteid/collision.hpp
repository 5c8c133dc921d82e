#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <json.hpp>

#include "exciteid/gmm.hpp"
#include "exciteid/urdf_chain.hpp"

namespace exciteid {

/// Ellipsoid rigidly attached to a link (link_index -1 is the root link).
class LinkEllipsoid {
 public:
  LinkEllipsoid(int link_index, const Eigen::Vector3d& center_offset, const Eigen::Vector3d& eps);

  int link_index() const { return link_; }
  const Eigen::Vector3d& center_offset() const { return center_; }
  const Eigen::Vector3d& eps() const { return eps_; }
  /// diag(eps_x^-2, eps_y^-2, eps_z^-2)
  Eigen::Matrix3d A() const;

 private:
  int link_;
  Eigen::Vector3d center_;
  Eigen::Vector3d eps_;
};

/// Probe points carried by the end effector and the ellipsoids they must avoid.
struct CollisionModel {
  Eigen::Matrix<double, Eigen::Dynamic, 3> points;  // probe points in the EE frame
  std::vector<LinkEllipsoid> ellipsoids;
  int ee_link = -1;                                  // moving link carrying the EE
  Eigen::Isometry3d ee_offset = Eigen::Isometry3d::Identity();  // ee_link frame -> EE frame
  double margin = 0.05;

  bool empty() const { return points.rows() == 0 || ellipsoids.empty(); }
  int size() const { return static_cast<int>(points.rows() * static_cast<Eigen::Index>(ellipsoids.size())); }
};

/// Throws if the EE link is out of range or an ellipsoid sits on it.
void validate_collision_model(const KinematicChain& chain, const CollisionModel& model);

/// g = x^T A x - 1 for every (ellipsoid, point) pair, ellipsoid-major.
/// g < 0 means the point is inside the ellipsoid.
Eigen::VectorXd collision_residuals(const KinematicChain& chain, const Eigen::VectorXd& q,
                                    const CollisionModel& model);

/// Residuals and their Jacobian with respect to q (size() x dof).
Eigen::VectorXd collision_residuals(const KinematicChain& chain, const Eigen::VectorXd& q,
                                    const CollisionModel& model, Eigen::MatrixXd* jacobian);

/// Ellipsoid list in the form [{link, center:[3], eps:[3]}]; link is a link name.
std::vector<LinkEllipsoid> ellipsoids_from_json(const KinematicChain& chain, const nlohmann::json& j);
nlohmann::json ellipsoids_to_json(const KinematicChain& chain, const std::vector<LinkEllipsoid>& e);

nlohmann::json mfpee_to_json(const MFPEE& m);
MFPEE mfpee_from_json(const nlohmann::json& j);

}  // namespace exciteid
