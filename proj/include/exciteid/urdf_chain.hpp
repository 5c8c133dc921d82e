#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>
#include <json.hpp>

namespace exciteid {

enum class JointKind { Revolute, Fixed };

struct JointSpec {
  std::string name;
  JointKind kind = JointKind::Revolute;
  /// Parent-link frame to joint frame at q = 0. After parsing, this already
  /// contains every fixed joint between the previous moving link and this joint.
  Eigen::Isometry3d origin = Eigen::Isometry3d::Identity();
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  double q_min = 0.0;
  double q_max = 0.0;
  double dq_min = -1.0;
  double dq_max = 1.0;
};

struct LinkSpec {
  std::string name;
  double mass = 0.0;
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  /// Inertia about the center of mass, expressed in the link frame.
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();
};

/// A frame rigidly attached to a moving link (or to the root when parent == -1)
/// through one or more fixed joints, e.g. a flange or tool frame.
struct AttachedFrame {
  std::string name;
  int parent = -1;
  Eigen::Isometry3d offset = Eigen::Isometry3d::Identity();
};

/// Serial chain of revolute joints. joints[i] moves links[i]; the root frame is
/// the world frame. Immutable after construction.
struct KinematicChain {
  std::string name;
  std::string root_link;
  std::vector<JointSpec> joints;
  std::vector<LinkSpec> links;
  std::vector<AttachedFrame> attached;
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};

  int dof() const { return static_cast<int>(joints.size()); }

  /// Index of a moving link by name, -1 for the root link, throws otherwise.
  int link_index(std::string_view link_name) const;
};

/// Parses the supported URDF subset. Fixed joints are folded into the origin of
/// the next revolute joint and the inertia of rigidly attached links is merged
/// into their moving parent.
KinematicChain parse_urdf(std::string_view xml_text);
KinematicChain load_urdf_file(const std::string& path);

/// World pose of every moving link (size dof).
std::vector<Eigen::Isometry3d> link_frames(const KinematicChain& chain,
                                           const Eigen::VectorXd& q);

/// Pose of a named link or attached frame.
Eigen::Isometry3d frame_pose(const KinematicChain& chain,
                             const std::vector<Eigen::Isometry3d>& frames,
                             std::string_view frame_name);

/// Resolves a link or attached-frame name to (moving link index, offset).
AttachedFrame resolve_frame(const KinematicChain& chain, std::string_view frame_name);

Eigen::Matrix3d axis_rotation(const Eigen::Vector3d& axis, double angle);
Eigen::Matrix3d rpy_rotation(double roll, double pitch, double yaw);

nlohmann::json chain_to_json(const KinematicChain& chain);
KinematicChain chain_from_json(const nlohmann::json& j);

}  // namespace exciteid
