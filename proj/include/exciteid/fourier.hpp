#pragma once

#include <vector>

#include <Eigen/Core>

#include "exciteid/dataset.hpp"
#include "exciteid/urdf_chain.hpp"

namespace exciteid {

/// How the start/end conditions of the series are constrained.
///  ZeroState: q(0) = q_offset, dq(0) = 0, ddq(0) = 0, i.e.
///             sum b_l / l = 0, sum a_l = 0, sum b_l * l = 0.
///  PaperLiteral: sum a_l / l = 0, sum b_l = 0, sum a_l * l = 0.
enum class BoundaryMode { ZeroState, PaperLiteral };

/// Per-joint finite Fourier series
///   q_i(t) = q_offset_i + sum_l a_il/(w l) sin(w l t) - b_il/(w l) cos(w l t)
/// with exact analytic first and second derivatives.
class FourierTrajectory {
 public:
  FourierTrajectory(Eigen::MatrixXd a, Eigen::MatrixXd b, double omega_f,
                    Eigen::VectorXd q_offset);

  /// All-zero coefficients.
  static FourierTrajectory zeros(int dof, int order, double omega_f, Eigen::VectorXd q_offset);

  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::MatrixXd& b() const { return b_; }
  const Eigen::VectorXd& q_offset() const { return q_offset_; }
  double omega_f() const { return omega_f_; }
  int order() const { return static_cast<int>(a_.cols()); }
  int dof() const { return static_cast<int>(a_.rows()); }
  double period() const;

  struct State {
    Eigen::VectorXd q, dq, ddq;
  };
  State evaluate(double t) const;

  /// Coefficients flattened per joint: [a_i1..a_iL, b_i1..b_iL] for i = 1..dof.
  Eigen::VectorXd coefficients() const;
  FourierTrajectory with_coefficients(const Eigen::VectorXd& x) const;

 private:
  Eigen::MatrixXd a_;
  Eigen::MatrixXd b_;
  double omega_f_;
  Eigen::VectorXd q_offset_;
};

/// round(f_s * T) samples at t_k = k / f_s; rejects f_s <= 2 L f_f.
std::vector<StateSample> sample_grid(const FourierTrajectory& traj, double f_s);
std::vector<double> grid_times(const FourierTrajectory& traj, double f_s);

/// Default constant offset: mid-range of each joint's limits.
Eigen::VectorXd mid_range_offset(const KinematicChain& chain);

/// Half-width of the position window around the offset for joint i.
double position_range(const JointSpec& joint, double offset);
double velocity_limit(const JointSpec& joint);

/// Symmetric per-coefficient bound for harmonic l (1-based).
double coefficient_bound(const JointSpec& joint, double offset, double omega_f, int order, int l);

/// 3 x 2L boundary-condition matrix acting on [a_1..a_L, b_1..b_L] of one joint.
Eigen::MatrixXd boundary_matrix(int order, BoundaryMode mode);

struct JointResiduals {
  Eigen::Vector3d boundary = Eigen::Vector3d::Zero();  // equalities, 0 when satisfied
  double position_amplitude = 0.0;  // sum (1/l) |c_l| - w * q_range   (<= 0 ok)
  double velocity_amplitude = 0.0;  // sum |c_l| - dq_max              (<= 0 ok)
  double coefficient_box = 0.0;     // max over coefficients of |c| - bound (<= 0 ok)
};

struct ConstraintReport {
  std::vector<JointResiduals> joints;
  /// Largest violation over all entries (absolute boundary values, positive
  /// parts of the inequality residuals).
  double max_violation() const;
};

ConstraintReport feasibility_residuals(const FourierTrajectory& traj, const KinematicChain& chain,
                                       BoundaryMode mode = BoundaryMode::ZeroState);

}  // namespace exciteid
