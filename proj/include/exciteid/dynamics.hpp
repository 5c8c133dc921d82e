#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "exciteid/urdf_chain.hpp"

namespace exciteid {

// Standard parameter layout, 12 entries per joint i:
//   [m, mcx, mcy, mcz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz, fs, fv]
// Inertia is taken about the link-frame origin; fs is the Coulomb and fv the
// viscous friction coefficient of joint i. Regressor columns follow this order.
inline constexpr int kParamsPerJoint = 12;
inline constexpr int kInertialPerLink = 10;
inline constexpr int kCoulombOffset = 10;
inline constexpr int kViscousOffset = 11;

using StdParams = Eigen::VectorXd;

int std_param_count(int dof);
std::vector<std::string> std_param_labels(int dof);

/// Nominal standard parameters from the URDF inertials (inertia shifted from the
/// com to the link origin) and the given friction coefficients.
StdParams nominal_params(const KinematicChain& chain, const Eigen::VectorXd& coulomb,
                         const Eigen::VectorXd& viscous);
StdParams nominal_params(const KinematicChain& chain);

/// Inverse dynamics by outward velocity/acceleration and inward force recursion,
/// plus Coulomb (sgn(0) = 0) and viscous friction.
Eigen::VectorXd rnea(const KinematicChain& chain, const Eigen::VectorXd& q,
                     const Eigen::VectorXd& dq, const Eigen::VectorXd& ddq,
                     const StdParams& params);

/// dof x 12*dof matrix Y with Y * params == rnea(..., params).
Eigen::MatrixXd regressor(const KinematicChain& chain, const Eigen::VectorXd& q,
                          const Eigen::VectorXd& dq, const Eigen::VectorXd& ddq);

/// Same matrix built column by column from rnea with unit parameter vectors.
/// Slow; kept as an independent construction.
Eigen::MatrixXd regressor_by_probing(const KinematicChain& chain, const Eigen::VectorXd& q,
                                     const Eigen::VectorXd& dq, const Eigen::VectorXd& ddq);

/// tau_ext = tau_raw - tau_model.
Eigen::VectorXd external_torque(const Eigen::VectorXd& tau_raw, const Eigen::VectorXd& tau_model);

/// Gradient of phi(q, dq, ddq) = sum_ij weights(i, j) * Y(i, j) with respect to
/// the stacked state [q; dq; ddq]. Used by the trajectory optimizer.
Eigen::VectorXd weighted_regressor_gradient(const KinematicChain& chain,
                                            const Eigen::VectorXd& q,
                                            const Eigen::VectorXd& dq,
                                            const Eigen::VectorXd& ddq,
                                            const Eigen::MatrixXd& weights);

}  // namespace exciteid
