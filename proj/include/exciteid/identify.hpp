#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "exciteid/base_params.hpp"
#include "exciteid/bvls.hpp"
#include "exciteid/dataset.hpp"
#include "exciteid/urdf_chain.hpp"

namespace exciteid {

struct BoundOptions {
  double mu_margin = 0.5;
  double floor = 1e-3;       // SI units
  double coulomb_cap = 5.0;  // N m
  double viscous_cap = 5.0;  // N m s / rad
};

/// Box on the standard parameters around the URDF nominals: inertial entries
/// nominal +/- mu_margin * max(|nominal|, floor), friction entries [0, cap].
std::pair<Eigen::VectorXd, Eigen::VectorXd> standard_bounds(const KinematicChain& chain,
                                                            const BoundOptions& options = {});

/// Box on theta_b = K theta by interval arithmetic through K.
/// Throws DegenerateError naming the offending rows if any interval is empty.
std::pair<Eigen::VectorXd, Eigen::VectorXd> build_bounds(const KinematicChain& chain, const BaseProjection& proj,
                                                         const BoundOptions& options = {});

/// Interval image of [lb, ub] under the rows of K.
std::pair<Eigen::VectorXd, Eigen::VectorXd> map_bounds(const Eigen::MatrixXd& K, const Eigen::VectorXd& lb,
                                                       const Eigen::VectorXd& ub);

struct IdentProblem {
  Eigen::MatrixXd Yb;   // (S dof) x rank
  Eigen::VectorXd tau;  // S dof
  Eigen::VectorXd lb, ub;
  int dof = 0;
};

/// Stacks base regressor rows and torques of every sample after the warm-up.
/// Throws if accelerations or torques are missing (NaN) in a used sample.
IdentProblem build_problem(const KinematicChain& chain, const BaseProjection& proj, const IdentDataset& ds);

struct IdentReport {
  Eigen::VectorXd theta_b_hat;
  Eigen::VectorXd torque_rms_per_joint;
  Eigen::VectorXd max_abs_error_per_joint;
  double cond_scaled = 0.0;
  double cond_raw = 0.0;
  std::vector<int> active_bounds;
  bool converged = false;
  bool kkt_ok = false;
  bool regularized = false;
  int samples = 0;
};

/// Per-joint RMS / max errors of tau - Yb theta_b and both condition numbers.
IdentReport torque_errors(const IdentProblem& prob, const Eigen::VectorXd& theta_b);

IdentReport solve_bounded_ls(const IdentProblem& prob);

/// Prediction errors of theta_b on a held-out dataset.
IdentReport validate(const KinematicChain& chain, const BaseProjection& proj, const Eigen::VectorXd& theta_b,
                     const IdentDataset& ds_validation);

/// ||estimate - truth||_inf / ||truth||_inf
double relative_linf_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

}  // namespace exciteid
