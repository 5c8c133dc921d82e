#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "exciteid/dynamics.hpp"
#include "exciteid/urdf_chain.hpp"

namespace exciteid {

/// Selection of independent regressor columns and the linear map from standard
/// to base parameters: theta_b = K * theta with K = P_b^T + K_d * P_d^T.
struct BaseProjection {
  std::vector<int> b_idx;  // ascending
  std::vector<int> d_idx;  // ascending
  Eigen::MatrixXd K_d;     // |b| x |d|
  Eigen::MatrixXd K;       // |b| x 12*dof
  int n_std = 0;

  int rank() const { return static_cast<int>(b_idx.size()); }
};

struct BaseProjectionOptions {
  int n_samples = 120;
  std::uint64_t seed = 1;
  double tau_rank = 1e-7;
  double acc_range = 5.0;  // rad/s^2, accelerations drawn uniformly in +/- acc_range
  bool force_friction = true;
};

/// Result of a Householder QR with column pivoting. Columns listed in
/// `forced` are pivoted first (in the given order); each remaining pivot is the
/// lowest-index column whose remaining norm exceeds tau_rank times the largest
/// input column norm.
struct PivotedQR {
  Eigen::MatrixXd R;         // min(m,n) x n, columns in pivot order
  std::vector<int> perm;     // perm[k] = original column in position k
  int rank = 0;              // number of leading pivots above tolerance
  double reference = 0.0;    // largest column norm of the input
};

PivotedQR pivoted_qr(const Eigen::MatrixXd& A, double tau_rank,
                     const std::vector<int>& forced = {});

/// Stacks regressors at random states drawn inside the joint limits.
Eigen::MatrixXd random_state_stack(const KinematicChain& chain, int n_samples,
                                   std::uint64_t seed, double acc_range);

/// Builds the projection from an already-stacked regressor.
BaseProjection base_projection_from_stack(const Eigen::MatrixXd& stack, double tau_rank,
                                          const std::vector<int>& forced);

BaseProjection compute_base_projection(const KinematicChain& chain,
                                       const BaseProjectionOptions& options = {});

/// Friction column indices (Coulomb then viscous per joint).
std::vector<int> friction_columns(int dof);

Eigen::VectorXd project(const StdParams& params, const BaseProjection& proj);

/// Columns b_idx of an arbitrary stacked standard regressor.
Eigen::MatrixXd select_base_columns(const Eigen::MatrixXd& Y, const BaseProjection& proj);

Eigen::MatrixXd base_regressor(const KinematicChain& chain, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& dq, const Eigen::VectorXd& ddq,
                               const BaseProjection& proj);

std::vector<std::string> base_param_labels(const BaseProjection& proj, int dof);

}  // namespace exciteid
