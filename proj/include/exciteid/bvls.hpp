#pragma once

#include <vector>

#include <Eigen/Core>

namespace exciteid {

struct BvlsResult {
  Eigen::VectorXd x;
  std::vector<int> state;  // -1 at lower bound, +1 at upper bound, 0 free
  int iterations = 0;
  bool converged = false;    // active-set loop ended with KKT satisfied
  bool kkt_ok = false;
  double kkt_residual = 0.0; // largest relative KKT violation
  bool regularized = false;  // Tikhonov term added for a rank-deficient matrix
  double residual_norm = 0.0;
};

/// min ||A x - b||_2 s.t. lb <= x <= ub (Stark-Parker active set). Columns are
/// scaled internally. A rank-deficient A gets a 1e-10 Tikhonov term (scaled
/// variables) and a warning.
BvlsResult solve_bvls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& lb,
                      const Eigen::VectorXd& ub, int max_iter = 0);

/// KKT check: free gradient components ~0, active ones pointing outward.
double bvls_kkt_residual(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& lb, const Eigen::VectorXd& ub, std::vector<int>* state = nullptr);

}  // namespace exciteid
