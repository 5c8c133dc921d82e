#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "exciteid/convex_hull.hpp"

namespace exciteid {

/// Gaussian mixture summarizing end-effector feature points: K means (rows of
/// mu, EE frame), covariances and weights.
struct MFPEE {
  Eigen::Matrix<double, Eigen::Dynamic, 3> mu;
  std::vector<Eigen::Matrix3d> sigma;
  Eigen::VectorXd pi;

  int size() const { return static_cast<int>(mu.rows()); }
};

struct GmmOptions {
  int max_iter = 500;
  int restarts = 5;
  double reg = 1e-8;        // m^2, covariance loading
  double rel_tol = 1e-10;   // stop when the objective gain falls below rel_tol * |objective|
};

/// One EM fit with a fixed number of components.
struct GmmFit {
  MFPEE model;
  double log_likelihood = 0.0;
  /// Objective maximized by the EM steps (log-likelihood plus the covariance
  /// prior term), one entry per iteration. Non-decreasing.
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

/// EM for K components started from k-means++ seeding; the best of
/// `options.restarts` runs (largest objective) is returned. The fit is empty
/// (model.size() == 0) when K exceeds the number of distinct points.
GmmFit fit_gmm(const PointCloud& pts, int K, std::uint64_t seed, const GmmOptions& options = {});

struct MfpeeSelection {
  MFPEE model;
  int k_star = 0;
  std::vector<double> bic;  // bic[K-1], +inf where the fit was impossible
  GmmFit fit;               // fit of the selected K
};

/// Fits K = 1..min(k_max, N) and keeps the model with the lowest BIC
/// (-2 log L + (10 K - 1) ln N).
MfpeeSelection fit_mfpee(const PointCloud& pts, int k_max, std::uint64_t seed,
                         const GmmOptions& options = {});

double gmm_log_likelihood(const MFPEE& model, const PointCloud& pts);

}  // namespace exciteid
