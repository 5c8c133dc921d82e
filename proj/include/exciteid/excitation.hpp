#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "exciteid/base_params.hpp"
#include "exciteid/collision.hpp"
#include "exciteid/fourier.hpp"
#include "exciteid/urdf_chain.hpp"

namespace exciteid {

struct FourierConfig {
  int order = 5;
  double f_f = 0.1;   // Hz
  double f_s = 20.0;  // Hz
  BoundaryMode boundary = BoundaryMode::ZeroState;
};

/// Everything the cost needs: chain, base projection, sample grid and the
/// fixed per-column scale applied to the stacked base regressor.
struct ObjectiveContext {
  KinematicChain chain;
  BaseProjection proj;
  FourierConfig fourier;
  Eigen::VectorXd q_offset;
  std::vector<double> times;
  Eigen::VectorXd scale;  // one positive factor per base column; empty means unscaled
  // Base-column positions that enter r_c. make_context selects the inertial
  // columns so the cost never sees sgn(dq) jumps; empty means all columns.
  std::vector<int> cost_columns;

  double omega_f() const;
  int dof() const { return chain.dof(); }
  int n_coeffs() const { return 2 * fourier.order * chain.dof(); }
  FourierTrajectory trajectory(const Eigen::VectorXd& coeffs) const;
};

/// Grid times are built from f_s and the period; scale is left empty.
ObjectiveContext make_context(const KinematicChain& chain, const BaseProjection& proj,
                              const FourierConfig& fourier,
                              std::optional<Eigen::VectorXd> q_offset = std::nullopt);

/// 0.5 (||H||_F + ||H^-1||_F) with H = Yb^T Yb. Returns +inf (and sets
/// *singular) when H is not numerically positive definite.
double surrogate_cost(const Eigen::MatrixXd& Yb, bool* singular = nullptr);

/// sigma_max / sigma_min by SVD; +inf when sigma_min is numerically zero.
double condition_number(const Eigen::MatrixXd& Y);

/// Stacked base regressor over the context grid, optionally multiplied by ctx.scale.
Eigen::MatrixXd stacked_base_regressor(const ObjectiveContext& ctx, const FourierTrajectory& traj,
                                       bool scaled = true);

/// Scaled stack restricted to ctx.cost_columns; this is the matrix r_c is built on.
Eigen::MatrixXd cost_stack(const ObjectiveContext& ctx, const FourierTrajectory& traj);

/// 1 / column 2-norm of a stack (columns with zero norm get 1).
Eigen::VectorXd unit_norm_scale(const Eigen::MatrixXd& stack);

struct CostGradient {
  double r_c = std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;  // w.r.t. FourierTrajectory::coefficients() ordering
  bool singular = false;
};

double cost(const Eigen::VectorXd& coeffs, const ObjectiveContext& ctx);
CostGradient cost_and_gradient(const Eigen::VectorXd& coeffs, const ObjectiveContext& ctx);

/// Orthonormal basis (2L x 2L-3 for L >= 2) of the per-joint coefficients
/// satisfying the boundary equalities.
Eigen::MatrixXd boundary_null_space(int order, BoundaryMode mode);

struct TrajectoryCheck {
  double coefficient_violation = 0.0;   // ConstraintReport::max_violation
  double position_violation = 0.0;      // max over grid of distance outside [q_min, q_max]
  double velocity_violation = 0.0;      // max over grid of |dq| - dq_max, clipped at 0
  double min_collision_residual = std::numeric_limits<double>::infinity();
  double collision_violation = 0.0;     // max(0, margin - min g)
  int grid_points = 0;

  double max_violation() const;
};

/// Checks a trajectory on a grid `oversample` times denser than ctx.fourier.f_s.
TrajectoryCheck check_trajectory(const ObjectiveContext& ctx, const FourierTrajectory& traj,
                                 const CollisionModel* collisions, int oversample);

struct OptimizerOptions {
  int n_starts = 3;
  std::uint64_t seed = 1;
  int step1_max_iter = 2000;
  int step2_max_iter = 3000;
  int max_draws = 10000;
  double tolerance = 1e-3;
  int collision_oversample = 4;
  double collision_buffer = 0.02;  // extra margin while optimizing, absorbs dips between grid points
  int threads = 0;  // 0: one worker per start up to the hardware concurrency
};

struct SamplerResult {
  Eigen::VectorXd coeffs;
  bool feasible = false;  // coefficient and collision constraints all satisfied
  int draws = 0;
  bool scaled_fallback = false;  // some joint needed the homogeneous shrink
};

/// Rejection sampler: per joint, draw coefficients uniformly in the box bounds,
/// project onto the boundary equalities and keep the draw if the box and
/// amplitude constraints hold. The assembled trajectory is rejected if any
/// collision residual on the oversampled grid falls below the margin.
SamplerResult sample_feasible(const ObjectiveContext& ctx, const CollisionModel* collisions,
                              std::mt19937_64& rng, int max_draws, int collision_oversample);

struct StepSummary {
  double r_c = std::numeric_limits<double>::infinity();
  double max_violation = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int outer_iterations = 0;
};

struct StartSummary {
  int index = 0;
  double sampled_r_c = std::numeric_limits<double>::infinity();
  bool sampled_feasible = false;
  StepSummary step1, step2;
  double final_r_c = std::numeric_limits<double>::infinity();
  double final_violation = std::numeric_limits<double>::infinity();
  bool kept_sample = false;
  Eigen::VectorXd coeffs;
};

struct OptResult {
  std::optional<FourierTrajectory> traj;
  double r_c = std::numeric_limits<double>::infinity();
  double cond = std::numeric_limits<double>::infinity();      // scaled stack
  double cond_raw = std::numeric_limits<double>::infinity();  // unscaled stack
  double cond_cost = std::numeric_limits<double>::infinity();  // matrix r_c is built on
  double initial_r_c = std::numeric_limits<double>::infinity();
  double initial_cond = std::numeric_limits<double>::infinity();
  double constraint_max_violation = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int start_index = -1;
  bool feasible = false;
  bool all_singular = false;
  Eigen::VectorXd scale;
  std::vector<StartSummary> starts;
};

/// Two-step multi-start optimization: step 1 minimizes r_c under the Fourier
/// feasibility constraints, step 2 continues from it with the collision
/// constraints added. If ctx.scale is empty it is computed from the stacked
/// initial trajectories of all starts.
OptResult optimize(ObjectiveContext ctx, const CollisionModel* collisions,
                   const OptimizerOptions& options = {});

}  // namespace exciteid
