#include "exciteid/excitation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <numbers>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "exciteid/error.hpp"
#include "exciteid/log.hpp"
#include "exciteid/seed.hpp"

namespace exciteid {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double ObjectiveContext::omega_f() const { return 2.0 * std::numbers::pi * fourier.f_f; }

FourierTrajectory ObjectiveContext::trajectory(const Eigen::VectorXd& coeffs) const {
  return FourierTrajectory::zeros(dof(), fourier.order, omega_f(), q_offset).with_coefficients(coeffs);
}

ObjectiveContext make_context(const KinematicChain& chain, const BaseProjection& proj,
                              const FourierConfig& fourier, std::optional<Eigen::VectorXd> q_offset) {
  if (fourier.order < 1) throw ConfigError("fourier order must be at least 1");
  if (!(fourier.f_f > 0.0)) throw ConfigError("fourier f_f must be positive");
  require_size(proj.n_std, std_param_count(chain.dof()), "make_context projection");
  ObjectiveContext ctx;
  ctx.chain = chain;
  ctx.proj = proj;
  ctx.fourier = fourier;
  ctx.q_offset = q_offset ? *q_offset : mid_range_offset(chain);
  require_size(ctx.q_offset.size(), chain.dof(), "make_context q_offset");
  for (int i = 0; i < chain.dof(); ++i) {
    const JointSpec& js = chain.joints[static_cast<std::size_t>(i)];
    if (!(position_range(js, ctx.q_offset(i)) > 0.0)) {
      throw ConfigError("joint '" + js.name + "': offset leaves no room inside the position limits");
    }
    if (!(velocity_limit(js) > 0.0)) throw ConfigError("joint '" + js.name + "': velocity limit must be positive");
  }
  const auto fric = friction_columns(chain.dof());
  for (int c = 0; c < proj.rank(); ++c) {
    if (std::find(fric.begin(), fric.end(), proj.b_idx[static_cast<std::size_t>(c)]) == fric.end()) {
      ctx.cost_columns.push_back(c);
    }
  }
  ctx.times = grid_times(ctx.trajectory(Eigen::VectorXd::Zero(ctx.n_coeffs())), fourier.f_s);
  return ctx;
}

double surrogate_cost(const Eigen::MatrixXd& Yb, bool* singular) {
  if (singular) *singular = false;
  const Eigen::MatrixXd H = Yb.transpose() * Yb;
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success || Yb.rows() < Yb.cols()) {
    if (singular) *singular = true;
    return kInf;
  }
  const Eigen::MatrixXd Hinv = llt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
  const double r = 0.5 * (H.norm() + Hinv.norm());
  if (!std::isfinite(r)) {
    if (singular) *singular = true;
    return kInf;
  }
  return r;
}

double condition_number(const Eigen::MatrixXd& Y) {
  if (Y.size() == 0) return kInf;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Y);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  // Numerically zero at the usual SVD rank tolerance.
  const double zero = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(Y.rows(), Y.cols())) * s(0);
  if (!(smin > zero) || Y.rows() < Y.cols()) return kInf;
  return s(0) / smin;
}

Eigen::VectorXd unit_norm_scale(const Eigen::MatrixXd& stack) {
  Eigen::VectorXd s(stack.cols());
  for (Eigen::Index c = 0; c < stack.cols(); ++c) {
    const double n = stack.col(c).norm();
    s(c) = n > 0.0 ? 1.0 / n : 1.0;
  }
  return s;
}

Eigen::MatrixXd stacked_base_regressor(const ObjectiveContext& ctx, const FourierTrajectory& traj,
                                       bool scaled) {
  const int n = ctx.dof();
  const int r = ctx.proj.rank();
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(ctx.times.size()) * n, r);
  for (std::size_t k = 0; k < ctx.times.size(); ++k) {
    const auto s = traj.evaluate(ctx.times[k]);
    Y.middleRows(static_cast<Eigen::Index>(k) * n, n) =
        select_base_columns(regressor(ctx.chain, s.q, s.dq, s.ddq), ctx.proj);
  }
  if (scaled && ctx.scale.size() > 0) {
    require_size(ctx.scale.size(), r, "stacked_base_regressor scale");
    Y = Y * ctx.scale.asDiagonal();
  }
  return Y;
}

Eigen::MatrixXd cost_stack(const ObjectiveContext& ctx, const FourierTrajectory& traj) {
  Eigen::MatrixXd Y = stacked_base_regressor(ctx, traj, true);
  if (ctx.cost_columns.empty()) return Y;
  return Y(Eigen::all, ctx.cost_columns);
}

double cost(const Eigen::VectorXd& coeffs, const ObjectiveContext& ctx) {
  return surrogate_cost(cost_stack(ctx, ctx.trajectory(coeffs)));
}

CostGradient cost_and_gradient(const Eigen::VectorXd& coeffs, const ObjectiveContext& ctx) {
  const int n = ctx.dof();
  const int L = ctx.fourier.order;
  const double w = ctx.omega_f();
  const FourierTrajectory traj = ctx.trajectory(coeffs);
  const Eigen::MatrixXd Ys = cost_stack(ctx, traj);
  const int r = static_cast<int>(Ys.cols());

  CostGradient out;
  out.grad = Eigen::VectorXd::Zero(ctx.n_coeffs());
  const Eigen::MatrixXd H = Ys.transpose() * Ys;
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) {
    out.singular = true;
    return out;
  }
  const Eigen::MatrixXd Hinv = llt.solve(Eigen::MatrixXd::Identity(r, r));
  const double nH = H.norm();
  const double nHi = Hinv.norm();
  out.r_c = 0.5 * (nH + nHi);
  if (!std::isfinite(out.r_c)) {
    out.r_c = kInf;
    out.singular = true;
    return out;
  }
  // d||H^-1|| = -<H^-3, dH> / ||H^-1||, so d r_c = <G, dH>; with
  // dH = dY^T Y + Y^T dY this is d r_c = <2 Y G, dY>.
  const Eigen::MatrixXd G = 0.5 * (H / nH - (Hinv * Hinv * Hinv) / nHi);
  const Eigen::MatrixXd W = 2.0 * Ys * G;

  Eigen::MatrixXd Wfull = Eigen::MatrixXd::Zero(n, std_param_count(n));
  for (std::size_t k = 0; k < ctx.times.size(); ++k) {
    const double t = ctx.times[k];
    const auto s = traj.evaluate(t);
    for (int c = 0; c < r; ++c) {
      const int bc = ctx.cost_columns.empty() ? c : ctx.cost_columns[static_cast<std::size_t>(c)];
      const double sc = ctx.scale.size() > 0 ? ctx.scale(bc) : 1.0;
      Wfull.col(ctx.proj.b_idx[static_cast<std::size_t>(bc)]) =
          W.block(static_cast<Eigen::Index>(k) * n, c, n, 1) * sc;
    }
    const Eigen::VectorXd gs = weighted_regressor_gradient(ctx.chain, s.q, s.dq, s.ddq, Wfull);
    for (int l = 1; l <= L; ++l) {
      const double wl = w * l;
      const double sn = std::sin(wl * t);
      const double cs = std::cos(wl * t);
      // Partial derivatives of (q, dq, ddq) w.r.t. a_il and b_il.
      const double qa = sn / wl, qb = -cs / wl;
      const double va = cs, vb = sn;
      const double aa = -wl * sn, ab = wl * cs;
      for (int i = 0; i < n; ++i) {
        const double gq = gs(i), gv = gs(n + i), ga = gs(2 * n + i);
        out.grad(2 * L * i + l - 1) += gq * qa + gv * va + ga * aa;
        out.grad(2 * L * i + L + l - 1) += gq * qb + gv * vb + ga * ab;
      }
    }
  }
  return out;
}

Eigen::MatrixXd boundary_null_space(int order, BoundaryMode mode) {
  const Eigen::MatrixXd E = boundary_matrix(order, mode);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(E, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) > 1e-12 * s(0)) ++rank;
  }
  return svd.matrixV().rightCols(2 * order - rank);
}

double TrajectoryCheck::max_violation() const {
  return std::max({coefficient_violation, position_violation, velocity_violation, collision_violation});
}

namespace {

std::vector<double> dense_times(const ObjectiveContext& ctx, int oversample) {
  const FourierTrajectory probe = ctx.trajectory(Eigen::VectorXd::Zero(ctx.n_coeffs()));
  return grid_times(probe, ctx.fourier.f_s * std::max(1, oversample));
}

}  // namespace

TrajectoryCheck check_trajectory(const ObjectiveContext& ctx, const FourierTrajectory& traj,
                                 const CollisionModel* collisions, int oversample) {
  TrajectoryCheck chk;
  chk.coefficient_violation = feasibility_residuals(traj, ctx.chain, ctx.fourier.boundary).max_violation();
  const auto times = dense_times(ctx, oversample);
  chk.grid_points = static_cast<int>(times.size());
  const bool use_col = collisions && !collisions->empty();
  for (double t : times) {
    const auto s = traj.evaluate(t);
    for (int i = 0; i < ctx.dof(); ++i) {
      const JointSpec& js = ctx.chain.joints[static_cast<std::size_t>(i)];
      chk.position_violation = std::max({chk.position_violation, s.q(i) - js.q_max, js.q_min - s.q(i)});
      chk.velocity_violation = std::max(chk.velocity_violation, std::abs(s.dq(i)) - velocity_limit(js));
    }
    if (use_col) {
      const Eigen::VectorXd g = collision_residuals(ctx.chain, s.q, *collisions);
      if (g.size() > 0) chk.min_collision_residual = std::min(chk.min_collision_residual, g.minCoeff());
    }
  }
  if (use_col) chk.collision_violation = std::max(0.0, collisions->margin - chk.min_collision_residual);
  return chk;
}

namespace {

// Per-joint coefficient bounds B_l.
Eigen::VectorXd joint_bounds(const ObjectiveContext& ctx, int i) {
  const int L = ctx.fourier.order;
  const JointSpec& js = ctx.chain.joints[static_cast<std::size_t>(i)];
  Eigen::VectorXd B(L);
  for (int l = 1; l <= L; ++l) B(l - 1) = coefficient_bound(js, ctx.q_offset(i), ctx.omega_f(), L, l);
  return B;
}

// Largest factor in (0, 1] that makes the joint's coefficients satisfy the
// box and amplitude constraints (all are positively homogeneous).
double shrink_factor(const ObjectiveContext& ctx, int i, const Eigen::VectorXd& c) {
  const int L = ctx.fourier.order;
  const JointSpec& js = ctx.chain.joints[static_cast<std::size_t>(i)];
  const Eigen::VectorXd B = joint_bounds(ctx, i);
  double pos = 0.0, vel = 0.0, f = 1.0;
  for (int l = 1; l <= L; ++l) {
    const double a = c(l - 1), b = c(L + l - 1);
    const double mag = std::hypot(a, b);
    pos += mag / l;
    vel += mag;
    const double m = std::max(std::abs(a), std::abs(b));
    if (m > B(l - 1)) f = std::min(f, B(l - 1) / m);
  }
  const double pos_cap = ctx.omega_f() * position_range(js, ctx.q_offset(i));
  if (pos > pos_cap) f = std::min(f, pos_cap / pos);
  if (vel > velocity_limit(js)) f = std::min(f, velocity_limit(js) / vel);
  return f;
}

bool joint_feasible(const ObjectiveContext& ctx, int i, const Eigen::VectorXd& c) {
  return shrink_factor(ctx, i, c) >= 1.0;
}

// Shrinks every joint whose coefficients violate the box or amplitude limits;
// keeps a tiny safety factor so rounding cannot push them back outside.
Eigen::VectorXd polish(const ObjectiveContext& ctx, Eigen::VectorXd x) {
  const int L2 = 2 * ctx.fourier.order;
  for (int i = 0; i < ctx.dof(); ++i) {
    auto seg = x.segment(L2 * i, L2);
    const double f = shrink_factor(ctx, i, seg);
    if (f < 1.0) seg *= f * (1.0 - 1e-12);
  }
  return x;
}

double min_collision(const ObjectiveContext& ctx, const FourierTrajectory& traj, const CollisionModel& col,
                     const std::vector<double>& times) {
  double m = kInf;
  for (double t : times) {
    const auto s = traj.evaluate(t);
    const Eigen::VectorXd g = collision_residuals(ctx.chain, s.q, col);
    if (g.size() > 0) m = std::min(m, g.minCoeff());
  }
  return m;
}

// Full-constraint violation in the units of check_trajectory.
double violation_of(const ObjectiveContext& ctx, const Eigen::VectorXd& x, const CollisionModel* col,
                    const std::vector<double>& col_times) {
  const FourierTrajectory traj = ctx.trajectory(x);
  double v = feasibility_residuals(traj, ctx.chain, ctx.fourier.boundary).max_violation();
  if (col && !col->empty()) v = std::max(v, col->margin - min_collision(ctx, traj, *col, col_times));
  return std::max(0.0, v);
}

// Smooth minimization problem in the reduced coordinates z (x = blockdiag(N) z).
class ReducedProblem {
 public:
  ReducedProblem(const ObjectiveContext& ctx, const CollisionModel* col, bool with_collisions,
                 const std::vector<double>& col_times, double col_margin, double f0)
      : ctx_(ctx),
        col_(with_collisions && col && !col->empty() ? col : nullptr),
        col_times_(col_times),
        col_margin_(col_margin),
        f0_(f0) {
    N_ = boundary_null_space(ctx.fourier.order, ctx.fourier.boundary);
    m_ = static_cast<int>(N_.cols());
    for (int i = 0; i < ctx.dof(); ++i) B_.push_back(joint_bounds(ctx, i));
    n_con_ = ctx.dof() * (2 + 4 * ctx.fourier.order);
    if (col_) n_con_ += static_cast<int>(col_times_.size()) * col_->size();
  }

  int nz() const { return m_ * ctx_.dof(); }
  int n_constraints() const { return n_con_; }

  Eigen::VectorXd to_x(const Eigen::VectorXd& z) const {
    const int L2 = 2 * ctx_.fourier.order;
    Eigen::VectorXd x(L2 * ctx_.dof());
    for (int i = 0; i < ctx_.dof(); ++i) x.segment(L2 * i, L2) = N_ * z.segment(m_ * i, m_);
    return x;
  }

  Eigen::VectorXd to_z(const Eigen::VectorXd& x) const {
    const int L2 = 2 * ctx_.fourier.order;
    Eigen::VectorXd z(nz());
    for (int i = 0; i < ctx_.dof(); ++i) z.segment(m_ * i, m_) = N_.transpose() * x.segment(L2 * i, L2);
    return z;
  }

  Eigen::VectorXd grad_to_z(const Eigen::VectorXd& gx) const { return to_z(gx); }

  /// Objective r_c / f0 and its gradient in x.
  double objective(const Eigen::VectorXd& x, Eigen::VectorXd* gx) const {
    if (gx) {
      CostGradient cg = cost_and_gradient(x, ctx_);
      if (cg.singular) return kInf;
      *gx = cg.grad / f0_;
      return cg.r_c / f0_;
    }
    return cost(x, ctx_) / f0_;
  }

  /// Normalized inequality constraints c(x) <= 0. If lam/rho are given, also
  /// accumulates the gradient in x of the PHR penalty sum
  /// (max(0, lam + rho c)^2 - lam^2) / (2 rho) and returns that sum through *pen.
  Eigen::VectorXd constraints(const Eigen::VectorXd& x, const Eigen::VectorXd* lam, double rho, double* pen,
                              Eigen::VectorXd* gx) const {
    const int n = ctx_.dof();
    const int L = ctx_.fourier.order;
    const int L2 = 2 * L;
    const double w = ctx_.omega_f();
    Eigen::VectorXd c(n_con_);
    if (pen) *pen = 0.0;
    if (gx) gx->setZero(x.size());
    int k = 0;
    auto add = [&](double value) -> double {
      // Returns the multiplier of dc/dx in the penalty gradient.
      c(k) = value;
      double mult = 0.0;
      if (lam) {
        const double lk = (*lam)(k);
        const double s = std::max(0.0, lk + rho * value);
        if (pen) *pen += (s * s - lk * lk) / (2.0 * rho);
        mult = s;
      }
      ++k;
      return mult;
    };
    for (int i = 0; i < n; ++i) {
      const JointSpec& js = ctx_.chain.joints[static_cast<std::size_t>(i)];
      const auto seg = x.segment(L2 * i, L2);
      const double pos_cap = w * position_range(js, ctx_.q_offset(i));
      const double vcap = velocity_limit(js);
      double pos = 0.0, vel = 0.0;
      for (int l = 1; l <= L; ++l) {
        const double mag = std::hypot(seg(l - 1), seg(L + l - 1));
        pos += mag / l;
        vel += mag;
      }
      const double mp = add((pos - pos_cap) / pos_cap);
      const double mv = add((vel - vcap) / vcap);
      if (gx && (mp > 0.0 || mv > 0.0)) {
        for (int l = 1; l <= L; ++l) {
          const double a = seg(l - 1), b = seg(L + l - 1);
          const double mag = std::hypot(a, b);
          if (mag == 0.0) continue;
          const double f = mp / (pos_cap * l) + mv / vcap;
          (*gx)(L2 * i + l - 1) += f * a / mag;
          (*gx)(L2 * i + L + l - 1) += f * b / mag;
        }
      }
      for (int j = 0; j < L2; ++j) {
        const double B = B_[static_cast<std::size_t>(i)](j % L);
        const double up = add((seg(j) - B) / B);
        const double lo = add((-seg(j) - B) / B);
        if (gx) (*gx)(L2 * i + j) += (up - lo) / B;
      }
    }
    if (col_) {
      const FourierTrajectory traj = ctx_.trajectory(x);
      Eigen::MatrixXd J;
      for (double t : col_times_) {
        const auto s = traj.evaluate(t);
        const Eigen::VectorXd g = collision_residuals(ctx_.chain, s.q, *col_, gx ? &J : nullptr);
        Eigen::VectorXd dq_weight = Eigen::VectorXd::Zero(n);
        bool any = false;
        for (Eigen::Index r = 0; r < g.size(); ++r) {
          const double mult = add(col_margin_ - g(r));
          if (gx && mult > 0.0) {
            dq_weight -= mult * J.row(r).transpose();
            any = true;
          }
        }
        if (!any) continue;
        for (int l = 1; l <= L; ++l) {
          const double wl = w * l;
          const double qa = std::sin(wl * t) / wl, qb = -std::cos(wl * t) / wl;
          for (int i = 0; i < n; ++i) {
            (*gx)(L2 * i + l - 1) += dq_weight(i) * qa;
            (*gx)(L2 * i + L + l - 1) += dq_weight(i) * qb;
          }
        }
      }
    }
    return c;
  }

 private:
  const ObjectiveContext& ctx_;
  const CollisionModel* col_;
  const std::vector<double>& col_times_;
  double col_margin_;
  double f0_;
  Eigen::MatrixXd N_;
  int m_ = 0;
  int n_con_ = 0;
  std::vector<Eigen::VectorXd> B_;
};

struct LbfgsOutcome {
  Eigen::VectorXd z;
  double f = kInf;
  int iterations = 0;
};

// Limited-memory BFGS with Armijo backtracking. fg returns +inf outside the domain.
template <class FG>
LbfgsOutcome lbfgs(FG&& fg, Eigen::VectorXd z, int max_iter) {
  constexpr int kMemory = 10;
  LbfgsOutcome out;
  Eigen::VectorXd g(z.size());
  double f = fg(z, g);
  out.z = z;
  out.f = f;
  if (!std::isfinite(f) || z.size() == 0) return out;
  std::deque<Eigen::VectorXd> S, Yh;
  std::deque<double> Rho;
  int stall = 0;
  for (int it = 0; it < max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(1.0, std::abs(f))) {
      logger()->debug("lbfgs: gradient converged at iteration {}", it);
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd d = -g;
    std::vector<double> alpha(S.size());
    for (int k = static_cast<int>(S.size()) - 1; k >= 0; --k) {
      alpha[static_cast<std::size_t>(k)] = Rho[static_cast<std::size_t>(k)] * S[static_cast<std::size_t>(k)].dot(d);
      d -= alpha[static_cast<std::size_t>(k)] * Yh[static_cast<std::size_t>(k)];
    }
    if (!S.empty()) d *= S.back().dot(Yh.back()) / Yh.back().squaredNorm();
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double beta = Rho[k] * Yh[k].dot(d);
      d += S[k] * (alpha[k] - beta);
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      S.clear();
      Yh.clear();
      Rho.clear();
      d = -g;
      slope = g.dot(d);
    }
    double step = S.empty() ? std::min(1.0, 1.0 / std::max(1e-12, g.norm())) : 1.0;
    Eigen::VectorXd zn, gn(z.size());
    double fn = kInf;
    bool accepted = false;
    for (int bt = 0; bt < 50; ++bt) {
      zn = z + step * d;
      fn = fg(zn, gn);
      if (std::isfinite(fn) && fn <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    out.iterations = it + 1;
    if (!accepted) {
      logger()->debug("lbfgs: line search failed at iteration {} (slope {:.3g})", it + 1, slope);
      if (S.empty()) break;
      // Stale curvature pairs; retry from steepest descent.
      S.clear();
      Yh.clear();
      Rho.clear();
      continue;
    }
    const Eigen::VectorXd s = zn - z;
    const Eigen::VectorXd y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm()) {
      S.push_back(s);
      Yh.push_back(y);
      Rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > kMemory) {
        S.pop_front();
        Yh.pop_front();
        Rho.pop_front();
      }
    }
    const double gain = f - fn;
    z = zn;
    g = gn;
    f = fn;
    out.z = z;
    out.f = f;
    stall = gain <= 1e-12 * std::max(1.0, std::abs(f)) ? stall + 1 : 0;
    if (stall >= 5) {
      logger()->debug("lbfgs: stalled at iteration {}", it + 1);
      break;
    }
  }
  return out;
}

struct AlOutcome {
  Eigen::VectorXd x;
  StepSummary summary;
};

// Augmented Lagrangian over the reduced coordinates. Keeps the best iterate:
// the lowest objective among those within tolerance, otherwise the least violating.
AlOutcome augmented_lagrangian(const ReducedProblem& prob, const ObjectiveContext& ctx, const CollisionModel* col,
                               const std::vector<double>& col_times, const Eigen::VectorXd& x0, int budget,
                               double tol) {
  Eigen::VectorXd z = prob.to_z(x0);
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(prob.n_constraints());
  double rho = 10.0;
  double prev_viol = kInf;
  double prev_f = kInf;

  AlOutcome best;
  best.x = prob.to_x(z);
  double best_f = prob.objective(best.x, nullptr);
  double best_v = violation_of(ctx, best.x, col, col_times);
  int used = 0;
  int outer = 0;
  while (used < budget && outer < 60) {
    const int inner_cap = std::min(budget - used, 250);
    auto fg = [&](const Eigen::VectorXd& zz, Eigen::VectorXd& gz) -> double {
      const Eigen::VectorXd x = prob.to_x(zz);
      Eigen::VectorXd gf, gc;
      const double f = prob.objective(x, &gf);
      if (!std::isfinite(f)) return kInf;
      double pen = 0.0;
      prob.constraints(x, &lam, rho, &pen, &gc);
      gz = prob.grad_to_z(gf + gc);
      return f + pen;
    };
    const LbfgsOutcome res = lbfgs(fg, z, inner_cap);
    used += std::max(1, res.iterations);
    ++outer;
    z = res.z;
    const Eigen::VectorXd x = prob.to_x(z);
    const Eigen::VectorXd c = prob.constraints(x, nullptr, rho, nullptr, nullptr);
    const double viol = c.size() > 0 ? std::max(0.0, c.maxCoeff()) : 0.0;
    const double f = prob.objective(x, nullptr);
    const double v_raw = violation_of(ctx, x, col, col_times);
    const bool ok = v_raw <= tol;
    const bool best_ok = best_v <= tol;
    if ((ok && (!best_ok || f < best_f)) || (!ok && !best_ok && v_raw < best_v)) {
      best.x = x;
      best_f = f;
      best_v = v_raw;
    }
    logger()->debug("AL outer {}: f={:.6g} viol={:.3g} rho={:.3g} inner={}", outer, f, viol, rho, res.iterations);
    for (Eigen::Index k = 0; k < lam.size(); ++k) lam(k) = std::max(0.0, lam(k) + rho * c(k));
    if (viol > 0.25 * prev_viol) rho = std::min(rho * 10.0, 1e8);
    const bool settled = viol <= 1e-2 * tol && std::abs(prev_f - f) <= 1e-7 * std::abs(f);
    prev_viol = viol;
    prev_f = f;
    if (settled && res.iterations < inner_cap) break;
  }
  best.summary.iterations = used;
  best.summary.outer_iterations = outer;
  best.summary.r_c = best_f;
  best.summary.max_violation = best_v;
  return best;
}

}  // namespace

SamplerResult sample_feasible(const ObjectiveContext& ctx, const CollisionModel* collisions, std::mt19937_64& rng,
                              int max_draws, int collision_oversample) {
  const int n = ctx.dof();
  const int L = ctx.fourier.order;
  const int L2 = 2 * L;
  const Eigen::MatrixXd N = boundary_null_space(L, ctx.fourier.boundary);
  const Eigen::MatrixXd P = N * N.transpose();
  const bool use_col = collisions && !collisions->empty();
  const auto col_times = use_col ? dense_times(ctx, collision_oversample) : std::vector<double>{};
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  SamplerResult res;
  Eigen::VectorXd best_fallback;
  double best_g = -kInf;
  while (res.draws < max_draws) {
    Eigen::VectorXd x(L2 * n);
    bool scaled = false;
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd B = joint_bounds(ctx, i);
      Eigen::VectorXd c(L2);
      bool ok = false;
      while (res.draws < max_draws) {
        ++res.draws;
        for (int j = 0; j < L2; ++j) c(j) = B(j % L) * unit(rng);
        c = P * c;
        if (joint_feasible(ctx, i, c)) {
          ok = true;
          break;
        }
      }
      if (!ok) {
        c *= shrink_factor(ctx, i, c) * (1.0 - 1e-12);
        scaled = true;
      }
      x.segment(L2 * i, L2) = c;
    }
    double g = kInf;
    if (use_col) g = min_collision(ctx, ctx.trajectory(x), *collisions, col_times);
    const bool col_ok = !use_col || g >= collisions->margin;
    if (col_ok && !scaled) {
      res.coeffs = x;
      res.feasible = true;
      return res;
    }
    if (g > best_g || best_fallback.size() == 0) {
      best_g = g;
      best_fallback = x;
      res.scaled_fallback = scaled;
    }
    if (scaled) break;
  }
  res.coeffs = best_fallback;
  res.feasible = false;
  return res;
}

OptResult optimize(ObjectiveContext ctx, const CollisionModel* collisions, const OptimizerOptions& options) {
  if (options.n_starts < 1) throw ConfigError("optimizer n_starts must be at least 1");
  if (collisions && !collisions->empty()) validate_collision_model(ctx.chain, *collisions);
  const int S = options.n_starts;
  const bool use_col = collisions && !collisions->empty();
  const auto col_times = use_col ? dense_times(ctx, options.collision_oversample) : std::vector<double>{};

  // Initial points for every start.
  std::vector<SamplerResult> samples(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    std::mt19937_64 rng(derive_seed(options.seed, "start", static_cast<std::uint64_t>(s)));
    samples[static_cast<std::size_t>(s)] =
        sample_feasible(ctx, collisions, rng, options.max_draws, options.collision_oversample);
    if (!samples[static_cast<std::size_t>(s)].feasible) {
      logger()->warn("optimize: start {} has no fully feasible sampled point after {} draws", s,
                     samples[static_cast<std::size_t>(s)].draws);
    }
  }
  if (ctx.scale.size() == 0) {
    Eigen::MatrixXd stack(0, ctx.proj.rank());
    for (const auto& smp : samples) {
      const Eigen::MatrixXd Y = stacked_base_regressor(ctx, ctx.trajectory(smp.coeffs), false);
      Eigen::MatrixXd grown(stack.rows() + Y.rows(), Y.cols());
      grown << stack, Y;
      stack = std::move(grown);
    }
    // Unit norm per single trajectory stack.
    ctx.scale = unit_norm_scale(stack) * std::sqrt(static_cast<double>(S));
  }

  OptResult result;
  result.scale = ctx.scale;
  result.starts.resize(static_cast<std::size_t>(S));

  auto run_start = [&](int s) {
    StartSummary& st = result.starts[static_cast<std::size_t>(s)];
    st.index = s;
    const SamplerResult& smp = samples[static_cast<std::size_t>(s)];
    st.sampled_feasible = smp.feasible;
    st.sampled_r_c = cost(smp.coeffs, ctx);
    st.coeffs = smp.coeffs;
    st.final_r_c = st.sampled_r_c;
    st.final_violation = violation_of(ctx, smp.coeffs, collisions, col_times);
    if (!std::isfinite(st.sampled_r_c)) return;
    const double f0 = st.sampled_r_c;

    ReducedProblem p1(ctx, collisions, false, col_times, 0.0, f0);
    AlOutcome o1 = augmented_lagrangian(p1, ctx, nullptr, col_times, smp.coeffs, options.step1_max_iter,
                                        options.tolerance);
    Eigen::VectorXd x1 = polish(ctx, o1.x);
    st.step1 = o1.summary;
    st.step1.r_c = cost(x1, ctx);
    st.step1.max_violation = violation_of(ctx, x1, nullptr, col_times);

    Eigen::VectorXd x2 = x1;
    st.step2 = st.step1;
    st.step2.iterations = 0;
    st.step2.outer_iterations = 0;
    if (use_col) {
      ReducedProblem p2(ctx, collisions, true, col_times, collisions->margin + options.collision_buffer, f0);
      AlOutcome o2 = augmented_lagrangian(p2, ctx, collisions, col_times, x1, options.step2_max_iter,
                                          options.tolerance);
      x2 = polish(ctx, o2.x);
      st.step2 = o2.summary;
      st.step2.r_c = cost(x2, ctx);
      st.step2.max_violation = violation_of(ctx, x2, collisions, col_times);
    }
    st.coeffs = x2;
    st.final_r_c = st.step2.r_c;
    st.final_violation = st.step2.max_violation;
    // Never return something worse than the feasible sampled point.
    const bool opt_ok = st.final_violation <= options.tolerance;
    if (smp.feasible && (!opt_ok || st.sampled_r_c < st.final_r_c)) {
      st.coeffs = smp.coeffs;
      st.final_r_c = st.sampled_r_c;
      st.final_violation = violation_of(ctx, smp.coeffs, collisions, col_times);
      st.kept_sample = true;
    }
    logger()->info("optimize: start {} r_c {:.4g} -> step1 {:.4g} -> step2 {:.4g} (violation {:.2e})", s,
                   st.sampled_r_c, st.step1.r_c, st.step2.r_c, st.final_violation);
  };

  int workers = options.threads > 0 ? options.threads
                                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::clamp(workers, 1, S);
  if (workers == 1) {
    for (int s = 0; s < S; ++s) run_start(s);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int s = next++; s < S; s = next++) run_start(s);
      });
    }
    for (auto& t : pool) t.join();
  }

  // Reduction: lowest r_c among feasible starts, else least violation.
  int best = -1;
  for (int s = 0; s < S; ++s) {
    const auto& st = result.starts[static_cast<std::size_t>(s)];
    if (!std::isfinite(st.final_r_c)) continue;
    if (best < 0) {
      best = s;
      continue;
    }
    const auto& b = result.starts[static_cast<std::size_t>(best)];
    const bool ok = st.final_violation <= options.tolerance;
    const bool bok = b.final_violation <= options.tolerance;
    if ((ok && !bok) || (ok == bok && (ok ? st.final_r_c < b.final_r_c : st.final_violation < b.final_violation))) {
      best = s;
    }
  }
  if (best < 0) {
    result.all_singular = true;
    logger()->error("optimize: every start produced a singular regressor stack");
    return result;
  }
  const auto& win = result.starts[static_cast<std::size_t>(best)];
  const FourierTrajectory traj = ctx.trajectory(win.coeffs);
  result.traj = traj;
  result.start_index = best;
  result.r_c = win.final_r_c;
  result.constraint_max_violation = win.final_violation;
  result.feasible = win.final_violation <= options.tolerance;
  result.cond = condition_number(stacked_base_regressor(ctx, traj, true));
  result.cond_raw = condition_number(stacked_base_regressor(ctx, traj, false));
  result.cond_cost = condition_number(cost_stack(ctx, traj));
  result.initial_r_c = win.sampled_r_c;
  result.initial_cond =
      condition_number(stacked_base_regressor(ctx, ctx.trajectory(samples[static_cast<std::size_t>(best)].coeffs), true));
  for (const auto& st : result.starts) result.iterations += st.step1.iterations + st.step2.iterations;
  if (!result.feasible) {
    logger()->warn("optimize: no start met the tolerance; least violating result has violation {:.3e}",
                   result.constraint_max_violation);
  }
  return result;
}

}  // namespace exciteid
