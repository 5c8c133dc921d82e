#include "exciteid/identify.hpp"

#include <cmath>

#include "exciteid/error.hpp"
#include "exciteid/excitation.hpp"
#include "exciteid/log.hpp"

namespace exciteid {

std::pair<Eigen::VectorXd, Eigen::VectorXd> standard_bounds(const KinematicChain& chain,
                                                            const BoundOptions& options) {
  if (!(options.mu_margin >= 0.0) || !(options.floor >= 0.0)) {
    throw ConfigError("bounds: mu_margin and floor must be non-negative");
  }
  const StdParams nom = nominal_params(chain);
  Eigen::VectorXd lb(nom.size()), ub(nom.size());
  for (int i = 0; i < chain.dof(); ++i) {
    for (int k = 0; k < kParamsPerJoint; ++k) {
      const int j = kParamsPerJoint * i + k;
      if (k == kCoulombOffset || k == kViscousOffset) {
        lb(j) = 0.0;
        ub(j) = k == kCoulombOffset ? options.coulomb_cap : options.viscous_cap;
      } else {
        const double half = options.mu_margin * std::max(std::abs(nom(j)), options.floor);
        lb(j) = nom(j) - half;
        ub(j) = nom(j) + half;
      }
    }
  }
  return {lb, ub};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> map_bounds(const Eigen::MatrixXd& K, const Eigen::VectorXd& lb,
                                                       const Eigen::VectorXd& ub) {
  require_size(lb.size(), K.cols(), "map_bounds lb");
  require_size(ub.size(), K.cols(), "map_bounds ub");
  Eigen::VectorXd blo = Eigen::VectorXd::Zero(K.rows()), bhi = Eigen::VectorXd::Zero(K.rows());
  for (Eigen::Index r = 0; r < K.rows(); ++r) {
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      const double k = K(r, j);
      if (k == 0.0) continue;
      blo(r) += std::min(k * lb(j), k * ub(j));
      bhi(r) += std::max(k * lb(j), k * ub(j));
    }
  }
  return {blo, bhi};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> build_bounds(const KinematicChain& chain, const BaseProjection& proj,
                                                         const BoundOptions& options) {
  const auto [lb, ub] = standard_bounds(chain, options);
  auto mapped = map_bounds(proj.K, lb, ub);
  std::string bad;
  for (Eigen::Index r = 0; r < mapped.first.size(); ++r) {
    if (!(mapped.first(r) < mapped.second(r))) bad += (bad.empty() ? "" : ", ") + std::to_string(r);
  }
  if (!bad.empty()) throw DegenerateError("build_bounds: empty interval for base parameter rows " + bad);
  return mapped;
}

IdentProblem build_problem(const KinematicChain& chain, const BaseProjection& proj, const IdentDataset& ds) {
  validate_dataset(ds);
  require_size(ds.dof, chain.dof(), "identification dataset dof");
  if (!ds.has_torque()) throw Error("identification dataset has no torque columns");
  const int n = chain.dof();
  const std::size_t used = ds.samples.size() - ds.warmup;
  IdentProblem prob;
  prob.dof = n;
  prob.Yb.resize(static_cast<Eigen::Index>(used) * n, proj.rank());
  prob.tau.resize(static_cast<Eigen::Index>(used) * n);
  for (std::size_t k = ds.warmup; k < ds.samples.size(); ++k) {
    const auto& s = ds.samples[k];
    if (!s.ddq.allFinite()) {
      throw Error("identification dataset has no accelerations at t = " + format_double(s.t) +
                  "; run the filter stage first");
    }
    if (!s.q.allFinite() || !s.dq.allFinite() || !s.tau->allFinite()) {
      throw Error("identification dataset has non-finite values at t = " + format_double(s.t));
    }
    const Eigen::Index row = static_cast<Eigen::Index>(k - ds.warmup) * n;
    prob.Yb.middleRows(row, n) = base_regressor(chain, s.q, s.dq, s.ddq, proj);
    prob.tau.segment(row, n) = *s.tau;
  }
  return prob;
}

IdentReport torque_errors(const IdentProblem& prob, const Eigen::VectorXd& theta_b) {
  require_size(theta_b.size(), prob.Yb.cols(), "torque_errors theta_b");
  const int n = prob.dof;
  IdentReport rep;
  rep.theta_b_hat = theta_b;
  rep.samples = n > 0 ? static_cast<int>(prob.tau.size() / n) : 0;
  rep.torque_rms_per_joint = Eigen::VectorXd::Zero(n);
  rep.max_abs_error_per_joint = Eigen::VectorXd::Zero(n);
  if (rep.samples > 0) {
    const Eigen::VectorXd e = prob.tau - prob.Yb * theta_b;
    for (int k = 0; k < rep.samples; ++k) {
      for (int i = 0; i < n; ++i) {
        const double v = e(static_cast<Eigen::Index>(k) * n + i);
        rep.torque_rms_per_joint(i) += v * v;
        rep.max_abs_error_per_joint(i) = std::max(rep.max_abs_error_per_joint(i), std::abs(v));
      }
    }
    rep.torque_rms_per_joint = (rep.torque_rms_per_joint / rep.samples).cwiseSqrt();
    rep.cond_raw = condition_number(prob.Yb);
    rep.cond_scaled = condition_number(prob.Yb * unit_norm_scale(prob.Yb).asDiagonal());
  }
  return rep;
}

IdentReport solve_bounded_ls(const IdentProblem& prob) {
  require_size(prob.tau.size(), prob.Yb.rows(), "solve_bounded_ls tau");
  if (prob.Yb.rows() == 0) throw Error("solve_bounded_ls: no samples");
  const BvlsResult sol = solve_bvls(prob.Yb, prob.tau, prob.lb, prob.ub);
  IdentReport rep = torque_errors(prob, sol.x);
  for (std::size_t j = 0; j < sol.state.size(); ++j) {
    if (sol.state[j] != 0) rep.active_bounds.push_back(static_cast<int>(j));
  }
  rep.converged = sol.converged;
  rep.kkt_ok = sol.kkt_ok;
  rep.regularized = sol.regularized;
  if (!sol.kkt_ok) logger()->warn("identify: KKT residual {:.3e} above tolerance", sol.kkt_residual);
  return rep;
}

IdentReport validate(const KinematicChain& chain, const BaseProjection& proj, const Eigen::VectorXd& theta_b,
                     const IdentDataset& ds_validation) {
  const IdentProblem prob = build_problem(chain, proj, ds_validation);
  IdentReport rep = torque_errors(prob, theta_b);
  rep.converged = true;
  return rep;
}

double relative_linf_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  require_size(estimate.size(), truth.size(), "relative_linf_error");
  const double t = truth.lpNorm<Eigen::Infinity>();
  const double e = (estimate - truth).lpNorm<Eigen::Infinity>();
  return t > 0.0 ? e / t : e;
}

}  // namespace exciteid
