#include "exciteid/base_params.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "exciteid/error.hpp"

namespace exciteid {

PivotedQR pivoted_qr(const Eigen::MatrixXd& A, double tau_rank, const std::vector<int>& forced) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  if (!A.allFinite()) throw DegenerateError("pivoted_qr: non-finite entries");

  Eigen::MatrixXd W = A;
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  PivotedQR out;
  out.reference = n > 0 ? W.colwise().norm().maxCoeff() : 0.0;
  const double tol = tau_rank * out.reference;
  const int steps = std::min(m, n);

  std::vector<int> pending_forced = forced;
  std::reverse(pending_forced.begin(), pending_forced.end());

  auto remaining_norm = [&](int k, int pos) { return W.col(pos).tail(m - k).norm(); };
  auto position_of = [&](int col) {
    return static_cast<int>(std::find(perm.begin(), perm.end(), col) - perm.begin());
  };

  int k = 0;
  for (; k < steps; ++k) {
    int pivot = -1;
    while (!pending_forced.empty()) {
      const int pos = position_of(pending_forced.back());
      pending_forced.pop_back();
      if (pos >= k && remaining_norm(k, pos) > tol) {
        pivot = pos;
        break;
      }
    }
    if (pivot < 0) {
      // Lowest original index whose remaining norm clears the tolerance. This
      // picks the first independent set in index order, so the selection is
      // structural and does not depend on the sampled states.
      int best_col = -1;
      for (int pos = k; pos < n; ++pos) {
        const int col = perm[static_cast<std::size_t>(pos)];
        if ((best_col < 0 || col < best_col) && remaining_norm(k, pos) > tol) {
          best_col = col;
          pivot = pos;
        }
      }
      if (pivot < 0) break;
    }
    if (pivot != k) {
      W.col(k).swap(W.col(pivot));
      std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(pivot)]);
    }
    // Householder reflector zeroing W(k+1:m, k).
    Eigen::VectorXd v = W.col(k).tail(m - k);
    const double alpha = v.norm();
    if (alpha == 0.0) break;
    const double sign = v(0) >= 0.0 ? 1.0 : -1.0;
    v(0) += sign * alpha;
    const double vnorm2 = v.squaredNorm();
    if (vnorm2 > 0.0) {
      auto block = W.bottomRightCorner(m - k, n - k);
      const Eigen::RowVectorXd proj = (v.transpose() * block) * (2.0 / vnorm2);
      block.noalias() -= v * proj;
    }
    W.col(k).tail(m - k - 1).setZero();
  }
  out.rank = k;
  out.R = W.topRows(steps).triangularView<Eigen::Upper>();
  out.perm = perm;
  return out;
}

std::vector<int> friction_columns(int dof) {
  std::vector<int> cols;
  for (int i = 0; i < dof; ++i) {
    cols.push_back(kParamsPerJoint * i + kCoulombOffset);
    cols.push_back(kParamsPerJoint * i + kViscousOffset);
  }
  return cols;
}

Eigen::MatrixXd random_state_stack(const KinematicChain& chain, int n_samples,
                                   std::uint64_t seed, double acc_range) {
  const int n = chain.dof();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd stack(static_cast<Eigen::Index>(n_samples) * n, std_param_count(n));
  Eigen::VectorXd q(n), dq(n), ddq(n);
  for (int s = 0; s < n_samples; ++s) {
    for (int i = 0; i < n; ++i) {
      const JointSpec& js = chain.joints[static_cast<std::size_t>(i)];
      q(i) = js.q_min + (js.q_max - js.q_min) * unit(rng);
      const double vmax = std::min(js.dq_max, -js.dq_min);
      dq(i) = vmax * (2.0 * unit(rng) - 1.0);
      ddq(i) = acc_range * (2.0 * unit(rng) - 1.0);
    }
    stack.middleRows(static_cast<Eigen::Index>(s) * n, n) = regressor(chain, q, dq, ddq);
  }
  return stack;
}

BaseProjection base_projection_from_stack(const Eigen::MatrixXd& stack, double tau_rank,
                                          const std::vector<int>& forced) {
  const int n = static_cast<int>(stack.cols());
  const PivotedQR qr = pivoted_qr(stack, tau_rank, forced);
  const int r = qr.rank;
  if (r == 0) throw DegenerateError("base projection: rank collapse (no independent columns)");

  // K_d = R1^{-1} R2 in pivot order.
  const Eigen::MatrixXd R1 = qr.R.topLeftCorner(r, r);
  const Eigen::MatrixXd R2 = qr.R.topRightCorner(r, n - r);
  const Eigen::MatrixXd Kd_pivot = R1.triangularView<Eigen::Upper>().solve(R2);

  std::vector<int> b_order(static_cast<std::size_t>(r));
  std::iota(b_order.begin(), b_order.end(), 0);
  std::sort(b_order.begin(), b_order.end(),
            [&](int a, int b) { return qr.perm[static_cast<std::size_t>(a)] < qr.perm[static_cast<std::size_t>(b)]; });
  std::vector<int> d_order(static_cast<std::size_t>(n - r));
  std::iota(d_order.begin(), d_order.end(), 0);
  std::sort(d_order.begin(), d_order.end(), [&](int a, int b) {
    return qr.perm[static_cast<std::size_t>(r + a)] < qr.perm[static_cast<std::size_t>(r + b)];
  });

  BaseProjection proj;
  proj.n_std = n;
  proj.K_d.resize(r, n - r);
  for (int bi = 0; bi < r; ++bi) {
    proj.b_idx.push_back(qr.perm[static_cast<std::size_t>(b_order[static_cast<std::size_t>(bi)])]);
  }
  for (int di = 0; di < n - r; ++di) {
    proj.d_idx.push_back(qr.perm[static_cast<std::size_t>(r + d_order[static_cast<std::size_t>(di)])]);
  }
  for (int bi = 0; bi < r; ++bi) {
    for (int di = 0; di < n - r; ++di) {
      proj.K_d(bi, di) = Kd_pivot(b_order[static_cast<std::size_t>(bi)], d_order[static_cast<std::size_t>(di)]);
    }
  }
  proj.K = Eigen::MatrixXd::Zero(r, n);
  for (int bi = 0; bi < r; ++bi) proj.K(bi, proj.b_idx[static_cast<std::size_t>(bi)]) = 1.0;
  for (int di = 0; di < n - r; ++di) proj.K.col(proj.d_idx[static_cast<std::size_t>(di)]) = proj.K_d.col(di);
  return proj;
}

BaseProjection compute_base_projection(const KinematicChain& chain,
                                       const BaseProjectionOptions& options) {
  const int n = chain.dof();
  if (static_cast<long>(options.n_samples) * n < 2L * std_param_count(n)) {
    throw Error("compute_base_projection: n_samples * dof must be at least twice the parameter count");
  }
  const Eigen::MatrixXd stack =
      random_state_stack(chain, options.n_samples, options.seed, options.acc_range);
  return base_projection_from_stack(stack, options.tau_rank,
                                    options.force_friction ? friction_columns(n) : std::vector<int>{});
}

Eigen::VectorXd project(const StdParams& params, const BaseProjection& proj) {
  require_size(params.size(), proj.n_std, "project params");
  return proj.K * params;
}

Eigen::MatrixXd select_base_columns(const Eigen::MatrixXd& Y, const BaseProjection& proj) {
  require_size(Y.cols(), proj.n_std, "select_base_columns");
  Eigen::MatrixXd Yb(Y.rows(), proj.rank());
  for (int c = 0; c < proj.rank(); ++c) Yb.col(c) = Y.col(proj.b_idx[static_cast<std::size_t>(c)]);
  return Yb;
}

Eigen::MatrixXd base_regressor(const KinematicChain& chain, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& dq, const Eigen::VectorXd& ddq,
                               const BaseProjection& proj) {
  return select_base_columns(regressor(chain, q, dq, ddq), proj);
}

std::vector<std::string> base_param_labels(const BaseProjection& proj, int dof) {
  const auto all = std_param_labels(dof);
  std::vector<std::string> out;
  for (int c : proj.b_idx) out.push_back(all.at(static_cast<std::size_t>(c)));
  return out;
}

}  // namespace exciteid
