#include "exciteid/bvls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>

#include "exciteid/error.hpp"
#include "exciteid/log.hpp"

namespace exciteid {

namespace {

constexpr double kTikhonov = 1e-10;

// Least squares on the columns in `free_idx` with the others fixed at x.
Eigen::VectorXd sub_solve(const Eigen::MatrixXd& R, const Eigen::VectorXd& c, const Eigen::VectorXd& x,
                          const std::vector<int>& free_idx) {
  const Eigen::Index n = R.cols();
  Eigen::VectorXd rhs = c;
  std::vector<char> is_free(static_cast<std::size_t>(n), 0);
  for (int j : free_idx) is_free[static_cast<std::size_t>(j)] = 1;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!is_free[static_cast<std::size_t>(j)]) rhs -= R.col(j) * x(j);
  }
  Eigen::MatrixXd Af(R.rows(), static_cast<Eigen::Index>(free_idx.size()));
  for (std::size_t k = 0; k < free_idx.size(); ++k) Af.col(static_cast<Eigen::Index>(k)) = R.col(free_idx[k]);
  return Af.colPivHouseholderQr().solve(rhs);
}

}  // namespace

double bvls_kkt_residual(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& lb, const Eigen::VectorXd& ub, std::vector<int>* state) {
  const Eigen::VectorXd w = A.transpose() * (b - A * x);  // minus half the gradient
  const double ref = std::max((A.transpose() * b).lpNorm<Eigen::Infinity>(),
                              (A.transpose() * (A * x)).lpNorm<Eigen::Infinity>());
  const double scale = ref > 0.0 ? ref : 1.0;
  double worst = 0.0;
  if (state) state->assign(static_cast<std::size_t>(x.size()), 0);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double width = ub(j) - lb(j);
    const double tol = 1e-10 * std::max(1.0, std::abs(width));
    double v = 0.0;
    int s = 0;
    if (x(j) <= lb(j) + tol) {
      s = -1;
      v = std::max(0.0, w(j));  // moving up would help
    } else if (x(j) >= ub(j) - tol) {
      s = 1;
      v = std::max(0.0, -w(j));
    } else {
      v = std::abs(w(j));
    }
    if (state) (*state)[static_cast<std::size_t>(j)] = s;
    worst = std::max(worst, v / scale);
  }
  return worst;
}

BvlsResult solve_bvls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& lb,
                      const Eigen::VectorXd& ub, int max_iter) {
  const Eigen::Index n = A.cols();
  require_size(b.size(), A.rows(), "bvls rhs");
  require_size(lb.size(), n, "bvls lower bounds");
  require_size(ub.size(), n, "bvls upper bounds");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(lb(j) < ub(j))) throw DegenerateError("bvls: empty box in coordinate " + std::to_string(j));
  }
  if (!A.allFinite() || !b.allFinite()) throw Error("bvls: non-finite data");
  if (max_iter <= 0) max_iter = static_cast<int>(10 * n + 100);

  // Column scaling, then reduction to an n x n triangular problem.
  Eigen::VectorXd D(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double nrm = A.col(j).norm();
    D(j) = nrm > 0.0 ? 1.0 / nrm : 1.0;
  }
  const Eigen::MatrixXd As = A * D.asDiagonal();
  const Eigen::VectorXd ls = lb.cwiseQuotient(D), us = ub.cwiseQuotient(D);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(As);
  const Eigen::Index k = std::min(As.rows(), n);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  R.topRows(k) = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  c.head(k) = (qr.householderQ().transpose() * b).head(k);

  BvlsResult res;
  const double rmax = R.diagonal().cwiseAbs().maxCoeff();
  if (As.rows() < n || R.diagonal().cwiseAbs().minCoeff() <= 1e-12 * std::max(rmax, 1e-300)) {
    logger()->warn("bvls: regression matrix is rank deficient; adding a {} Tikhonov term", kTikhonov);
    Eigen::MatrixXd Ra(2 * n, n);
    Ra << R, std::sqrt(kTikhonov) * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd ca(2 * n);
    ca << c, Eigen::VectorXd::Zero(n);
    R = std::move(Ra);
    c = std::move(ca);
    res.regularized = true;
  }

  auto clip = [&](Eigen::VectorXd v) {
    return v.cwiseMax(ls).cwiseMin(us);
  };
  std::vector<int> all(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) all[static_cast<std::size_t>(j)] = static_cast<int>(j);
  Eigen::VectorXd x = clip(sub_solve(R, c, Eigen::VectorXd::Zero(n), all));
  // 0 free, -1 lower, +1 upper
  std::vector<int> st(static_cast<std::size_t>(n), 0);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (x(j) <= ls(j)) st[static_cast<std::size_t>(j)] = -1;
    else if (x(j) >= us(j)) st[static_cast<std::size_t>(j)] = 1;
  }

  int last_freed = -1;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Eigen::VectorXd w = R.transpose() * (c - R * x);
    // Bound variable whose gradient most strongly asks to leave its bound.
    int pick = -1;
    double best = 0.0;
    const double tol = 1e-12 * std::max(1.0, (R.transpose() * c).lpNorm<Eigen::Infinity>());
    for (Eigen::Index j = 0; j < n; ++j) {
      const int s = st[static_cast<std::size_t>(j)];
      const double v = s == -1 ? w(j) : (s == 1 ? -w(j) : 0.0);
      if (v > tol && v > best && static_cast<int>(j) != last_freed) {
        best = v;
        pick = static_cast<int>(j);
      }
    }
    // Also re-solve when the free set is not yet optimal.
    std::vector<int> free_idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (st[static_cast<std::size_t>(j)] == 0) free_idx.push_back(static_cast<int>(j));
    }
    double free_grad = 0.0;
    for (int j : free_idx) free_grad = std::max(free_grad, std::abs(w(j)));
    if (pick < 0 && free_grad <= tol * 1e3) {
      res.converged = true;
      break;
    }
    if (pick >= 0) {
      st[static_cast<std::size_t>(pick)] = 0;
      free_idx.push_back(pick);
      std::sort(free_idx.begin(), free_idx.end());
    }
    // Inner loop: move toward the free-set solution, clamping on the way.
    for (int inner = 0; inner <= n; ++inner) {
      if (free_idx.empty()) break;
      const Eigen::VectorXd z = sub_solve(R, c, x, free_idx);
      double alpha = 1.0;
      int hit = -1;
      for (std::size_t q = 0; q < free_idx.size(); ++q) {
        const int j = free_idx[q];
        const double zj = z(static_cast<Eigen::Index>(q));
        if (zj < ls(j) || zj > us(j)) {
          const double bound = zj < ls(j) ? ls(j) : us(j);
          const double denom = zj - x(j);
          const double a = denom != 0.0 ? (bound - x(j)) / denom : 0.0;
          if (a < alpha) {
            alpha = std::max(0.0, a);
            hit = j;
          }
        }
      }
      for (std::size_t q = 0; q < free_idx.size(); ++q) {
        const int j = free_idx[q];
        x(j) += alpha * (z(static_cast<Eigen::Index>(q)) - x(j));
      }
      if (hit < 0) break;
      // Move every free variable now sitting on (or beyond) a bound to the active set.
      std::vector<int> still_free;
      for (int j : free_idx) {
        if (j == hit || x(j) <= ls(j) + 1e-15 * std::abs(ls(j)) || x(j) >= us(j) - 1e-15 * std::abs(us(j))) {
          const bool lower = std::abs(x(j) - ls(j)) <= std::abs(x(j) - us(j));
          x(j) = lower ? ls(j) : us(j);
          st[static_cast<std::size_t>(j)] = lower ? -1 : 1;
        } else {
          still_free.push_back(j);
        }
      }
      free_idx = std::move(still_free);
    }
    // A variable that was clamped straight back is skipped once to avoid cycling.
    last_freed = (pick >= 0 && st[static_cast<std::size_t>(pick)] != 0) ? pick : -1;
  }
  res.iterations = it;
  res.x = x.cwiseProduct(D);
  res.x = res.x.cwiseMax(lb).cwiseMin(ub);
  res.kkt_residual = bvls_kkt_residual(A, b, res.x, lb, ub, &res.state);
  res.kkt_ok = res.kkt_residual <= 1e-8;
  res.residual_norm = (A * res.x - b).norm();
  if (!res.converged) logger()->warn("bvls: iteration cap {} reached", max_iter);
  return res;
}

}  // namespace exciteid
