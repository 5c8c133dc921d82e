#include "exciteid/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>

#include "exciteid/error.hpp"
#include "exciteid/log.hpp"

namespace exciteid {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

struct Component {
  Eigen::Vector3d mu;
  Eigen::Matrix3d sigma;
  Eigen::Matrix3d sigma_inv;
  double log_norm;  // log weight - 0.5 log det(2 pi sigma)
};

bool prepare(Component& c, double weight) {
  Eigen::LLT<Eigen::Matrix3d> llt(c.sigma);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::Matrix3d L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  c.sigma_inv = llt.solve(Eigen::Matrix3d::Identity());
  c.log_norm = std::log(weight) - 0.5 * (3.0 * kLog2Pi + logdet);
  return std::isfinite(c.log_norm);
}

// log p(x_i, k) for all i, k.
Eigen::MatrixXd joint_log_density(const PointCloud& X, const std::vector<Component>& comps) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(comps.size()));
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto& c = comps[k];
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector3d d = X.row(i).transpose() - c.mu;
      out(i, static_cast<Eigen::Index>(k)) = c.log_norm - 0.5 * d.dot(c.sigma_inv * d);
    }
  }
  return out;
}

// Row-wise log-sum-exp; fills responsibilities and returns the total log-likelihood.
double e_step(const Eigen::MatrixXd& logp, Eigen::MatrixXd& resp) {
  resp.resize(logp.rows(), logp.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double m = logp.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logp.row(i).array() - m).exp().matrix();
    const double s = e.sum();
    resp.row(i) = e / s;
    total += m + std::log(s);
  }
  return total;
}

double prior_term(const std::vector<Component>& comps, double reg) {
  double t = 0.0;
  for (const auto& c : comps) t -= 0.5 * reg * c.sigma_inv.trace();
  return t;
}

MFPEE to_model(const std::vector<Component>& comps, const Eigen::VectorXd& pi) {
  MFPEE m;
  m.mu.resize(static_cast<Eigen::Index>(comps.size()), 3);
  for (std::size_t k = 0; k < comps.size(); ++k) {
    m.mu.row(static_cast<Eigen::Index>(k)) = comps[k].mu.transpose();
    m.sigma.push_back(comps[k].sigma);
  }
  m.pi = pi;
  return m;
}

// k-means++ seeding; returns false when fewer than K distinct points exist.
bool seed_centers(const PointCloud& X, int K, std::mt19937_64& rng, std::vector<Eigen::Vector3d>& centers) {
  const Eigen::Index n = X.rows();
  centers.clear();
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.push_back(X.row(pick(rng)).transpose());
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (X.row(i).transpose() - centers[0]).squaredNorm();
  while (static_cast<int>(centers.size()) < K) {
    const double total = d2.sum();
    if (!(total > 0.0)) return false;
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    Eigen::Index chosen = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      r -= d2(i);
      if (r < 0.0 && d2(i) > 0.0) {
        chosen = i;
        break;
      }
    }
    if (!(d2(chosen) > 0.0)) {
      for (Eigen::Index i = n - 1; i >= 0; --i) {
        if (d2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centers.push_back(X.row(chosen).transpose());
    for (Eigen::Index i = 0; i < n; ++i) {
      d2(i) = std::min(d2(i), (X.row(i).transpose() - centers.back()).squaredNorm());
    }
  }
  return true;
}

// M-step: weights n_k / N, means, covariances (S_k + reg I) / n_k.
bool m_step(const PointCloud& X, const Eigen::MatrixXd& resp, double reg, std::vector<Component>& comps,
            Eigen::VectorXd& pi) {
  const Eigen::Index n = X.rows();
  const Eigen::Index K = resp.cols();
  comps.assign(static_cast<std::size_t>(K), Component{});
  pi.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double nk = resp.col(k).sum();
    if (!(nk > 0.0)) return false;
    Eigen::Vector3d mu = (resp.col(k).transpose() * X).transpose() / nk;
    Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector3d d = X.row(i).transpose() - mu;
      S.noalias() += resp(i, k) * d * d.transpose();
    }
    auto& c = comps[static_cast<std::size_t>(k)];
    c.mu = mu;
    c.sigma = (S + reg * Eigen::Matrix3d::Identity()) / nk;
    c.sigma = 0.5 * (c.sigma + c.sigma.transpose());
    pi(k) = nk / static_cast<double>(n);
    if (!prepare(c, pi(k))) return false;
  }
  return true;
}

GmmFit run_em(const PointCloud& X, const std::vector<Eigen::Vector3d>& centers, const GmmOptions& opt) {
  const Eigen::Index n = X.rows();
  const Eigen::Index K = static_cast<Eigen::Index>(centers.size());
  // Hard assignment to the nearest center, lowest index on ties.
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
      const double d = (X.row(i).transpose() - centers[static_cast<std::size_t>(k)]).squaredNorm();
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    resp(i, best) = 1.0;
  }
  GmmFit fit;
  std::vector<Component> comps;
  Eigen::VectorXd pi;
  if (!m_step(X, resp, opt.reg, comps, pi)) return fit;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iter; ++it) {
    const double ll = e_step(joint_log_density(X, comps), resp);
    const double obj = ll + prior_term(comps, opt.reg);
    fit.objective_trace.push_back(obj);
    fit.log_likelihood = ll;
    fit.model = to_model(comps, pi);
    fit.iterations = it + 1;
    if (obj - prev <= opt.rel_tol * std::max(1.0, std::abs(obj))) {
      fit.converged = true;
      break;
    }
    prev = obj;
    std::vector<Component> next;
    Eigen::VectorXd next_pi;
    if (!m_step(X, resp, opt.reg, next, next_pi)) break;
    comps = std::move(next);
    pi = std::move(next_pi);
  }
  return fit;
}

}  // namespace

double gmm_log_likelihood(const MFPEE& model, const PointCloud& pts) {
  std::vector<Component> comps(static_cast<std::size_t>(model.size()));
  for (int k = 0; k < model.size(); ++k) {
    auto& c = comps[static_cast<std::size_t>(k)];
    c.mu = model.mu.row(k).transpose();
    c.sigma = model.sigma[static_cast<std::size_t>(k)];
    if (!prepare(c, model.pi(k))) throw DegenerateError("gmm_log_likelihood: singular covariance");
  }
  Eigen::MatrixXd resp;
  return e_step(joint_log_density(pts, comps), resp);
}

GmmFit fit_gmm(const PointCloud& pts, int K, std::uint64_t seed, const GmmOptions& options) {
  if (pts.rows() == 0) throw Error("fit_gmm: empty point set");
  if (K < 1) throw Error("fit_gmm: K must be at least 1");
  if (!pts.allFinite()) throw Error("fit_gmm: non-finite points");
  std::mt19937_64 rng(seed);
  GmmFit best;
  double best_obj = -std::numeric_limits<double>::infinity();
  std::vector<Eigen::Vector3d> centers;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    if (K > pts.rows() || !seed_centers(pts, K, rng, centers)) return GmmFit{};
    GmmFit fit = run_em(pts, centers, options);
    if (fit.model.size() == 0) continue;
    if (fit.objective_trace.back() > best_obj) {
      best_obj = fit.objective_trace.back();
      best = std::move(fit);
    }
  }
  return best;
}

MfpeeSelection fit_mfpee(const PointCloud& pts, int k_max, std::uint64_t seed, const GmmOptions& options) {
  if (pts.rows() == 0) throw Error("fit_mfpee: empty point set");
  if (k_max < 1) throw Error("fit_mfpee: k_max must be at least 1");
  const int n = static_cast<int>(pts.rows());
  const int kcap = std::min(k_max, n);
  MfpeeSelection sel;
  sel.bic.assign(static_cast<std::size_t>(k_max), std::numeric_limits<double>::infinity());
  double best = std::numeric_limits<double>::infinity();
  for (int K = 1; K <= kcap; ++K) {
    GmmFit fit = fit_gmm(pts, K, seed + static_cast<std::uint64_t>(K) * 0x9E3779B97F4A7C15ULL, options);
    if (fit.model.size() == 0) continue;
    const double bic = -2.0 * fit.log_likelihood + (10.0 * K - 1.0) * std::log(static_cast<double>(n));
    sel.bic[static_cast<std::size_t>(K - 1)] = bic;
    if (bic < best) {
      best = bic;
      sel.k_star = K;
      sel.model = fit.model;
      sel.fit = std::move(fit);
    }
  }
  if (sel.k_star == 0) throw DegenerateError("fit_mfpee: no mixture could be fitted");
  logger()->debug("mfpee: K* = {} of {}", sel.k_star, kcap);
  return sel;
}

}  // namespace exciteid
