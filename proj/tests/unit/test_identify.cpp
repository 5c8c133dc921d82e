#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/QR>

#include "exciteid/error.hpp"
#include "exciteid/fourier.hpp"
#include "exciteid/identify.hpp"
#include "helpers.hpp"

using namespace exciteid;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

FourierTrajectory excitation() {
  Eigen::MatrixXd a(2, 3), b(2, 3);
  a << 0.3, -0.2, 0.1, 0.25, 0.1, -0.15;
  b << -0.1, 0.2, 0.05, 0.2, -0.1, 0.1;
  return FourierTrajectory(a, b, 2.0 * std::numbers::pi * 0.1, Eigen::VectorXd::Zero(2));
}

StdParams truth() {
  return nominal_params(testutil::pendulum(), Eigen::Vector2d(0.5, 0.4), Eigen::Vector2d(0.3, 0.2));
}

// Exact accelerations, optional torque noise.
IdentDataset exact_dataset(const FourierTrajectory& tr, double f_s, double sigma, std::uint64_t seed) {
  const auto& c = testutil::pendulum();
  const StdParams th = truth();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  IdentDataset ds;
  ds.dof = 2;
  const int n = static_cast<int>(std::lround(tr.period() * f_s));
  for (int k = 0; k < n; ++k) {
    const auto s = tr.evaluate(k / f_s);
    Eigen::VectorXd tau = rnea(c, s.q, s.dq, s.ddq, th);
    for (int i = 0; i < 2; ++i) tau(i) += sigma * g(rng);
    ds.samples.push_back({k / f_s, s.q, s.dq, s.ddq, tau});
  }
  return ds;
}

double residual(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& x) {
  return (A * x - b).norm();
}

// Enumerates every lower / free / upper assignment and keeps the best feasible one.
double brute_force_optimum(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& lb,
                           const Eigen::VectorXd& ub) {
  const int n = static_cast<int>(A.cols());
  int total = 1;
  for (int i = 0; i < n; ++i) total *= 3;
  double best = kInf;
  for (int code = 0; code < total; ++code) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<int> free;
    int c = code;
    for (int i = 0; i < n; ++i, c /= 3) {
      if (c % 3 == 0) x(i) = lb(i);
      else if (c % 3 == 2) x(i) = ub(i);
      else free.push_back(i);
    }
    if (!free.empty()) {
      const Eigen::VectorXd rhs = b - A * x;
      const Eigen::MatrixXd Af = A(Eigen::all, free);
      const Eigen::VectorXd xf = Af.colPivHouseholderQr().solve(rhs);
      bool inside = true;
      for (std::size_t k = 0; k < free.size(); ++k) {
        x(free[k]) = xf(static_cast<Eigen::Index>(k));
        inside &= xf(static_cast<Eigen::Index>(k)) >= lb(free[k]) && xf(static_cast<Eigen::Index>(k)) <= ub(free[k]);
      }
      if (!inside) continue;
    }
    best = std::min(best, residual(A, b, x));
  }
  return best;
}

}  // namespace

TEST_SUITE("identify") {
  TEST_CASE("unbounded case matches least squares") {
    std::mt19937_64 rng(1);
    Eigen::MatrixXd A(40, 6);
    for (int j = 0; j < 6; ++j) A.col(j) = testutil::uniform(rng, 40, -1, 1) * std::pow(10.0, j - 3);
    const Eigen::VectorXd b = testutil::uniform(rng, 40, -1, 1);
    const Eigen::VectorXd ls = A.colPivHouseholderQr().solve(b);
    const auto r = solve_bvls(A, b, Eigen::VectorXd::Constant(6, -kInf), Eigen::VectorXd::Constant(6, kInf));
    CHECK(r.converged);
    CHECK((r.x - ls).norm() <= 1e-8 * ls.norm());
  }

  TEST_CASE("active-set solution matches enumeration") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 30; ++rep) {
      Eigen::MatrixXd A(12, 4);
      for (int j = 0; j < 4; ++j) A.col(j) = testutil::uniform(rng, 12, -1, 1);
      const Eigen::VectorXd b = testutil::uniform(rng, 12, -2, 2);
      const Eigen::VectorXd lb = testutil::uniform(rng, 4, -0.5, 0.0);
      const Eigen::VectorXd ub = lb + testutil::uniform(rng, 4, 0.1, 0.8);
      const auto r = solve_bvls(A, b, lb, ub);
      CHECK(r.kkt_ok);
      CHECK(((r.x - lb).array() >= 0.0).all());
      CHECK(((ub - r.x).array() >= 0.0).all());
      const double oracle = brute_force_optimum(A, b, lb, ub);
      CHECK(residual(A, b, r.x) <= oracle * (1.0 + 1e-10) + 1e-12);
    }
  }

  TEST_CASE("component outside the box clamps") {
    std::mt19937_64 rng(3);
    Eigen::MatrixXd A(30, 3);
    for (int j = 0; j < 3; ++j) A.col(j) = testutil::uniform(rng, 30, -1, 1);
    const Eigen::Vector3d x_true(0.2, 1.5, -0.1);
    const Eigen::Vector3d lb(-1, -1, -1), ub(1, 1, 1);
    const auto r = solve_bvls(A, A * x_true, lb, ub);
    CHECK(r.x(1) == 1.0);
    CHECK(r.state[1] == 1);
    CHECK(r.state[0] == 0);
    CHECK(r.kkt_ok);
    // the gradient of the residual points out of the box at the active bound
    const Eigen::VectorXd grad = A.transpose() * (A * r.x - A * x_true);
    CHECK(grad(1) <= 0.0);
    CHECK(bvls_kkt_residual(A, A * x_true, r.x, lb, ub) < 1e-8);
  }

  TEST_CASE("relaxing the box never increases the residual") {
    std::mt19937_64 rng(4);
    Eigen::MatrixXd A(20, 5);
    for (int j = 0; j < 5; ++j) A.col(j) = testutil::uniform(rng, 20, -1, 1);
    const Eigen::VectorXd b = testutil::uniform(rng, 20, -3, 3);
    double prev = kInf;
    for (double w : {0.05, 0.1, 0.3, 1.0, 3.0, 10.0}) {
      const Eigen::VectorXd lo = Eigen::VectorXd::Constant(5, -w), hi = Eigen::VectorXd::Constant(5, w);
      const double res = residual(A, b, solve_bvls(A, b, lo, hi).x);
      CHECK(res <= prev * (1.0 + 1e-12));
      prev = res;
    }
  }

  TEST_CASE("rank-deficient matrix is regularized") {
    std::mt19937_64 rng(5);
    Eigen::MatrixXd A(15, 3);
    A.col(0) = testutil::uniform(rng, 15, -1, 1);
    A.col(1) = testutil::uniform(rng, 15, -1, 1);
    A.col(2) = A.col(0);
    const auto r = solve_bvls(A, testutil::uniform(rng, 15, -1, 1), Eigen::VectorXd::Constant(3, -1),
                              Eigen::VectorXd::Constant(3, 1));
    CHECK(r.regularized);
    CHECK(r.x.allFinite());
    CHECK_THROWS_AS(solve_bvls(A, Eigen::VectorXd::Zero(15), Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)),
                    DegenerateError);
  }

  TEST_CASE("interval mapping matches corner enumeration") {
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd K = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return testutil::uniform(rng, 1, -2, 2)(0); });
    const Eigen::VectorXd lb = testutil::uniform(rng, 4, -1, 0);
    const Eigen::VectorXd ub = lb + testutil::uniform(rng, 4, 0.1, 1);
    const auto [lo, hi] = map_bounds(K, lb, ub);
    for (int r = 0; r < 3; ++r) {
      double mn = kInf, mx = -kInf;
      for (int corner = 0; corner < 16; ++corner) {
        Eigen::VectorXd x(4);
        for (int j = 0; j < 4; ++j) x(j) = (corner >> j) & 1 ? ub(j) : lb(j);
        mn = std::min(mn, K.row(r).dot(x));
        mx = std::max(mx, K.row(r).dot(x));
      }
      CHECK(lo(r) == doctest::Approx(mn).epsilon(1e-12));
      CHECK(hi(r) == doctest::Approx(mx).epsilon(1e-12));
    }
    const auto [li, hi2] = map_bounds(Eigen::MatrixXd::Identity(4, 4), lb, ub);
    CHECK(li == lb);
    CHECK(hi2 == ub);
  }

  TEST_CASE("bounds around the URDF nominals") {
    const auto& c = testutil::pendulum();
    const auto p = compute_base_projection(c, {});
    const auto [lb, ub] = build_bounds(c, p);
    const Eigen::VectorXd tb = project(truth(), p);
    CHECK(((tb - lb).array() > 0.0).all());
    CHECK(((ub - tb).array() > 0.0).all());
    BoundOptions tight;
    tight.mu_margin = 0.0;
    tight.floor = 0.0;
    CHECK_THROWS_AS(build_bounds(c, p, tight), DegenerateError);
    tight.mu_margin = -1.0;
    CHECK_THROWS_AS(build_bounds(c, p, tight), ConfigError);
  }

  TEST_CASE("noiseless recovery and validation") {
    const auto& c = testutil::pendulum();
    const auto p = compute_base_projection(c, {});
    const auto ds = exact_dataset(excitation(), 50.0, 0.0, 0);
    IdentProblem prob = build_problem(c, p, ds);
    std::tie(prob.lb, prob.ub) = build_bounds(c, p);
    const auto rep = solve_bounded_ls(prob);
    const Eigen::VectorXd tb = project(truth(), p);
    CHECK(rep.converged);
    CHECK(rep.kkt_ok);
    CHECK(rep.active_bounds.empty());
    CHECK(relative_linf_error(rep.theta_b_hat, tb) < 1e-6);
    CHECK(rep.torque_rms_per_joint.maxCoeff() < 1e-8);
    CHECK(rep.samples == 500);

    const auto same = validate(c, p, rep.theta_b_hat, ds);
    CHECK(same.torque_rms_per_joint.maxCoeff() < 1e-8);
    const auto held_out = validate(c, p, rep.theta_b_hat, exact_dataset(excitation(), 37.0, 0.0, 0));
    CHECK(held_out.torque_rms_per_joint.maxCoeff() < 1e-8);
    const auto corrupted = validate(c, p, 1.1 * rep.theta_b_hat, ds);
    for (int i = 0; i < 2; ++i) CHECK(corrupted.torque_rms_per_joint(i) > same.torque_rms_per_joint(i));
  }

  TEST_CASE("torque noise reaches the noise floor on held-out data") {
    const auto& c = testutil::pendulum();
    const auto p = compute_base_projection(c, {});
    IdentProblem prob = build_problem(c, p, exact_dataset(excitation(), 100.0, 0.1, 1));
    std::tie(prob.lb, prob.ub) = build_bounds(c, p);
    const auto rep = solve_bounded_ls(prob);
    const auto val = validate(c, p, rep.theta_b_hat, exact_dataset(excitation(), 73.0, 0.1, 2));
    CHECK(val.torque_rms_per_joint.maxCoeff() <= 0.12);
    CHECK(val.torque_rms_per_joint.minCoeff() >= 0.08);
  }

  TEST_CASE("missing accelerations are rejected") {
    const auto& c = testutil::pendulum();
    const auto p = compute_base_projection(c, {});
    auto ds = exact_dataset(excitation(), 20.0, 0.0, 0);
    ds.samples[5].ddq(1) = std::nan("");
    CHECK_THROWS_AS(build_problem(c, p, ds), Error);
    // samples in the warm-up are skipped
    ds.warmup = 6;
    CHECK(build_problem(c, p, ds).tau.size() == 2 * (200 - 6));
    for (auto& s : ds.samples) s.tau.reset();
    CHECK_THROWS_AS(build_problem(c, p, ds), Error);
  }
}
