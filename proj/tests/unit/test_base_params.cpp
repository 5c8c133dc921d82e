#include <doctest.h>

#include <Eigen/SVD>

#include "exciteid/base_params.hpp"
#include "exciteid/error.hpp"
#include "helpers.hpp"

using namespace exciteid;

namespace {

BaseProjection projection(const KinematicChain& c, std::uint64_t seed = 1, double tau = 1e-7) {
  BaseProjectionOptions o;
  o.seed = seed;
  o.tau_rank = tau;
  return compute_base_projection(c, o);
}

}  // namespace

TEST_SUITE("base_params") {
  TEST_CASE("full-rank toy keeps every column") {
    std::mt19937_64 rng(1);
    Eigen::MatrixXd A(20, 4);
    for (int j = 0; j < 4; ++j) A.col(j) = testutil::uniform(rng, 20, -1, 1);
    const auto p = base_projection_from_stack(A, 1e-7, {});
    CHECK(p.rank() == 4);
    CHECK(p.d_idx.empty());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(4, 4);
    for (int k = 0; k < 4; ++k) K(k, p.b_idx[k]) = 1.0;
    CHECK(p.K == K);
    CHECK(project(Eigen::Vector4d(1, 2, 3, 4), p).isApprox(K * Eigen::Vector4d(1, 2, 3, 4)));
  }

  TEST_CASE("dependent column is expressed through the independent ones") {
    std::mt19937_64 rng(2);
    Eigen::MatrixXd A(30, 3);
    A.col(0) = testutil::uniform(rng, 30, -1, 1);
    A.col(1) = testutil::uniform(rng, 30, -1, 1);
    A.col(2) = 2.0 * A.col(0) - 0.5 * A.col(1);
    const auto p = base_projection_from_stack(A, 1e-7, {});
    REQUIRE(p.rank() == 2);
    const Eigen::Vector3d theta(0.3, -1.1, 0.7);
    CHECK((A.leftCols(3) * theta - select_base_columns(A, p) * project(theta, p)).norm() < 1e-12);
  }

  TEST_CASE("pivot ties go to the lowest column index") {
    Eigen::MatrixXd A(4, 2);
    A << 1, 1, 2, 2, 3, 3, 4, 4;
    const auto qr = pivoted_qr(A, 1e-7);
    CHECK(qr.perm[0] == 0);
    CHECK(qr.rank == 1);
  }

  TEST_CASE("double pendulum rank agrees with an SVD of the same stack") {
    const auto& c = testutil::pendulum();
    const Eigen::MatrixXd stack = random_state_stack(c, 120, 1, 5.0);
    const auto p = base_projection_from_stack(stack, 1e-7, friction_columns(2));
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(stack).singularValues();
    int svd_rank = 0;
    for (int i = 0; i < sv.size(); ++i) svd_rank += sv(i) > 1e-7 * sv(0);
    CHECK(p.rank() == svd_rank);
    CHECK(p.rank() == 10);
  }

  TEST_CASE("projection residual on fresh states") {
    std::mt19937_64 rng(3);
    for (const auto* c : {&testutil::pendulum(), &testutil::kuka()}) {
      const auto p = projection(*c);
      CHECK(p.rank() < 12 * c->dof());
      CHECK(p.b_idx.size() + p.d_idx.size() == static_cast<std::size_t>(12 * c->dof()));
      const Eigen::VectorXd theta = testutil::uniform(rng, 12 * c->dof(), -1, 1);
      const Eigen::VectorXd tb = project(theta, p);
      for (int k = 0; k < 50; ++k) {
        const auto s = testutil::random_state(*c, rng);
        const Eigen::VectorXd tau = regressor(*c, s.q, s.dq, s.ddq) * theta;
        const Eigen::VectorXd tau_b = base_regressor(*c, s.q, s.dq, s.ddq, p) * tb;
        CHECK((tau - tau_b).lpNorm<Eigen::Infinity>() <= 1e-8 * std::max(1.0, tau.lpNorm<Eigen::Infinity>()));
      }
    }
  }

  TEST_CASE("base regressor selects columns") {
    const auto& c = testutil::kuka();
    const auto p = projection(c);
    std::mt19937_64 rng(4);
    const auto s = testutil::random_state(c, rng);
    const Eigen::MatrixXd Y = regressor(c, s.q, s.dq, s.ddq);
    const Eigen::MatrixXd Yb = base_regressor(c, s.q, s.dq, s.ddq, p);
    for (int k = 0; k < p.rank(); ++k) CHECK(Yb.col(k) == Y.col(p.b_idx[k]));
    CHECK(project(Eigen::VectorXd::Zero(84), p).norm() == 0.0);
  }

  TEST_CASE("friction columns are always independent") {
    const auto p = projection(testutil::kuka());
    for (int col : friction_columns(7)) CHECK(std::find(p.b_idx.begin(), p.b_idx.end(), col) != p.b_idx.end());
  }

  TEST_CASE("rank and selection are stable across seeds and tolerances") {
    for (const auto* c : {&testutil::pendulum(), &testutil::kuka()}) {
      const auto a = projection(*c, 1);
      const auto b = projection(*c, 2);
      CHECK(a.rank() == b.rank());
      CHECK(a.b_idx == b.b_idx);
      CHECK(projection(*c, 1, 1e-8).rank() == projection(*c, 1, 1e-6).rank());
    }
  }

  TEST_CASE("labels") {
    const auto p = projection(testutil::pendulum());
    const auto labels = base_param_labels(p, 2);
    CHECK(labels.size() == static_cast<std::size_t>(p.rank()));
    CHECK(std::find(labels.begin(), labels.end(), "J2.fv") != labels.end());
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(pivoted_qr(Eigen::MatrixXd::Constant(3, 3, std::nan("")), 1e-7), DegenerateError);
    CHECK_THROWS_AS(base_projection_from_stack(Eigen::MatrixXd::Zero(6, 3), 1e-7, {}), DegenerateError);
    CHECK_THROWS_AS(project(Eigen::VectorXd::Zero(5), projection(testutil::pendulum())), DimensionError);
  }
}
