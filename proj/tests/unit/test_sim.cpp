#include <doctest.h>

#include <cmath>
#include <numbers>

#include "exciteid/error.hpp"
#include "exciteid/sim.hpp"
#include "helpers.hpp"

using namespace exciteid;

namespace {

FourierTrajectory kuka_traj() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(7, 2, 0.1), b = Eigen::MatrixXd::Constant(7, 2, -0.05);
  return FourierTrajectory(a, b, 2.0 * std::numbers::pi * 0.1, Eigen::VectorXd::Zero(7));
}

StdParams kuka_truth() {
  return nominal_params(testutil::kuka(), Eigen::VectorXd::Constant(7, 0.5), Eigen::VectorXd::Constant(7, 0.3));
}

}  // namespace

TEST_SUITE("sim") {
  TEST_CASE("zero noise reproduces the model") {
    const auto& c = testutil::kuka();
    const auto tr = kuka_traj();
    const auto ds = simulate_dataset(c, tr, kuka_truth(), NoiseSpec{}, 20.0);
    REQUIRE(ds.samples.size() == 200);
    CHECK(ds.dof == 7);
    for (const auto& s : ds.samples) {
      const auto st = tr.evaluate(s.t);
      CHECK(s.dq == st.dq);
      CHECK(s.ddq.array().isNaN().all());
      CHECK(*s.tau == rnea(c, st.q, st.dq, st.ddq, kuka_truth()));
    }
    CHECK(simulate_dataset(c, tr, kuka_truth(), NoiseSpec{}, 20.0, 3).samples.size() == 600);
  }

  TEST_CASE("noise level") {
    const auto& c = testutil::pendulum();
    Eigen::MatrixXd a(2, 1), b(2, 1);
    a << 0.2, 0.1;
    b << 0.0, 0.1;
    const FourierTrajectory tr(a, b, 2.0 * std::numbers::pi * 0.1, Eigen::VectorXd::Zero(2));
    const StdParams th = nominal_params(c);
    NoiseSpec noise;
    noise.sigma_tau = 0.1;
    noise.sigma_dq = 0.02;
    noise.seed = 9;
    const auto ds = simulate_dataset(c, tr, th, noise, 500.0);
    REQUIRE(ds.samples.size() == 5000);
    double ss_tau = 0.0, ss_dq = 0.0, mean = 0.0;
    for (const auto& s : ds.samples) {
      const auto st = tr.evaluate(s.t);
      const Eigen::VectorXd e = *s.tau - rnea(c, st.q, st.dq, st.ddq, th);
      ss_tau += e.squaredNorm();
      mean += e.sum();
      ss_dq += (s.dq - st.dq).squaredNorm();
    }
    const double n = 2.0 * static_cast<double>(ds.samples.size());
    CHECK(std::abs(std::sqrt(ss_tau / n) - 0.1) < 0.005);
    CHECK(std::abs(std::sqrt(ss_dq / n) - 0.02) < 0.001);
    CHECK(std::abs(mean / n) < 0.005);
  }

  TEST_CASE("pulse is recovered as external torque") {
    const auto& c = testutil::kuka();
    const auto tr = kuka_traj();
    NoiseSpec noise;
    noise.sigma_tau = 0.01;
    noise.seed = 4;
    noise.pulse = TorquePulse{2, 3.0, 1.0, 4.0};
    const auto ds = simulate_dataset(c, tr, kuka_truth(), noise, 20.0);
    for (const auto& s : ds.samples) {
      const auto st = tr.evaluate(s.t);
      const Eigen::VectorXd ext = external_torque(*s.tau, rnea(c, st.q, st.dq, st.ddq, kuka_truth()));
      const bool on = s.t >= 3.0 && s.t < 4.0;
      CHECK(std::abs(ext(2) - (on ? 4.0 : 0.0)) < 0.06);
      CHECK(std::abs(ext(0)) < 0.06);
    }
  }

  TEST_CASE("determinism") {
    const auto& c = testutil::kuka();
    NoiseSpec noise;
    noise.sigma_tau = 0.1;
    noise.sigma_dq = 0.01;
    noise.seed = 5;
    const auto a = simulate_dataset(c, kuka_traj(), kuka_truth(), noise, 20.0);
    const auto b = simulate_dataset(c, kuka_traj(), kuka_truth(), noise, 20.0);
    noise.seed = 6;
    const auto d = simulate_dataset(c, kuka_traj(), kuka_truth(), noise, 20.0);
    for (std::size_t k = 0; k < a.samples.size(); ++k) {
      CHECK(*a.samples[k].tau == *b.samples[k].tau);
      CHECK(a.samples[k].dq == b.samples[k].dq);
    }
    CHECK(*a.samples[7].tau != *d.samples[7].tau);
  }

  TEST_CASE("csv round trip keeps NaN and exact values") {
    const auto& c = testutil::pendulum();
    NoiseSpec noise;
    noise.sigma_tau = 0.1;
    noise.seed = 3;
    Eigen::MatrixXd a(2, 2), b(2, 2);
    a << 0.2, 0.1, -0.1, 0.3;
    b << 0.1, 0.0, 0.2, -0.1;
    const FourierTrajectory tr(a, b, 2.0 * std::numbers::pi * 0.1, Eigen::VectorXd::Zero(2));
    const auto ds = simulate_dataset(c, tr, nominal_params(c), noise, 10.0);
    const std::string path = testutil::tmpdir("sim_csv") + "/ds.csv";
    write_dataset_csv(path, ds);
    const auto back = read_dataset_csv(path);
    REQUIRE(back.samples.size() == ds.samples.size());
    for (std::size_t k = 0; k < ds.samples.size(); ++k) {
      CHECK(back.samples[k].t == ds.samples[k].t);
      CHECK(back.samples[k].q == ds.samples[k].q);
      CHECK(*back.samples[k].tau == *ds.samples[k].tau);
      CHECK(back.samples[k].ddq.array().isNaN().all());
    }
    CHECK_THROWS_AS(read_dataset_csv(path + ".missing"), MissingArtifactError);
  }

  TEST_CASE("argument checks") {
    const auto& c = testutil::pendulum();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 1);
    const FourierTrajectory tr(a, a, 1.0, Eigen::VectorXd::Zero(2));
    NoiseSpec bad;
    bad.sigma_tau = -1.0;
    CHECK_THROWS_AS(simulate_dataset(c, tr, nominal_params(c), bad, 10.0), ConfigError);
    CHECK_THROWS_AS(simulate_dataset(c, tr, Eigen::VectorXd::Zero(5), NoiseSpec{}, 10.0), DimensionError);
    NoiseSpec pulse;
    pulse.pulse = TorquePulse{4, 0.0, 1.0, 1.0};
    CHECK_THROWS_AS(simulate_dataset(c, tr, nominal_params(c), pulse, 10.0), ConfigError);
  }
}
