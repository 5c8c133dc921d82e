#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Core>

#include "exciteid/dynamics.hpp"
#include "exciteid/urdf_chain.hpp"

namespace testutil {

inline std::string data(const std::string& name) { return std::string(EXCITEID_TEST_DATA) + "/" + name; }

inline std::string tmpdir(const std::string& name) {
  const auto p = std::filesystem::path(EXCITEID_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline const exciteid::KinematicChain& pendulum() {
  static const auto c = exciteid::load_urdf_file(data("pendulum2.urdf"));
  return c;
}

inline const exciteid::KinematicChain& kuka() {
  static const auto c = exciteid::load_urdf_file(data("kuka7.urdf"));
  return c;
}

inline Eigen::VectorXd uniform(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

struct State {
  Eigen::VectorXd q, dq, ddq;
};

inline State random_state(const exciteid::KinematicChain& c, std::mt19937_64& rng) {
  State s{Eigen::VectorXd(c.dof()), uniform(rng, c.dof(), -1.5, 1.5), uniform(rng, c.dof(), -5.0, 5.0)};
  for (int i = 0; i < c.dof(); ++i) {
    std::uniform_real_distribution<double> u(c.joints[i].q_min, c.joints[i].q_max);
    s.q(i) = u(rng);
  }
  return s;
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

}  // namespace testutil
