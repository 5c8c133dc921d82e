#include "exciteid/dynamics.hpp"

#include <cmath>

#include <unsupported/Eigen/AutoDiff>

#include "exciteid/detail/regressor_impl.hpp"
#include "exciteid/error.hpp"

namespace exciteid {

int std_param_count(int dof) { return kParamsPerJoint * dof; }

std::vector<std::string> std_param_labels(int dof) {
  static const char* kInertial[] = {"m", "mcx", "mcy", "mcz", "Ixx",
                                    "Ixy", "Ixz", "Iyy", "Iyz", "Izz"};
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(std_param_count(dof)));
  for (int i = 1; i <= dof; ++i) {
    for (const char* s : kInertial) labels.push_back("L" + std::to_string(i) + "." + s);
    labels.push_back("J" + std::to_string(i) + ".fs");
    labels.push_back("J" + std::to_string(i) + ".fv");
  }
  return labels;
}

StdParams nominal_params(const KinematicChain& chain, const Eigen::VectorXd& coulomb,
                         const Eigen::VectorXd& viscous) {
  const int n = chain.dof();
  require_size(coulomb.size(), n, "nominal_params coulomb");
  require_size(viscous.size(), n, "nominal_params viscous");
  StdParams theta = StdParams::Zero(std_param_count(n));
  for (int i = 0; i < n; ++i) {
    const LinkSpec& l = chain.links[static_cast<std::size_t>(i)];
    const Eigen::Vector3d& c = l.com;
    // Parallel-axis shift from the com to the link origin.
    const Eigen::Matrix3d Io =
        l.inertia + l.mass * (c.squaredNorm() * Eigen::Matrix3d::Identity() - c * c.transpose());
    auto seg = theta.segment(kParamsPerJoint * i, kParamsPerJoint);
    seg(0) = l.mass;
    seg.segment<3>(1) = l.mass * c;
    seg(4) = Io(0, 0);
    seg(5) = Io(0, 1);
    seg(6) = Io(0, 2);
    seg(7) = Io(1, 1);
    seg(8) = Io(1, 2);
    seg(9) = Io(2, 2);
    seg(kCoulombOffset) = coulomb(i);
    seg(kViscousOffset) = viscous(i);
  }
  return theta;
}

StdParams nominal_params(const KinematicChain& chain) {
  return nominal_params(chain, Eigen::VectorXd::Zero(chain.dof()),
                        Eigen::VectorXd::Zero(chain.dof()));
}

namespace {

void check_state(const KinematicChain& chain, const Eigen::VectorXd& q, const Eigen::VectorXd& dq,
                 const Eigen::VectorXd& ddq) {
  require_size(q.size(), chain.dof(), "q");
  require_size(dq.size(), chain.dof(), "dq");
  require_size(ddq.size(), chain.dof(), "ddq");
}

double sign0(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

}  // namespace

Eigen::VectorXd rnea(const KinematicChain& chain, const Eigen::VectorXd& q,
                     const Eigen::VectorXd& dq, const Eigen::VectorXd& ddq,
                     const StdParams& params) {
  check_state(chain, q, dq, ddq);
  const int n = chain.dof();
  require_size(params.size(), std_param_count(n), "rnea params");

  std::vector<Eigen::Matrix3d> R(static_cast<std::size_t>(n));
  std::vector<Eigen::Vector3d> p(static_cast<std::size_t>(n)), f(static_cast<std::size_t>(n)),
      nm(static_cast<std::size_t>(n));
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  Eigen::Vector3d dw = Eigen::Vector3d::Zero();
  Eigen::Vector3d a = -chain.gravity;
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const JointSpec& js = chain.joints[k];
    R[k] = js.origin.linear() * axis_rotation(js.axis, q(i));
    p[k] = js.origin.translation();
    const Eigen::Vector3d& z = js.axis;
    const Eigen::Matrix3d Rt = R[k].transpose();
    const Eigen::Vector3d a_new = Rt * (a + dw.cross(p[k]) + w.cross(w.cross(p[k])));
    const Eigen::Vector3d w_new = Rt * w + z * dq(i);
    const Eigen::Vector3d dw_new = Rt * dw + z * ddq(i) + (Rt * w).cross(z * dq(i));
    w = w_new;
    dw = dw_new;
    a = a_new;

    const auto pi = params.segment(kParamsPerJoint * i, kParamsPerJoint);
    const double m = pi(0);
    const Eigen::Vector3d h = pi.segment<3>(1);
    Eigen::Matrix3d I;
    I << pi(4), pi(5), pi(6), pi(5), pi(7), pi(8), pi(6), pi(8), pi(9);
    f[k] = m * a + dw.cross(h) + w.cross(w.cross(h));
    nm[k] = I * dw + w.cross(I * w) + h.cross(a);
  }

  Eigen::VectorXd tau(n);
  Eigen::Vector3d F = Eigen::Vector3d::Zero();
  Eigen::Vector3d N = Eigen::Vector3d::Zero();
  for (int i = n - 1; i >= 0; --i) {
    const auto k = static_cast<std::size_t>(i);
    Eigen::Vector3d F_child = Eigen::Vector3d::Zero();
    Eigen::Vector3d N_child = Eigen::Vector3d::Zero();
    if (i + 1 < n) {
      F_child = R[k + 1] * F;
      N_child = R[k + 1] * N + p[k + 1].cross(F_child);
    }
    F = f[k] + F_child;
    N = nm[k] + N_child;
    const auto pi = params.segment(kParamsPerJoint * i, kParamsPerJoint);
    tau(i) = chain.joints[k].axis.dot(N) + pi(kCoulombOffset) * sign0(dq(i)) +
             pi(kViscousOffset) * dq(i);
  }
  return tau;
}

Eigen::MatrixXd regressor(const KinematicChain& chain, const Eigen::VectorXd& q,
                          const Eigen::VectorXd& dq, const Eigen::VectorXd& ddq) {
  check_state(chain, q, dq, ddq);
  const int n = chain.dof();
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, std_param_count(n));
  detail::visit_regressor<double>(
      chain, q, dq, ddq,
      [&](int i, int j, const Eigen::Matrix<double, 10, 1>& block) {
        Y.block<1, 10>(i, kParamsPerJoint * j) = block.transpose();
      },
      [&](int i, double s, double v) {
        Y(i, kParamsPerJoint * i + kCoulombOffset) = s;
        Y(i, kParamsPerJoint * i + kViscousOffset) = v;
      });
  return Y;
}

Eigen::MatrixXd regressor_by_probing(const KinematicChain& chain, const Eigen::VectorXd& q,
                                     const Eigen::VectorXd& dq, const Eigen::VectorXd& ddq) {
  const int n = chain.dof();
  const int p = std_param_count(n);
  Eigen::MatrixXd Y(n, p);
  StdParams e = StdParams::Zero(p);
  for (int c = 0; c < p; ++c) {
    e(c) = 1.0;
    Y.col(c) = rnea(chain, q, dq, ddq, e);
    e(c) = 0.0;
  }
  return Y;
}

Eigen::VectorXd external_torque(const Eigen::VectorXd& tau_raw, const Eigen::VectorXd& tau_model) {
  require_size(tau_model.size(), tau_raw.size(), "external_torque");
  return tau_raw - tau_model;
}

Eigen::VectorXd weighted_regressor_gradient(const KinematicChain& chain,
                                            const Eigen::VectorXd& q,
                                            const Eigen::VectorXd& dq,
                                            const Eigen::VectorXd& ddq,
                                            const Eigen::MatrixXd& weights) {
  check_state(chain, q, dq, ddq);
  const int n = chain.dof();
  if (weights.rows() != n || weights.cols() != std_param_count(n)) {
    throw DimensionError("weighted_regressor_gradient: weights must be dof x 12*dof");
  }
  // Four joints (q, dq, ddq each) per forward-mode pass.
  constexpr int kJointsPerPass = 4;
  constexpr int kLanes = 3 * kJointsPerPass;
  using Jet = Eigen::AutoDiffScalar<Eigen::Matrix<double, kLanes, 1>>;

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(3 * n);
  for (int first = 0; first < n; first += kJointsPerPass) {
    detail::VX<Jet> qj(n), dqj(n), ddqj(n);
    for (int i = 0; i < n; ++i) {
      qj(i) = Jet(q(i));
      dqj(i) = Jet(dq(i));
      ddqj(i) = Jet(ddq(i));
      const int lane = i - first;
      if (lane >= 0 && lane < kJointsPerPass) {
        qj(i).derivatives()(3 * lane) = 1.0;
        dqj(i).derivatives()(3 * lane + 1) = 1.0;
        ddqj(i).derivatives()(3 * lane + 2) = 1.0;
      }
    }
    Jet phi(0.0);
    detail::visit_regressor<Jet>(
        chain, qj, dqj, ddqj,
        [&](int i, int j, const Eigen::Matrix<Jet, 10, 1>& block) {
          const auto w = weights.block<1, 10>(i, kParamsPerJoint * j);
          for (int c = 0; c < 10; ++c) {
            if (w(c) != 0.0) phi += block(c) * w(c);
          }
        },
        [&](int i, const Jet& s, const Jet& v) {
          phi += s * weights(i, kParamsPerJoint * i + kCoulombOffset);
          phi += v * weights(i, kParamsPerJoint * i + kViscousOffset);
        });
    for (int i = first; i < std::min(n, first + kJointsPerPass); ++i) {
      const int lane = i - first;
      grad(i) = phi.derivatives()(3 * lane);
      grad(n + i) = phi.derivatives()(3 * lane + 1);
      grad(2 * n + i) = phi.derivatives()(3 * lane + 2);
    }
  }
  return grad;
}

}  // namespace exciteid
