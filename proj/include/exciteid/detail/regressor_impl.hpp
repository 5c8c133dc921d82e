#pragma once

// Scalar-generic kinematics and regressor construction. Instantiated with
// double for evaluation and with forward-mode dual numbers for state gradients.

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "exciteid/dynamics.hpp"
#include "exciteid/urdf_chain.hpp"

namespace exciteid::detail {

template <class S>
using V3 = Eigen::Matrix<S, 3, 1>;
template <class S>
using M3 = Eigen::Matrix<S, 3, 3>;
template <class S>
using VX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline double value_of(double x) { return x; }
template <class S>
double value_of(const S& x) {
  return x.value();
}

template <class S>
S sgn(const S& x) {
  const double v = value_of(x);
  return S((v > 0.0) - (v < 0.0));
}

template <class S>
M3<S> rotation_about(const Eigen::Vector3d& k, const S& angle) {
  using std::cos;
  using std::sin;
  Eigen::Matrix3d K;
  K << 0.0, -k.z(), k.y(), k.z(), 0.0, -k.x(), -k.y(), k.x(), 0.0;
  const S s = sin(angle);
  const S c = cos(angle);
  M3<S> R = M3<S>::Identity();
  R += K.cast<S>() * s;
  R += (K * K).cast<S>() * (S(1.0) - c);
  return R;
}

template <class S>
struct LinkMotion {
  M3<S> R;  // parent -> link rotation
  V3<S> p;  // link origin in parent frame
  V3<S> w;
  V3<S> dw;
  V3<S> a;  // linear acceleration of the link origin, gravity folded in
};

template <class S>
std::vector<LinkMotion<S>> propagate_motion(const KinematicChain& chain, const VX<S>& q,
                                            const VX<S>& dq, const VX<S>& ddq) {
  const int n = chain.dof();
  std::vector<LinkMotion<S>> out(static_cast<std::size_t>(n));
  V3<S> w = V3<S>::Zero();
  V3<S> dw = V3<S>::Zero();
  V3<S> a = (-chain.gravity).cast<S>();
  for (int i = 0; i < n; ++i) {
    const JointSpec& js = chain.joints[static_cast<std::size_t>(i)];
    LinkMotion<S>& m = out[static_cast<std::size_t>(i)];
    m.R = js.origin.linear().cast<S>() * rotation_about<S>(js.axis, q(i));
    m.p = js.origin.translation().cast<S>();
    const V3<S> z = js.axis.cast<S>();
    const M3<S> Rt = m.R.transpose();
    const V3<S> a_parent = a + dw.cross(m.p) + w.cross(w.cross(m.p));
    const V3<S> w_in = Rt * w;
    m.w = w_in + z * dq(i);
    m.dw = Rt * dw + z * ddq(i) + w_in.cross(z) * dq(i);
    m.a = Rt * a_parent;
    w = m.w;
    dw = m.dw;
    a = m.a;
  }
  return out;
}

// Coefficients of the 10 inertial parameters of one link in the torque of a
// joint whose motion axis, seen from that link, is (u: rotation, v: moment).
template <class S>
Eigen::Matrix<S, 10, 1> link_block(const LinkMotion<S>& m, const V3<S>& u, const V3<S>& v) {
  Eigen::Matrix<S, 10, 1> y;
  const V3<S>& w = m.w;
  const V3<S>& dw = m.dw;
  const V3<S>& a = m.a;
  y(0) = v.dot(a);
  const V3<S> h = w * v.dot(w) - v * w.squaredNorm() + v.cross(dw) + a.cross(u);
  y.template segment<3>(1) = h;
  // u . (I dw) + (u x w) . (I w) over [xx, xy, xz, yy, yz, zz]
  const V3<S> uw = u.cross(w);
  auto inertia_coeffs = [](const V3<S>& uu, const V3<S>& vv) {
    Eigen::Matrix<S, 6, 1> c;
    c << uu(0) * vv(0), uu(0) * vv(1) + uu(1) * vv(0), uu(0) * vv(2) + uu(2) * vv(0),
        uu(1) * vv(1), uu(1) * vv(2) + uu(2) * vv(1), uu(2) * vv(2);
    return c;
  };
  y.template segment<6>(4) = inertia_coeffs(u, dw) + inertia_coeffs(uw, w);
  return y;
}

/// Visits every (joint i, link j >= i) pair with its block of regressor
/// coefficients, then every friction entry.
template <class S, class BlockFn, class FrictionFn>
void visit_regressor(const KinematicChain& chain, const VX<S>& q, const VX<S>& dq,
                     const VX<S>& ddq, BlockFn&& on_block, FrictionFn&& on_friction) {
  const int n = chain.dof();
  const auto motion = propagate_motion<S>(chain, q, dq, ddq);
  for (int i = 0; i < n; ++i) {
    V3<S> u = chain.joints[static_cast<std::size_t>(i)].axis.template cast<S>();
    V3<S> v = V3<S>::Zero();
    for (int j = i; j < n; ++j) {
      const auto& m = motion[static_cast<std::size_t>(j)];
      if (j > i) {
        const M3<S> Rt = m.R.transpose();
        const V3<S> v_next = Rt * (v + u.cross(m.p));
        u = Rt * u;
        v = v_next;
      }
      on_block(i, j, link_block<S>(m, u, v));
    }
    on_friction(i, sgn<S>(dq(i)), dq(i));
  }
}

}  // namespace exciteid::detail
