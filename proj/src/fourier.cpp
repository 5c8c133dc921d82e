#include "exciteid/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "exciteid/error.hpp"

namespace exciteid {

FourierTrajectory::FourierTrajectory(Eigen::MatrixXd a, Eigen::MatrixXd b, double omega_f,
                                     Eigen::VectorXd q_offset)
    : a_(std::move(a)), b_(std::move(b)), omega_f_(omega_f), q_offset_(std::move(q_offset)) {
  if (a_.rows() != b_.rows() || a_.cols() != b_.cols()) {
    throw DimensionError("FourierTrajectory: a and b must have the same shape");
  }
  if (a_.cols() < 1) throw Error("FourierTrajectory: series order must be at least 1");
  if (!(omega_f_ > 0.0) || !std::isfinite(omega_f_)) {
    throw Error("FourierTrajectory: fundamental frequency must be positive");
  }
  require_size(q_offset_.size(), a_.rows(), "FourierTrajectory q_offset");
  if (!a_.allFinite() || !b_.allFinite() || !q_offset_.allFinite()) {
    throw Error("FourierTrajectory: non-finite coefficients");
  }
}

FourierTrajectory FourierTrajectory::zeros(int dof, int order, double omega_f,
                                           Eigen::VectorXd q_offset) {
  return FourierTrajectory(Eigen::MatrixXd::Zero(dof, order), Eigen::MatrixXd::Zero(dof, order),
                           omega_f, std::move(q_offset));
}

double FourierTrajectory::period() const { return 2.0 * std::numbers::pi / omega_f_; }

FourierTrajectory::State FourierTrajectory::evaluate(double t) const {
  const int n = dof();
  State s{q_offset_, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  for (int l = 1; l <= order(); ++l) {
    const double wl = omega_f_ * l;
    const double sn = std::sin(wl * t);
    const double cs = std::cos(wl * t);
    for (int i = 0; i < n; ++i) {
      const double a = a_(i, l - 1);
      const double b = b_(i, l - 1);
      s.q(i) += (a * sn - b * cs) / wl;
      s.dq(i) += a * cs + b * sn;
      s.ddq(i) += wl * (b * cs - a * sn);
    }
  }
  return s;
}

Eigen::VectorXd FourierTrajectory::coefficients() const {
  const int L = order();
  Eigen::VectorXd x(2 * L * dof());
  for (int i = 0; i < dof(); ++i) {
    x.segment(2 * L * i, L) = a_.row(i).transpose();
    x.segment(2 * L * i + L, L) = b_.row(i).transpose();
  }
  return x;
}

FourierTrajectory FourierTrajectory::with_coefficients(const Eigen::VectorXd& x) const {
  const int L = order();
  require_size(x.size(), 2 * L * dof(), "with_coefficients");
  Eigen::MatrixXd a(dof(), L), b(dof(), L);
  for (int i = 0; i < dof(); ++i) {
    a.row(i) = x.segment(2 * L * i, L).transpose();
    b.row(i) = x.segment(2 * L * i + L, L).transpose();
  }
  return FourierTrajectory(std::move(a), std::move(b), omega_f_, q_offset_);
}

std::vector<double> grid_times(const FourierTrajectory& traj, double f_s) {
  const double f_f = traj.omega_f() / (2.0 * std::numbers::pi);
  if (!(f_s > 2.0 * traj.order() * f_f)) {
    throw Error("sample_grid: sampling frequency must exceed 2 * L * f_f (Nyquist)");
  }
  const long count = std::lround(f_s * traj.period());
  std::vector<double> times(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k) times[static_cast<std::size_t>(k)] = static_cast<double>(k) / f_s;
  return times;
}

std::vector<StateSample> sample_grid(const FourierTrajectory& traj, double f_s) {
  std::vector<StateSample> out;
  for (double t : grid_times(traj, f_s)) {
    auto st = traj.evaluate(t);
    out.push_back(StateSample{t, std::move(st.q), std::move(st.dq), std::move(st.ddq), std::nullopt});
  }
  return out;
}

Eigen::VectorXd mid_range_offset(const KinematicChain& chain) {
  Eigen::VectorXd off(chain.dof());
  for (int i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joints[static_cast<std::size_t>(i)];
    off(i) = 0.5 * (j.q_min + j.q_max);
  }
  return off;
}

double position_range(const JointSpec& joint, double offset) {
  return std::min(joint.q_max - offset, offset - joint.q_min);
}

double velocity_limit(const JointSpec& joint) { return std::min(joint.dq_max, -joint.dq_min); }

double coefficient_bound(const JointSpec& joint, double offset, double omega_f, int order, int l) {
  return std::min(omega_f * l * position_range(joint, offset) / order, velocity_limit(joint));
}

Eigen::MatrixXd boundary_matrix(int order, BoundaryMode mode) {
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(3, 2 * order);
  for (int l = 1; l <= order; ++l) {
    const int ia = l - 1;
    const int ib = order + l - 1;
    if (mode == BoundaryMode::ZeroState) {
      E(0, ib) = 1.0 / l;  // q(0) - offset = -sum b_l / (w l)
      E(1, ia) = 1.0;      // dq(0) = sum a_l
      E(2, ib) = l;        // ddq(0) = w sum b_l l
    } else {
      E(0, ia) = 1.0 / l;
      E(1, ib) = 1.0;
      E(2, ia) = l;
    }
  }
  return E;
}

double ConstraintReport::max_violation() const {
  double v = 0.0;
  for (const auto& j : joints) {
    v = std::max(v, j.boundary.cwiseAbs().maxCoeff());
    v = std::max({v, j.position_amplitude, j.velocity_amplitude, j.coefficient_box});
  }
  return v;
}

ConstraintReport feasibility_residuals(const FourierTrajectory& traj, const KinematicChain& chain,
                                       BoundaryMode mode) {
  require_size(traj.dof(), chain.dof(), "feasibility_residuals dof");
  const int L = traj.order();
  const double w = traj.omega_f();
  ConstraintReport rep;
  const auto s0 = traj.evaluate(0.0);
  for (int i = 0; i < traj.dof(); ++i) {
    const JointSpec& js = chain.joints[static_cast<std::size_t>(i)];
    const double off = traj.q_offset()(i);
    JointResiduals r;
    double pos = 0.0, vel = 0.0, box = -std::numeric_limits<double>::infinity();
    double sum_a_over_l = 0.0, sum_b = 0.0, sum_a_l = 0.0;
    for (int l = 1; l <= L; ++l) {
      const double a = traj.a()(i, l - 1);
      const double b = traj.b()(i, l - 1);
      const double mag = std::hypot(a, b);
      pos += mag / l;
      vel += mag;
      const double bound = coefficient_bound(js, off, w, L, l);
      box = std::max({box, std::abs(a) - bound, std::abs(b) - bound});
      sum_a_over_l += a / l;
      sum_b += b;
      sum_a_l += a * l;
    }
    if (mode == BoundaryMode::ZeroState) {
      r.boundary = Eigen::Vector3d(s0.q(i) - off, s0.dq(i), s0.ddq(i));
    } else {
      r.boundary = Eigen::Vector3d(sum_a_over_l, sum_b, sum_a_l);
    }
    r.position_amplitude = pos - w * position_range(js, off);
    r.velocity_amplitude = vel - velocity_limit(js);
    r.coefficient_box = box;
    rep.joints.push_back(r);
  }
  return rep;
}

}  // namespace exciteid
