#include "exciteid/sim.hpp"

#include <cmath>
#include <limits>

#include "exciteid/error.hpp"
#include "exciteid/seed.hpp"

namespace exciteid {

IdentDataset simulate_dataset(const KinematicChain& chain, const FourierTrajectory& traj,
                              const StdParams& theta_true, const NoiseSpec& noise, double f_s, int periods) {
  const int n = chain.dof();
  require_size(traj.dof(), n, "simulate_dataset trajectory");
  require_size(theta_true.size(), std_param_count(n), "simulate_dataset theta");
  if (!(noise.sigma_tau >= 0.0) || !(noise.sigma_dq >= 0.0)) throw ConfigError("noise sigmas must be non-negative");
  if (periods < 1) throw ConfigError("simulate: periods must be at least 1");
  if (noise.pulse && (noise.pulse->joint < 0 || noise.pulse->joint >= n)) {
    throw ConfigError("simulate: pulse joint out of range");
  }
  const auto one = grid_times(traj, f_s);
  const std::size_t per = one.size();
  IdentDataset ds;
  ds.dof = n;
  ds.samples.resize(per * static_cast<std::size_t>(periods));
  const std::uint64_t tau_seed = derive_seed(noise.seed, "tau");
  const std::uint64_t dq_seed = derive_seed(noise.seed, "dq");
  for (std::size_t k = 0; k < ds.samples.size(); ++k) {
    const double t = static_cast<double>(k) / f_s;
    const auto st = traj.evaluate(t);
    StateSample& s = ds.samples[k];
    s.t = t;
    s.q = st.q;
    s.dq = st.dq;
    s.ddq = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    Eigen::VectorXd tau = rnea(chain, st.q, st.dq, st.ddq, theta_true);
    for (int i = 0; i < n; ++i) {
      const std::uint64_t ctr = static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(i);
      if (noise.sigma_tau > 0.0) tau(i) += noise.sigma_tau * counter_normal(tau_seed, ctr);
      if (noise.sigma_dq > 0.0) s.dq(i) += noise.sigma_dq * counter_normal(dq_seed, ctr);
    }
    if (noise.pulse && t >= noise.pulse->start && t < noise.pulse->start + noise.pulse->duration) {
      tau(noise.pulse->joint) += noise.pulse->amplitude;
    }
    s.tau = tau;
  }
  return ds;
}

}  // namespace exciteid
