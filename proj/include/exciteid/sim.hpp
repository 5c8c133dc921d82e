#pragma once

#include <cstdint>
#include <optional>

#include "exciteid/dataset.hpp"
#include "exciteid/dynamics.hpp"
#include "exciteid/fourier.hpp"

namespace exciteid {

struct TorquePulse {
  int joint = 0;         // 0-based
  double start = 0.0;    // s
  double duration = 0.0; // s
  double amplitude = 0.0;  // N m
};

struct NoiseSpec {
  double sigma_tau = 0.0;  // N m
  double sigma_dq = 0.0;   // rad/s
  std::uint64_t seed = 0;
  std::optional<TorquePulse> pulse;
};

/// Samples `periods` periods of the trajectory at f_s. Torques are rnea of
/// theta_true plus white noise (and the pulse, if any); dq gets white noise;
/// ddq is NaN. Noise depends only on (seed, sample index, channel).
IdentDataset simulate_dataset(const KinematicChain& chain, const FourierTrajectory& traj,
                              const StdParams& theta_true, const NoiseSpec& noise, double f_s,
                              int periods = 1);

}  // namespace exciteid
