#pragma once

#include <vector>

#include <Eigen/Core>

#include "exciteid/dataset.hpp"

namespace exciteid {

/// Discrete tracking differentiator: x1 tracks the input, x2 its derivative.
struct TDState {
  double x1 = 0.0;
  double x2 = 0.0;
  double h = 0.01;   // s
  double r = 100.0;  // tracking speed
  double h0 = 0.05;  // filtering horizon, >= h
};

/// Han's discrete time-optimal synthesis function.
double fhan(double e1, double e2, double r, double h0);

/// x1 <- x1 + h x2; x2 <- x2 + h fhan(x1 - v, x2, r, h0) (both from the old state).
TDState td_step(const TDState& state, double v_meas);

struct TDParams {
  double r = 100.0;
  double h0_multiple = 5.0;  // h0 = h0_multiple * h
};

struct FilterOptions {
  std::vector<TDParams> joints;  // one per joint; a single entry applies to all
  double warmup_s = 2.0;
};

/// Replaces dq by the tracked x1 and ddq by x2 per joint. q and tau are
/// untouched; the first round(warmup_s / h) samples are marked as warm-up.
/// The filter state starts at (dq_0, 0). Throws on non-uniform sampling.
IdentDataset filter_dataset(const IdentDataset& ds, const FilterOptions& options);

}  // namespace exciteid
