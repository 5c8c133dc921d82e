#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace exciteid {

struct StateSample {
  double t = 0.0;
  Eigen::VectorXd q, dq, ddq;
  std::optional<Eigen::VectorXd> tau;
};

/// Time-ordered samples. The first `warmup` samples are kept for inspection but
/// excluded when the regression system is stacked.
struct IdentDataset {
  int dof = 0;
  std::vector<StateSample> samples;
  std::size_t warmup = 0;

  bool empty() const { return samples.empty(); }
  bool has_torque() const { return !samples.empty() && samples.front().tau.has_value(); }
};

/// Throws if sizes disagree or times are not strictly increasing.
void validate_dataset(const IdentDataset& ds);

/// CSV with header t,q1..qN,dq1..dqN,ddq1..ddqN[,tau1..tauN]. NaN is written as
/// an empty field and read back as NaN. Numbers use shortest round-trip text.
void write_dataset_csv(const std::string& path, const IdentDataset& ds);
IdentDataset read_dataset_csv(const std::string& path);

std::string format_double(double v);

}  // namespace exciteid
