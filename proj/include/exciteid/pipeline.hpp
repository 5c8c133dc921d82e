#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "exciteid/base_params.hpp"
#include "exciteid/excitation.hpp"
#include "exciteid/gmm.hpp"
#include "exciteid/identify.hpp"
#include "exciteid/sim.hpp"
#include "exciteid/td_filter.hpp"

namespace exciteid {

/// Single JSON configuration for every stage. Paths are resolved relative to
/// the directory of the config file. Unknown keys are rejected.
struct PipelineConfig {
  std::string urdf_path;
  std::string ee_frame;          // link or attached frame carrying the EE; default: last moving link
  std::string ee_cloud_path;     // optional CSV x,y,z in the EE frame
  nlohmann::json ellipsoids = nlohmann::json::array();
  std::string output_dir = "exciteid_out";
  std::uint64_t seed = 1;
  int threads = 0;

  FourierConfig fourier;
  std::optional<Eigen::VectorXd> q_offset;  // default: mid-range

  BaseProjectionOptions base;

  int k_max = 8;
  GmmOptions gmm;

  OptimizerOptions optimizer;
  double margin = 0.05;

  double sim_f_s = 0.0;  // 0: use fourier.f_s
  int sim_periods = 1;
  NoiseSpec noise;
  Eigen::VectorXd coulomb_true;  // per joint, N m
  Eigen::VectorXd viscous_true;  // per joint, N m s / rad

  FilterOptions filter;

  BoundOptions bounds;
};

/// Parses and validates; missing fields take their defaults. The EXCITEID_OUTPUT_DIR
/// environment variable overrides output_dir.
PipelineConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
PipelineConfig load_config(const std::string& path);
nlohmann::json config_to_json(const PipelineConfig& cfg);

/// Names of the artifact files inside output_dir.
namespace artifacts {
inline constexpr const char* kChain = "chain.json";
inline constexpr const char* kBaseParams = "base_params.json";
inline constexpr const char* kMfpee = "mfpee.json";
inline constexpr const char* kTrajectory = "trajectory.json";
inline constexpr const char* kOptimizeReport = "optimize_report.json";
inline constexpr const char* kTrajectoryCsv = "trajectory.csv";
inline constexpr const char* kDataset = "dataset.csv";
inline constexpr const char* kValidation = "validation.csv";
inline constexpr const char* kValidationTrajectory = "validation_trajectory.json";
inline constexpr const char* kSimulateReport = "simulate_report.json";
inline constexpr const char* kDatasetFiltered = "dataset_filtered.csv";
inline constexpr const char* kValidationFiltered = "validation_filtered.csv";
inline constexpr const char* kFilterReport = "filter_report.json";
inline constexpr const char* kThetaB = "theta_b.json";
inline constexpr const char* kIdentifyReport = "identify_report.json";
inline constexpr const char* kValidationReport = "validation_report.json";
inline constexpr const char* kReport = "report.json";
}  // namespace artifacts

const std::vector<std::string>& stage_names();

struct StageResult {
  int exit_code = 0;  // 0 ok, 4 infeasible optimization
  std::vector<std::string> written;
  nlohmann::json summary;
};

/// Runs one stage. Throws ConfigError / MissingArtifactError / Error.
StageResult run_stage(const std::string& name, const PipelineConfig& cfg);

/// Chain, ellipsoids and probe points assembled from the config and the mfpee artifact.
std::optional<CollisionModel> collision_model_for(const PipelineConfig& cfg, const KinematicChain& chain,
                                                  const MFPEE& mfpee);

/// Standard parameters used as ground truth by the simulate stage.
StdParams true_params(const PipelineConfig& cfg, const KinematicChain& chain);

}  // namespace exciteid
