// exciteid: staged excitation-trajectory design and dynamic identification.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "exciteid/error.hpp"
#include "exciteid/log.hpp"
#include "exciteid/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kMissing = 3, kInfeasible = 4 };

int run(const std::string& stage, const std::string& config_path, int threads, bool all) {
  using namespace exciteid;
  try {
    PipelineConfig cfg = load_config(config_path);
    if (threads > 0) cfg.threads = threads;
    const std::vector<std::string> stages = all ? stage_names() : std::vector<std::string>{stage};
    int code = kOk;
    for (const auto& s : stages) {
      if (all && s == "mfpee" && cfg.ee_cloud_path.empty()) {
        logger()->info("run: no ee_cloud configured, skipping mfpee");
        continue;
      }
      const StageResult r = run_stage(s, cfg);
      std::cout << r.summary.dump() << "\n";
      if (r.exit_code != 0) {
        code = r.exit_code;
        if (all) break;
      }
    }
    return code;
  } catch (const ConfigError& e) {
    logger()->error("config error: {}", e.what());
    return kConfig;
  } catch (const MissingArtifactError& e) {
    logger()->error("{}", e.what());
    return kMissing;
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return kOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Excitation trajectory design and dynamic parameter identification"};
  app.require_subcommand(1);
  std::string config;
  int threads = 0;
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string chosen;
  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", config, "Pipeline config (JSON)")->required();
    sub->add_option("--threads", threads, "Worker threads for the optimizer (0: hardware)");
    sub->callback([&chosen, name] { chosen = name; });
  };
  add("inspect", "Parse the URDF and dump the kinematic chain");
  add("base-params", "Compute the base-parameter projection");
  add("mfpee", "Fit the end-effector point cloud with a Gaussian mixture");
  add("optimize", "Design the excitation trajectory");
  add("simulate", "Simulate measured joint data along the trajectory");
  add("filter", "Tracking-differentiator filtering of joint velocities");
  add("identify", "Bounded least-squares estimate of the base parameters");
  add("validate", "Torque prediction on the held-out trajectory");
  add("report", "Aggregate all artifacts into report.json");
  add("run", "Run every stage in order");

  CLI11_PARSE(app, argc, argv);
  if (verbose) exciteid::logger()->set_level(spdlog::level::debug);
  return run(chosen, config, threads, chosen == "run");
}
