#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "exciteid/error.hpp"
#include "exciteid/json_io.hpp"
#include "exciteid/pipeline.hpp"
#include "helpers.hpp"

using namespace exciteid;
using nlohmann::json;

namespace {

json small_config(const std::string& out) {
  return {{"urdf", "pendulum2.urdf"},
          {"output_dir", out},
          {"seed", 5},
          {"threads", 1},
          {"fourier", {{"L", 2}, {"f_f", 0.1}, {"f_s", 20}}},
          {"optimizer", {{"n_starts", 1}, {"step1_max_iter", 150}, {"step2_max_iter", 150}}},
          {"simulate", {{"f_s", 1000}}},
          {"filter", {{"r", 10000}, {"h0_multiple", 1}, {"warmup_s", 0.2}}}};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string write_config(const std::string& dir, const json& j) {
  const std::string path = dir + "/config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config defaults and validation") {
    const auto cfg = config_from_json({{"urdf", "pendulum2.urdf"}}, EXCITEID_TEST_DATA);
    CHECK(cfg.fourier.order == 5);
    CHECK(cfg.fourier.f_f == 0.1);
    CHECK(cfg.fourier.f_s == 20.0);
    CHECK(cfg.optimizer.n_starts == 3);
    CHECK(cfg.margin == 0.05);
    CHECK(cfg.bounds.mu_margin == 0.5);
    CHECK(cfg.filter.warmup_s == 2.0);
    CHECK(std::filesystem::path(cfg.urdf_path).is_absolute());

    json typo = {{"urdf", "pendulum2.urdf"}, {"fourier", {{"LL", 3}}}};
    CHECK_THROWS_AS(config_from_json(typo, EXCITEID_TEST_DATA), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"urdf", "nope.urdf"}}, EXCITEID_TEST_DATA), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::object(), EXCITEID_TEST_DATA), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"urdf", "pendulum2.urdf"}, {"seed", "x"}}, EXCITEID_TEST_DATA), ConfigError);

    // the round trip keeps every field
    const auto again = config_from_json(config_to_json(cfg), EXCITEID_TEST_DATA);
    CHECK(config_to_json(again) == config_to_json(cfg));
  }

  TEST_CASE("output directory override") {
    ::setenv("EXCITEID_OUTPUT_DIR", "/tmp/elsewhere", 1);
    const auto cfg = config_from_json({{"urdf", "pendulum2.urdf"}}, EXCITEID_TEST_DATA);
    ::unsetenv("EXCITEID_OUTPUT_DIR");
    CHECK(cfg.output_dir == "/tmp/elsewhere");
  }

  TEST_CASE("stages in order on the double pendulum") {
    const std::string out = testutil::tmpdir("pipeline_small");
    const auto cfg = config_from_json(small_config(out), EXCITEID_TEST_DATA);

    CHECK(run_stage("inspect", cfg).summary["dof"] == 2);
    CHECK_THROWS_AS(run_stage("identify", cfg), MissingArtifactError);
    CHECK_THROWS_AS(run_stage("mfpee", cfg), ConfigError);
    CHECK_THROWS_AS(run_stage("bogus", cfg), ConfigError);
    CHECK(run_stage("base-params", cfg).summary["rank"] == 10);
    const auto opt = run_stage("optimize", cfg);
    CHECK(opt.exit_code == 0);
    CHECK(opt.summary["feasible"] == true);
    CHECK(std::filesystem::exists(out + "/trajectory.csv"));
    CHECK_THROWS_AS(run_stage("identify", cfg), MissingArtifactError);
    run_stage("simulate", cfg);
    run_stage("filter", cfg);
    run_stage("identify", cfg);
    run_stage("validate", cfg);
    const json rep = run_stage("report", cfg).summary;
    for (const char* k : {"base-params", "optimize", "simulate", "filter", "identify", "validate", "theta_b"}) {
      CHECK(rep["sources"].contains(k));
    }
    CHECK(rep["theta_b_relative_linf_error"].get<double>() < 0.05);
    CHECK(rep["feasible"] == true);

    const json theta = read_json_file(out + "/theta_b.json");
    CHECK(theta["theta_b"].contains("J1.fv"));

    // identify is a pure function of its inputs
    const std::string before = slurp(out + "/theta_b.json");
    run_stage("identify", cfg);
    CHECK(slurp(out + "/theta_b.json") == before);
  }

#ifdef EXCITEID_CLI
  TEST_CASE("command-line exit codes") {
    const std::string dir = testutil::tmpdir("pipeline_cli");
    const std::string cli = EXCITEID_CLI;
    json bad = small_config(dir + "/out");
    bad["urdf"] = std::string(EXCITEID_TEST_DATA) + "/pendulum2.urdf";
    bad["fourier"]["order"] = 3;
    CHECK(std::system((cli + " inspect " + write_config(dir, bad) + " > /dev/null 2>&1").c_str()) / 256 == 2);
    json good = small_config(dir + "/out");
    good["urdf"] = std::string(EXCITEID_TEST_DATA) + "/pendulum2.urdf";
    const std::string path = write_config(dir, good);
    CHECK(std::system((cli + " inspect " + path + " > /dev/null 2>&1").c_str()) == 0);
    CHECK(std::system((cli + " identify " + path + " > /dev/null 2>&1").c_str()) / 256 == 3);
    CHECK(std::system((cli + " frobnicate " + path + " > /dev/null 2>&1").c_str()) != 0);
  }
#endif
}
