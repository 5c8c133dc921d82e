#include "exciteid/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "exciteid/collision.hpp"
#include "exciteid/convex_hull.hpp"
#include "exciteid/error.hpp"
#include "exciteid/json_io.hpp"
#include "exciteid/log.hpp"
#include "exciteid/seed.hpp"

namespace exciteid {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Strict reader for one config object: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  template <class T>
  T get(const char* key, T def) {
    seen_.insert(key);
    if (!j_.contains(key)) return def;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(label(key) + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, label(key));
  }

  std::string label(const char* key = nullptr) const {
    std::string s = where_;
    if (key) s += (s.empty() ? "" : ".") + std::string(key);
    return s.empty() ? "config" : s;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + label(it.key().c_str()) + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " '" + path + "' does not exist");
}

Eigen::VectorXd scalar_or_vector(const json& j, const std::string& where) {
  if (j.is_number()) return Eigen::VectorXd::Constant(1, j.get<double>());
  if (j.is_array()) return vector_from_json(j);
  throw ConfigError(where + ": expected a number or an array of numbers");
}

Eigen::VectorXd per_joint(const Eigen::VectorXd& v, int dof, const char* what) {
  if (v.size() == 1) return Eigen::VectorXd::Constant(dof, v(0));
  if (v.size() != dof) throw ConfigError(std::string(what) + ": expected one value or one per joint");
  return v;
}

}  // namespace

PipelineConfig config_from_json(const json& j, const std::string& base_dir) {
  PipelineConfig cfg;
  Section root(j, "");
  if (!root.has("urdf")) throw ConfigError("config: 'urdf' is required");
  cfg.urdf_path = resolve(base_dir, root.get<std::string>("urdf", ""));
  require_file(cfg.urdf_path, "urdf");
  cfg.ee_frame = root.get<std::string>("ee_frame", "");
  cfg.ee_cloud_path = resolve(base_dir, root.get<std::string>("ee_cloud", ""));
  if (!cfg.ee_cloud_path.empty()) require_file(cfg.ee_cloud_path, "ee_cloud");
  if (root.has("ellipsoids")) {
    const json& e = root.raw("ellipsoids");
    if (e.is_string()) {
      const std::string p = resolve(base_dir, e.get<std::string>());
      require_file(p, "ellipsoids");
      cfg.ellipsoids = read_json_file(p);
    } else {
      cfg.ellipsoids = e;
    }
    if (!cfg.ellipsoids.is_array()) throw ConfigError("ellipsoids: expected an array");
  }
  cfg.output_dir = resolve(base_dir, root.get<std::string>("output_dir", cfg.output_dir));
  if (const char* env = std::getenv("EXCITEID_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  cfg.seed = root.get<std::uint64_t>("seed", cfg.seed);
  cfg.threads = root.get<int>("threads", cfg.threads);

  {
    Section s = root.sub("fourier");
    cfg.fourier.order = s.get<int>("L", cfg.fourier.order);
    cfg.fourier.f_f = s.get<double>("f_f", cfg.fourier.f_f);
    cfg.fourier.f_s = s.get<double>("f_s", cfg.fourier.f_s);
    cfg.fourier.boundary = boundary_from_name(s.get<std::string>("boundary", "zero-state"));
    if (s.has("q_offset")) {
      const json& q = s.raw("q_offset");
      if (q.is_string()) {
        if (q.get<std::string>() != "mid-range") throw ConfigError("fourier.q_offset: expected 'mid-range' or an array");
      } else {
        cfg.q_offset = vector_from_json(q);
      }
    }
    s.finish();
    if (cfg.fourier.order < 1 || !(cfg.fourier.f_f > 0.0) || !(cfg.fourier.f_s > 0.0)) {
      throw ConfigError("fourier: L >= 1, f_f > 0 and f_s > 0 required");
    }
  }
  {
    Section s = root.sub("base");
    cfg.base.n_samples = s.get<int>("n_samples", cfg.base.n_samples);
    cfg.base.tau_rank = s.get<double>("tau_rank", cfg.base.tau_rank);
    cfg.base.acc_range = s.get<double>("acc_range", cfg.base.acc_range);
    s.finish();
  }
  {
    Section s = root.sub("mfpee");
    cfg.k_max = s.get<int>("k_max", cfg.k_max);
    cfg.gmm.restarts = s.get<int>("restarts", cfg.gmm.restarts);
    cfg.gmm.max_iter = s.get<int>("max_iter", cfg.gmm.max_iter);
    cfg.gmm.reg = s.get<double>("reg", cfg.gmm.reg);
    s.finish();
    if (cfg.k_max < 1) throw ConfigError("mfpee.k_max must be at least 1");
  }
  {
    Section s = root.sub("optimizer");
    auto& o = cfg.optimizer;
    o.n_starts = s.get<int>("n_starts", o.n_starts);
    o.step1_max_iter = s.get<int>("step1_max_iter", o.step1_max_iter);
    o.step2_max_iter = s.get<int>("step2_max_iter", o.step2_max_iter);
    o.max_draws = s.get<int>("max_draws", o.max_draws);
    o.tolerance = s.get<double>("tolerance", o.tolerance);
    o.collision_oversample = s.get<int>("collision_oversample", o.collision_oversample);
    o.collision_buffer = s.get<double>("collision_buffer", o.collision_buffer);
    cfg.margin = s.get<double>("margin", cfg.margin);
    s.finish();
    if (o.n_starts < 1) throw ConfigError("optimizer.n_starts must be at least 1");
  }
  {
    Section s = root.sub("simulate");
    cfg.sim_f_s = s.get<double>("f_s", 0.0);
    cfg.sim_periods = s.get<int>("periods", cfg.sim_periods);
    cfg.noise.sigma_tau = s.get<double>("sigma_tau", 0.0);
    cfg.noise.sigma_dq = s.get<double>("sigma_dq", 0.0);
    cfg.coulomb_true = s.has("coulomb") ? scalar_or_vector(s.raw("coulomb"), "simulate.coulomb")
                                        : Eigen::VectorXd::Constant(1, 0.5);
    cfg.viscous_true = s.has("viscous") ? scalar_or_vector(s.raw("viscous"), "simulate.viscous")
                                        : Eigen::VectorXd::Constant(1, 0.3);
    if (s.has("pulse")) {
      Section p = s.sub("pulse");
      TorquePulse pulse;
      pulse.joint = p.get<int>("joint", 1) - 1;
      pulse.start = p.get<double>("start", 0.0);
      pulse.duration = p.get<double>("duration", 0.0);
      pulse.amplitude = p.get<double>("amplitude", 0.0);
      p.finish();
      cfg.noise.pulse = pulse;
    }
    s.finish();
  }
  {
    Section s = root.sub("filter");
    TDParams def;
    def.r = s.get<double>("r", def.r);
    def.h0_multiple = s.get<double>("h0_multiple", def.h0_multiple);
    cfg.filter.warmup_s = s.get<double>("warmup_s", cfg.filter.warmup_s);
    cfg.filter.joints = {def};
    if (s.has("joints")) {
      const json& arr = s.raw("joints");
      if (!arr.is_array()) throw ConfigError("filter.joints: expected an array");
      cfg.filter.joints.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Section js(arr[i], "filter.joints[" + std::to_string(i) + "]");
        TDParams p = def;
        p.r = js.get<double>("r", p.r);
        p.h0_multiple = js.get<double>("h0_multiple", p.h0_multiple);
        js.finish();
        cfg.filter.joints.push_back(p);
      }
    }
    s.finish();
  }
  {
    Section s = root.sub("identify");
    cfg.bounds.mu_margin = s.get<double>("mu_margin", cfg.bounds.mu_margin);
    cfg.bounds.floor = s.get<double>("floor", cfg.bounds.floor);
    cfg.bounds.coulomb_cap = s.get<double>("coulomb_cap", cfg.bounds.coulomb_cap);
    cfg.bounds.viscous_cap = s.get<double>("viscous_cap", cfg.bounds.viscous_cap);
    s.finish();
  }
  root.finish();
  if (!cfg.ellipsoids.empty() && cfg.ee_cloud_path.empty()) {
    throw ConfigError("ellipsoids given without an ee_cloud");
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, fs::path(path).parent_path().string());
}

json config_to_json(const PipelineConfig& cfg) {
  json filt = json::array();
  for (const auto& p : cfg.filter.joints) filt.push_back({{"r", p.r}, {"h0_multiple", p.h0_multiple}});
  json j = {
      {"urdf", cfg.urdf_path},
      {"ee_frame", cfg.ee_frame},
      {"ee_cloud", cfg.ee_cloud_path},
      {"ellipsoids", cfg.ellipsoids},
      {"output_dir", cfg.output_dir},
      {"seed", cfg.seed},
      {"threads", cfg.threads},
      {"fourier",
       {{"L", cfg.fourier.order},
        {"f_f", cfg.fourier.f_f},
        {"f_s", cfg.fourier.f_s},
        {"boundary", boundary_name(cfg.fourier.boundary)},
        {"q_offset", cfg.q_offset ? vector_to_json(*cfg.q_offset) : json("mid-range")}}},
      {"base", {{"n_samples", cfg.base.n_samples}, {"tau_rank", cfg.base.tau_rank}, {"acc_range", cfg.base.acc_range}}},
      {"mfpee", {{"k_max", cfg.k_max}, {"restarts", cfg.gmm.restarts}, {"max_iter", cfg.gmm.max_iter}, {"reg", cfg.gmm.reg}}},
      {"optimizer",
       {{"n_starts", cfg.optimizer.n_starts},
        {"step1_max_iter", cfg.optimizer.step1_max_iter},
        {"step2_max_iter", cfg.optimizer.step2_max_iter},
        {"max_draws", cfg.optimizer.max_draws},
        {"tolerance", cfg.optimizer.tolerance},
        {"collision_oversample", cfg.optimizer.collision_oversample},
        {"collision_buffer", cfg.optimizer.collision_buffer},
        {"margin", cfg.margin}}},
      {"simulate",
       {{"f_s", cfg.sim_f_s},
        {"periods", cfg.sim_periods},
        {"sigma_tau", cfg.noise.sigma_tau},
        {"sigma_dq", cfg.noise.sigma_dq},
        {"coulomb", vector_to_json(cfg.coulomb_true)},
        {"viscous", vector_to_json(cfg.viscous_true)}}},
      {"filter", {{"warmup_s", cfg.filter.warmup_s}, {"joints", filt}}},
      {"identify",
       {{"mu_margin", cfg.bounds.mu_margin},
        {"floor", cfg.bounds.floor},
        {"coulomb_cap", cfg.bounds.coulomb_cap},
        {"viscous_cap", cfg.bounds.viscous_cap}}}};
  if (cfg.noise.pulse) {
    j["simulate"]["pulse"] = {{"joint", cfg.noise.pulse->joint + 1},
                              {"start", cfg.noise.pulse->start},
                              {"duration", cfg.noise.pulse->duration},
                              {"amplitude", cfg.noise.pulse->amplitude}};
  }
  return j;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"inspect",  "base-params", "mfpee",    "optimize", "simulate",
                                              "filter",   "identify",    "validate", "report"};
  return names;
}

std::optional<CollisionModel> collision_model_for(const PipelineConfig& cfg, const KinematicChain& chain,
                                                  const MFPEE& mfpee) {
  if (cfg.ellipsoids.empty() || mfpee.size() == 0) return std::nullopt;
  CollisionModel model;
  const std::string frame = cfg.ee_frame.empty() ? chain.links.back().name : cfg.ee_frame;
  const AttachedFrame ee = resolve_frame(chain, frame);
  if (ee.parent < 0) throw ConfigError("ee_frame '" + frame + "' is not carried by a moving link");
  model.ee_link = ee.parent;
  model.ee_offset = ee.offset;
  model.points = mfpee.mu;
  model.ellipsoids = ellipsoids_from_json(chain, cfg.ellipsoids);
  model.margin = cfg.margin;
  validate_collision_model(chain, model);
  return model;
}

StdParams true_params(const PipelineConfig& cfg, const KinematicChain& chain) {
  return nominal_params(chain, per_joint(cfg.coulomb_true, chain.dof(), "simulate.coulomb"),
                        per_joint(cfg.viscous_true, chain.dof(), "simulate.viscous"));
}

namespace {

class StageRunner {
 public:
  explicit StageRunner(const PipelineConfig& cfg) : cfg_(cfg) {}

  StageResult run(const std::string& name) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(cfg_.output_dir);
    chain_ = load_urdf_file(cfg_.urdf_path);
    if (name == "inspect") inspect();
    else if (name == "base-params") base_params();
    else if (name == "mfpee") mfpee();
    else if (name == "optimize") optimize_stage();
    else if (name == "simulate") simulate();
    else if (name == "filter") filter();
    else if (name == "identify") identify();
    else if (name == "validate") validate_stage();
    else if (name == "report") report();
    else throw ConfigError("unknown stage '" + name + "'");
    res_.summary["stage"] = name;
    res_.summary["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res_;
  }

 private:
  std::string out(const char* file) const { return (fs::path(cfg_.output_dir) / file).string(); }

  void write(const char* file, json j, bool timed = true) {
    if (timed) j["elapsed_s"] = elapsed();
    write_json_file(out(file), j);
    res_.written.push_back(out(file));
  }

  double elapsed() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

  BaseProjection load_projection() const {
    return projection_from_json(read_json_file(out(artifacts::kBaseParams), "base-params"));
  }

  std::optional<CollisionModel> load_collisions() const {
    if (cfg_.ellipsoids.empty() || cfg_.ee_cloud_path.empty()) return std::nullopt;
    const json m = read_json_file(out(artifacts::kMfpee), "mfpee");
    return collision_model_for(cfg_, chain_, mfpee_from_json(m));
  }

  ObjectiveContext context(const BaseProjection& proj) const {
    return make_context(chain_, proj, cfg_.fourier, cfg_.q_offset);
  }

  void inspect() {
    json j = chain_to_json(chain_);
    j["dof"] = chain_.dof();
    write(artifacts::kChain, j, false);
    res_.summary = {{"dof", chain_.dof()}, {"name", chain_.name}};
  }

  void base_params() {
    const auto& b = cfg_.base;
    const std::uint64_t seed = derive_seed(cfg_.seed, "base-params");
    const int n = chain_.dof();
    if (static_cast<long>(b.n_samples) * n < 2L * std_param_count(n)) {
      throw ConfigError("base.n_samples * dof must be at least twice the parameter count");
    }
    const Eigen::MatrixXd stack = random_state_stack(chain_, b.n_samples, seed, b.acc_range);
    const auto forced = b.force_friction ? friction_columns(n) : std::vector<int>{};
    const BaseProjection proj = base_projection_from_stack(stack, b.tau_rank, forced);
    const int r_lo = base_projection_from_stack(stack, 1e-8, forced).rank();
    const int r_hi = base_projection_from_stack(stack, 1e-6, forced).rank();
    json j = projection_to_json(proj, n);
    j["tau_rank"] = b.tau_rank;
    j["n_samples"] = b.n_samples;
    j["seed"] = seed;
    j["rank_tau_1e-8"] = r_lo;
    j["rank_tau_1e-6"] = r_hi;
    j["ill_conditioned"] = r_lo != r_hi;
    if (r_lo != r_hi) logger()->warn("base-params: rank depends on the tolerance ({} vs {})", r_lo, r_hi);
    write(artifacts::kBaseParams, j);
    res_.summary = {{"rank", proj.rank()}, {"n_std", proj.n_std}};
  }

  void mfpee() {
    if (cfg_.ee_cloud_path.empty()) throw ConfigError("the mfpee stage needs 'ee_cloud' in the config");
    const PointCloud cloud = read_point_cloud_csv(cfg_.ee_cloud_path);
    const PointCloud hull = hull_vertices(cloud);
    const MfpeeSelection sel = fit_mfpee(hull, cfg_.k_max, derive_seed(cfg_.seed, "mfpee"), cfg_.gmm);
    json j = mfpee_to_json(sel.model);
    j["k_star"] = sel.k_star;
    json bic = json::array();
    for (double v : sel.bic) bic.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    j["bic"] = bic;
    j["n_points"] = cloud.rows();
    j["n_hull_vertices"] = hull.rows();
    write(artifacts::kMfpee, j);
    res_.summary = {{"k_star", sel.k_star}, {"n_hull_vertices", hull.rows()}};
  }

  void optimize_stage() {
    const BaseProjection proj = load_projection();
    const auto col = load_collisions();
    ObjectiveContext ctx = context(proj);
    OptimizerOptions opt = cfg_.optimizer;
    opt.seed = derive_seed(cfg_.seed, "optimize");
    opt.threads = cfg_.threads;
    const OptResult r = optimize(ctx, col ? &*col : nullptr, opt);
    json rep = {{"feasible", r.feasible},
                {"all_singular", r.all_singular},
                {"r_c", r.r_c},
                {"cond", r.cond},
                {"cond_raw", r.cond_raw},
                {"cond_cost", r.cond_cost},
                {"initial_r_c", r.initial_r_c},
                {"initial_cond", r.initial_cond},
                {"constraint_max_violation", r.constraint_max_violation},
                {"iterations", r.iterations},
                {"start_index", r.start_index},
                {"scale", vector_to_json(r.scale)},
                {"collisions", col.has_value()}};
    json starts = json::array();
    for (const auto& s : r.starts) {
      starts.push_back({{"index", s.index},
                        {"sampled_r_c", s.sampled_r_c},
                        {"sampled_feasible", s.sampled_feasible},
                        {"step1_r_c", s.step1.r_c},
                        {"step1_violation", s.step1.max_violation},
                        {"step1_iterations", s.step1.iterations},
                        {"step2_r_c", s.step2.r_c},
                        {"step2_violation", s.step2.max_violation},
                        {"step2_iterations", s.step2.iterations},
                        {"final_r_c", s.final_r_c},
                        {"final_violation", s.final_violation},
                        {"kept_sample", s.kept_sample}});
    }
    rep["starts"] = starts;
    if (r.traj) {
      ctx.scale = r.scale;
      const TrajectoryCheck chk = check_trajectory(ctx, *r.traj, col ? &*col : nullptr, 10);
      rep["dense_check"] = {{"grid_points", chk.grid_points},
                            {"coefficient_violation", chk.coefficient_violation},
                            {"position_violation", chk.position_violation},
                            {"velocity_violation", chk.velocity_violation},
                            {"collision_violation", chk.collision_violation},
                            {"min_collision_residual", std::isfinite(chk.min_collision_residual)
                                                           ? json(chk.min_collision_residual)
                                                           : json(nullptr)},
                            {"max_violation", chk.max_violation()}};
      write(artifacts::kTrajectory, trajectory_to_json(*r.traj, cfg_.fourier.boundary), false);
      IdentDataset ds;
      ds.dof = chain_.dof();
      ds.samples = sample_grid(*r.traj, cfg_.fourier.f_s);
      write_dataset_csv(out(artifacts::kTrajectoryCsv), ds);
      res_.written.push_back(out(artifacts::kTrajectoryCsv));
    }
    write(artifacts::kOptimizeReport, rep);
    res_.summary = {{"r_c", r.r_c}, {"cond", r.cond}, {"cond_raw", r.cond_raw},
                    {"violation", r.constraint_max_violation}, {"feasible", r.feasible}};
    if (!r.feasible) res_.exit_code = 4;
  }

  void simulate() {
    const FourierTrajectory traj = trajectory_from_json(read_json_file(out(artifacts::kTrajectory), "optimize"));
    const BaseProjection proj = load_projection();
    const StdParams theta = true_params(cfg_, chain_);
    const double f_s = cfg_.sim_f_s > 0.0 ? cfg_.sim_f_s : cfg_.fourier.f_s;
    NoiseSpec noise = cfg_.noise;
    noise.seed = derive_seed(cfg_.seed, "simulate");
    const IdentDataset ds = simulate_dataset(chain_, traj, theta, noise, f_s, cfg_.sim_periods);
    write_dataset_csv(out(artifacts::kDataset), ds);
    res_.written.push_back(out(artifacts::kDataset));

    // Held-out trajectory: a feasible random draw from the same constraint set.
    const auto col = load_collisions();
    const ObjectiveContext ctx = context(proj);
    std::mt19937_64 rng(derive_seed(cfg_.seed, "validation"));
    const SamplerResult vs =
        sample_feasible(ctx, col ? &*col : nullptr, rng, cfg_.optimizer.max_draws, cfg_.optimizer.collision_oversample);
    const FourierTrajectory vtraj = ctx.trajectory(vs.coeffs);
    NoiseSpec vnoise = cfg_.noise;
    vnoise.pulse.reset();
    vnoise.seed = derive_seed(cfg_.seed, "simulate-validation");
    const IdentDataset vds = simulate_dataset(chain_, vtraj, theta, vnoise, f_s, cfg_.sim_periods);
    write_dataset_csv(out(artifacts::kValidation), vds);
    res_.written.push_back(out(artifacts::kValidation));
    write(artifacts::kValidationTrajectory, trajectory_to_json(vtraj, cfg_.fourier.boundary), false);

    const auto labels = std_param_labels(chain_.dof());
    json th = json::object();
    for (std::size_t k = 0; k < labels.size(); ++k) th[labels[k]] = theta(static_cast<Eigen::Index>(k));
    const Eigen::VectorXd theta_b = project(theta, proj);
    const auto blabels = base_param_labels(proj, chain_.dof());
    json thb = json::object();
    for (std::size_t k = 0; k < blabels.size(); ++k) thb[blabels[k]] = theta_b(static_cast<Eigen::Index>(k));
    json rep = {{"f_s", f_s},
                {"samples", ds.samples.size()},
                {"validation_samples", vds.samples.size()},
                {"validation_feasible", vs.feasible},
                {"sigma_tau", noise.sigma_tau},
                {"sigma_dq", noise.sigma_dq},
                {"theta_true", th},
                {"theta_b_true", thb},
                {"theta_b_true_vector", vector_to_json(theta_b)}};
    write(artifacts::kSimulateReport, rep);
    res_.summary = {{"samples", ds.samples.size()}, {"f_s", f_s}};
  }

  void filter() {
    const std::string in = out(artifacts::kDataset);
    if (!fs::exists(in)) throw MissingArtifactError("missing dataset '" + in + "' (run the 'simulate' stage first)");
    const IdentDataset raw = read_dataset_csv(in);
    const IdentDataset filt = filter_dataset(raw, cfg_.filter);
    write_dataset_csv(out(artifacts::kDatasetFiltered), filt);
    res_.written.push_back(out(artifacts::kDatasetFiltered));
    json rms = json::array();
    for (int i = 0; i < raw.dof; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < raw.samples.size(); ++k) {
        const double d = filt.samples[k].dq(i) - raw.samples[k].dq(i);
        acc += d * d;
      }
      rms.push_back(raw.samples.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(raw.samples.size())));
    }
    json rep = {{"dq_rms_change", rms}, {"warmup_samples", filt.warmup}};
    const std::string vin = out(artifacts::kValidation);
    if (fs::exists(vin)) {
      const IdentDataset vf = filter_dataset(read_dataset_csv(vin), cfg_.filter);
      write_dataset_csv(out(artifacts::kValidationFiltered), vf);
      res_.written.push_back(out(artifacts::kValidationFiltered));
      rep["validation_warmup_samples"] = vf.warmup;
    }
    write(artifacts::kFilterReport, rep);
    res_.summary = {{"warmup_samples", filt.warmup}};
  }

  static json report_json(const IdentReport& r, const std::vector<std::string>& labels) {
    json active = json::array();
    for (int j : r.active_bounds) active.push_back(labels.at(static_cast<std::size_t>(j)));
    return {{"torque_rms_per_joint", vector_to_json(r.torque_rms_per_joint)},
            {"max_abs_error_per_joint", vector_to_json(r.max_abs_error_per_joint)},
            {"cond_scaled", r.cond_scaled},
            {"cond_raw", r.cond_raw},
            {"active_bounds", active},
            {"converged", r.converged},
            {"kkt_ok", r.kkt_ok},
            {"regularized", r.regularized},
            {"samples", r.samples}};
  }

  void identify() {
    const std::string tpath = out(artifacts::kTrajectory);
    if (!fs::exists(tpath)) {
      throw MissingArtifactError("missing trajectory '" + tpath + "' (run the 'optimize' stage first)");
    }
    const BaseProjection proj = load_projection();
    const std::string in = out(artifacts::kDatasetFiltered);
    if (!fs::exists(in)) throw MissingArtifactError("missing filtered dataset '" + in + "' (run the 'filter' stage first)");
    const IdentDataset ds = read_dataset_csv(in);
    IdentProblem prob = build_problem(chain_, proj, ds);
    std::tie(prob.lb, prob.ub) = build_bounds(chain_, proj, cfg_.bounds);
    const IdentReport rep = solve_bounded_ls(prob);
    const auto labels = base_param_labels(proj, chain_.dof());
    json th = json::object();
    for (std::size_t k = 0; k < labels.size(); ++k) th[labels[k]] = rep.theta_b_hat(static_cast<Eigen::Index>(k));
    write(artifacts::kThetaB, {{"theta_b", th}, {"vector", vector_to_json(rep.theta_b_hat)}}, false);
    json j = report_json(rep, labels);
    j["lb"] = vector_to_json(prob.lb);
    j["ub"] = vector_to_json(prob.ub);
    write(artifacts::kIdentifyReport, j);
    res_.summary = {{"torque_rms_per_joint", vector_to_json(rep.torque_rms_per_joint)}, {"kkt_ok", rep.kkt_ok}};
  }

  void validate_stage() {
    const BaseProjection proj = load_projection();
    const json th = read_json_file(out(artifacts::kThetaB), "identify");
    const std::string in = out(artifacts::kValidationFiltered);
    if (!fs::exists(in)) throw MissingArtifactError("missing validation dataset '" + in + "' (run the 'filter' stage first)");
    const IdentReport rep = validate(chain_, proj, vector_from_json(th.at("vector")), read_dataset_csv(in));
    write(artifacts::kValidationReport, report_json(rep, base_param_labels(proj, chain_.dof())));
    res_.summary = {{"torque_rms_per_joint", vector_to_json(rep.torque_rms_per_joint)}};
  }

  void report() {
    json rep = json::object();
    json sources = json::object();
    json timing = json::object();
    const std::vector<std::pair<std::string, const char*>> files{
        {"base-params", artifacts::kBaseParams},    {"mfpee", artifacts::kMfpee},
        {"optimize", artifacts::kOptimizeReport},   {"simulate", artifacts::kSimulateReport},
        {"filter", artifacts::kFilterReport},       {"identify", artifacts::kIdentifyReport},
        {"validate", artifacts::kValidationReport}};
    std::map<std::string, json> loaded;
    for (const auto& [stage, file] : files) {
      const std::string p = out(file);
      if (!fs::exists(p)) continue;
      loaded[stage] = read_json_file(p);
      sources[stage] = file;
      if (loaded[stage].contains("elapsed_s")) timing[stage] = loaded[stage]["elapsed_s"];
    }
    if (loaded.empty()) throw MissingArtifactError("no stage artifacts in '" + cfg_.output_dir + "'");
    if (loaded.count("base-params")) rep["rank"] = loaded["base-params"]["rank"];
    if (loaded.count("optimize")) {
      const json& o = loaded["optimize"];
      for (const char* k : {"r_c", "cond", "cond_raw", "constraint_max_violation", "feasible"}) rep[k] = o[k];
      if (o.contains("dense_check")) rep["dense_check_max_violation"] = o["dense_check"]["max_violation"];
    }
    if (loaded.count("identify")) rep["train_torque_rms_per_joint"] = loaded["identify"]["torque_rms_per_joint"];
    if (loaded.count("validate")) {
      rep["validation_torque_rms_per_joint"] = loaded["validate"]["torque_rms_per_joint"];
      rep["validation_max_abs_error_per_joint"] = loaded["validate"]["max_abs_error_per_joint"];
    }
    const std::string thp = out(artifacts::kThetaB);
    if (loaded.count("simulate") && fs::exists(thp)) {
      const Eigen::VectorXd truth = vector_from_json(loaded["simulate"]["theta_b_true_vector"]);
      const Eigen::VectorXd est = vector_from_json(read_json_file(thp).at("vector"));
      if (truth.size() == est.size()) {
        rep["theta_b_relative_linf_error"] = relative_linf_error(est, truth);
        sources["theta_b"] = artifacts::kThetaB;
      }
    }
    rep["stage_elapsed_s"] = timing;
    rep["sources"] = sources;
    write(artifacts::kReport, rep, false);
    res_.summary = rep;
  }

  const PipelineConfig& cfg_;
  KinematicChain chain_;
  StageResult res_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

StageResult run_stage(const std::string& name, const PipelineConfig& cfg) { return StageRunner(cfg).run(name); }

}  // namespace exciteid
