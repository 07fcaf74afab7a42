// smloc command-line front end: simulate, register, filter, experiment.

#include "smloc/smloc.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace smloc;

namespace {

ScenarioConfig load_config(const std::optional<std::string>& scenario, const std::string& config_path) {
  ScenarioConfig cfg = make_scenario(scenario ? parse_trajectory_kind(*scenario) : TrajectoryKind::straight);
  if (!config_path.empty()) {
    auto in = open_input(config_path);
    const auto entries = parse_config_entries(in, config_path);
    bool has_kind = false;
    for (const auto& e : entries) has_kind = has_kind || e.key == "scenario.kind";
    // An explicit --scenario wins over scenario.kind in the file.
    cfg = apply_config(entries, cfg, config_path, scenario.has_value() || !has_kind);
  }
  return cfg;
}

Vector6 to_vector6(const std::vector<double>& v, const char* what) {
  if (v.size() != 6) throw std::invalid_argument(std::string(what) + ": expected 6 numbers");
  return Eigen::Map<const Vector6>(v.data());
}

PointCloud load_with_normals(const std::string& path) {
  PointCloud c = read_cloud(path);
  if (!c.has_normals()) c = estimate_normals(std::move(c));
  return c;
}

std::string csv(const Eigen::Ref<const Eigen::VectorXd>& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += ',' + format_double(v(i));
  return s;
}

int cmd_simulate(const std::optional<std::string>& scenario, const std::string& config, std::optional<std::uint64_t> seed,
                 const std::string& out) {
  ScenarioConfig cfg = load_config(scenario, config);
  if (seed) cfg.sim.seed = *seed;
  const SensorLog log = run_scenario(cfg.sim);
  write_sensor_log(out, log);
  write_config((fs::path(out) / "config.txt").string(), cfg);
  std::cout << "wrote " << log.odometry.size() << " odometry samples, " << log.scans.size() << " scans ("
            << log.empty_scans << " empty skipped), " << log.truth.size() << " truth poses, map of "
            << log.map.size() << " points to " << out << "\n";
  return 0;
}

struct RegisterArgs {
  std::string source, target;
  std::vector<double> init = {0, 0, 0, 0, 0, 0};
  IcpParams icp;
  double max_angle_deg = 45.0;
  RegistrationNoiseModel model;
};

int cmd_register(RegisterArgs a) {
  a.icp.max_normal_angle = a.max_angle_deg * kPi / 180.0;
  a.icp.n_buckets = a.model.n_buckets;
  const PointCloud source = load_with_normals(a.source);
  const PointCloud target = load_with_normals(a.target);
  const Vector6 init = to_vector6(a.init, "--init");
  const Pose pose = make_pose(init.head<3>(), init.tail<3>());
  IcpResult r = icp_register(source, target, pose, a.icp);
  const auto cov = covariance_resolution(r, a.model);
  std::cout << "quantity,c0,c1,c2,c3,c4,c5\n";
  std::cout << "x" << csv(r.x) << "\n";
  for (int i = 0; i < 6; ++i) std::cout << "cov" << i << csv(cov.covariance.row(i).transpose()) << "\n";
  std::cout << "rank," << r.rank() << "\n";
  std::cout << "condition," << format_double(r.condition()) << "\n";
  std::cout << "n_pairs," << r.n_pairs() << "\n";
  std::cout << "observable," << (cov.observable ? 1 : 0) << "\n";
  std::cout << "converged," << (r.converged ? 1 : 0) << "\n";
  for (std::size_t i = 0; i < cov.infinite_directions.size(); ++i) {
    std::cout << "null" << i << csv(cov.infinite_directions[i]) << "\n";
  }
  return 0;
}

int cmd_filter(const std::string& log_dir, const std::string& config, const std::string& kinds, const std::vector<double>& p0,
               const std::vector<double>& q, bool skip_gate, const std::string& out) {
  ScenarioConfig cfg = load_config(std::nullopt, config);
  if (!p0.empty()) cfg.filter.P0_diag = to_vector6(p0, "--p0");
  if (!q.empty()) cfg.filter.Q_diag = to_vector6(q, "--q");
  if (skip_gate) cfg.filter.gate = OutlierGate::off;
  const SensorLog log = read_sensor_log(log_dir);
  const RunResult res = run_experiment(cfg, log, parse_filter_set(kinds));
  auto os = open_output(out);
  os << "t,filter,r00,r01,r02,r10,r11,r12,r20,r21,r22,px,py,pz,flag\n";
  for (const auto& tr : res.tracks) {
    for (std::size_t k = 0; k < res.t.size(); ++k) {
      os << format_double(res.t[k]) << ',' << to_string(tr.kind);
      const Pose& p = tr.pose[k];
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) os << ',' << format_double(p.R(r, c));
      }
      os << csv(p.p) << ',' << static_cast<int>(tr.flag[k]) << '\n';
    }
  }
  if (!os) throw std::runtime_error("write failed: " + out);
  for (const auto& tr : res.tracks) std::cout << summary_row(summarize(tr)) << "\n";
  return 0;
}

int cmd_experiment(const std::optional<std::string>& scenario, int seeds, std::uint64_t first_seed,
                   const std::string& config, std::optional<std::string> out, const std::string& kinds,
                   std::optional<double> heading_deg, unsigned jobs) {
  ScenarioConfig base = load_config(scenario, config);
  if (heading_deg) base.filter.init_heading_error = *heading_deg * kPi / 180.0;
  if (out) base.output_dir = *out;
  const auto filters = parse_filter_set(kinds);
  if (seeds < 1) throw std::invalid_argument("--seeds must be >= 1");

  std::vector<std::vector<FilterSummary>> summaries(static_cast<std::size_t>(seeds));
  std::vector<std::string> errors(static_cast<std::size_t>(seeds));
  std::mutex io;
  parallel_for(static_cast<std::size_t>(seeds), jobs, [&](std::size_t i) {
    ScenarioConfig cfg = base;
    cfg.sim.seed = first_seed + i;
    const std::string dir = (fs::path(base.output_dir) / ("seed_" + std::to_string(cfg.sim.seed))).string();
    try {
      const RunResult res = run_experiment(cfg, filters);
      emit_report(res, cfg, dir);
      for (const auto& tr : res.tracks) summaries[i].push_back(summarize(tr));
      std::lock_guard lock(io);
      std::cout << "seed " << cfg.sim.seed;
      for (const auto& s : summaries[i]) {
        std::cout << "  " << to_string(s.kind) << " rms_planar=" << s.rms_planar << " rms_yaw=" << s.rms_yaw;
      }
      std::cout << "\n";
    } catch (const std::exception& e) {
      errors[i] = e.what();
      std::lock_guard lock(io);
      std::cerr << "seed " << cfg.sim.seed << ": " << e.what() << "\n";
    }
  });

  fs::create_directories(base.output_dir);
  auto agg = open_output((fs::path(base.output_dir) / "aggregate.csv").string());
  agg << "seed," << kSummaryHeader << "\n";
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    for (const auto& s : summaries[i]) agg << first_seed + i << ',' << summary_row(s) << "\n";
  }
  for (const auto k : filters) {
    std::vector<double> planar, yaw;
    for (const auto& row : summaries) {
      for (const auto& s : row) {
        if (s.kind == k) {
          planar.push_back(s.rms_planar);
          yaw.push_back(s.rms_yaw);
        }
      }
    }
    if (!planar.empty()) {
      std::cout << to_string(k) << " median rms_planar=" << median(planar) << " m, median rms_yaw=" << median(yaw)
                << " rad over " << planar.size() << " seeds\n";
    }
  }
  write_config((fs::path(base.output_dir) / "config.txt").string(), base);
  std::size_t failed = 0;
  for (const auto& e : errors) failed += !e.empty();
  return failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scan-matching localization toolkit"};
  app.require_subcommand(1);

  std::optional<std::string> scenario;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  auto* sim = app.add_subcommand("simulate", "Generate a sensor log directory");
  sim->add_option("--scenario", scenario, "straight, circle or stationary")->check(CLI::IsMember({"straight", "circle", "stationary"}));
  sim->add_option("--config", config, "Scenario config file")->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "Scenario seed");
  sim->add_option("--out", out, "Output directory")->required();

  RegisterArgs reg;
  auto* regc = app.add_subcommand("register", "Point-to-plane ICP between two clouds");
  regc->add_option("--source", reg.source, "Source cloud (.ply or .xyz)")->required()->check(CLI::ExistingFile);
  regc->add_option("--target", reg.target, "Target cloud (.ply or .xyz)")->required()->check(CLI::ExistingFile);
  regc->add_option("--init", reg.init, "Initial pose: rx ry rz tx ty tz")->expected(6);
  regc->add_option("--iterations", reg.icp.iterations, "ICP iterations")->capture_default_str();
  regc->add_option("--n-select", reg.icp.n_select, "Sampled source points")->capture_default_str();
  regc->add_option("--max-distance", reg.icp.max_pair_distance, "Pair distance gate [m]")->capture_default_str();
  regc->add_option("--max-angle", reg.max_angle_deg, "Normal angle gate [deg]")->capture_default_str();
  regc->add_option("--delta", reg.model.delta, "Resolution error scale [m]")->capture_default_str();
  regc->add_option("--buckets", reg.model.n_buckets, "Normal-space buckets")->capture_default_str()->check(CLI::Range(1, 3));
  regc->add_option("--seed", reg.icp.seed, "Sampling seed")->capture_default_str();

  std::string log_dir, kinds = "both", filter_out;
  std::vector<double> p0, q;
  bool skip_gate = false;
  auto* fil = app.add_subcommand("filter", "Run IEKF and/or MEKF on a sensor log");
  fil->add_option("--log", log_dir, "Sensor log directory")->required()->check(CLI::ExistingDirectory);
  fil->add_option("--config", config, "Scenario config file (ICP and filter settings)")->check(CLI::ExistingFile);
  fil->add_option("--filter", kinds, "iekf, mekf or both")->check(CLI::IsMember({"iekf", "mekf", "both"}))->capture_default_str();
  fil->add_option("--p0", p0, "P0 diagonal (6 numbers)")->expected(6);
  fil->add_option("--q", q, "Q diagonal (6 numbers)")->expected(6);
  fil->add_flag("--skip-outlier-gate", skip_gate, "Disable the chi-square innovation gate");
  fil->add_option("--out", filter_out, "Estimate CSV path")->required();

  int seeds = 1;
  std::uint64_t first_seed = 1;
  std::optional<std::string> exp_out;
  std::optional<double> heading;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string exp_filters = "both";
  auto* exp = app.add_subcommand("experiment", "Monte-Carlo runs with reports");
  exp->add_option("--scenario", scenario, "straight, circle or stationary")->check(CLI::IsMember({"straight", "circle", "stationary"}));
  exp->add_option("--seeds", seeds, "Number of seeds")->capture_default_str();
  exp->add_option("--first-seed", first_seed, "First seed")->capture_default_str();
  exp->add_option("--config", config, "Scenario config file")->check(CLI::ExistingFile);
  exp->add_option("--out", exp_out, "Output directory");
  exp->add_option("--filters", exp_filters, "iekf, mekf or both")->check(CLI::IsMember({"iekf", "mekf", "both"}))->capture_default_str();
  exp->add_option("--init-heading-error", heading, "Initial heading-estimate error [deg]");
  exp->add_option("--jobs", jobs, "Parallel seeds")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate(scenario, config, seed, out);
    if (*regc) return cmd_register(reg);
    if (*fil) return cmd_filter(log_dir, config, kinds, p0, q, skip_gate, filter_out);
    if (*exp) return cmd_experiment(scenario, seeds, first_seed, config, exp_out, exp_filters, heading, jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
