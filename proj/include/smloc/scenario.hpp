#pragma once

// Scenario generation: ground truth, odometry, depth scans and the reference
// map from one seed, plus the on-disk sensor log layout
//
//   odometry.csv   t,wx,wy,wz,vx,vy,vz
//   truth.csv      t,r00,r01,r02,r10,r11,r12,r20,r21,r22,px,py,pz
//   scan_<t>.ply   body-frame points of the scan taken at time t
//   map.ply        world-frame reference map with normals

#include "smloc/cloud_io.hpp"
#include "smloc/pointcloud.hpp"
#include "smloc/sim.hpp"
#include "smloc/textio.hpp"

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

namespace smloc {

struct MapConfig {
  std::size_t headings = 8;  // scans taken while turning in place at the start pose
  double max_range = 5.0;    // m
  bool noise = true;
};

struct SimConfig {
  TrajectorySpec trajectory;
  EnvironmentSpec environment;
  NoiseConfig noise;
  OdometryConfig odometry;
  CameraConfig camera;
  MapConfig map;
  double scan_rate = 1.0;     // Hz
  double truth_rate = 120.0;  // Hz
  std::uint64_t seed = 1;
};

struct ScanEvent {
  double t = 0.0;
  std::size_t index = 0;
  PointCloud cloud;  // body frame, no normals
};

struct SensorLog {
  std::vector<OdometrySample> odometry;
  std::vector<ScanEvent> scans;
  std::vector<TrajectorySample> truth;
  PointCloud map;  // world frame, with normals
  std::size_t empty_scans = 0;
};

/// Points along the trajectory used to keep landmarks off the path.
inline std::vector<Vector3> path_points(const TrajectorySpec& spec, double spacing = 0.05) {
  std::vector<Vector3> pts;
  const double len = spec.speed * spec.duration;
  const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / spacing)));
  for (std::size_t i = 0; i <= n; ++i) {
    pts.push_back(trajectory_pose(spec, spec.duration * static_cast<double>(i) / static_cast<double>(n)).p);
  }
  return pts;
}

inline Environment make_environment(const SimConfig& cfg) {
  EnvironmentSpec spec = cfg.environment;
  spec.seed = derive_seed(cfg.seed, stream::environment);
  return make_room(spec, path_points(cfg.trajectory));
}

/// Reference map: scans from the start pose at evenly spaced headings, each
/// with normals estimated in its own frame, merged in the world frame.
inline PointCloud build_map(const SimConfig& cfg, const Environment& env) {
  CameraConfig cam = cfg.camera;
  cam.max_range = cfg.map.max_range;
  const ScanOptions opt{cfg.map.noise, cfg.map.noise};
  PointCloud map;
  for (std::size_t h = 0; h < cfg.map.headings; ++h) {
    const double yaw = 2.0 * kPi * static_cast<double>(h) / static_cast<double>(cfg.map.headings);
    const Pose pose{cfg.trajectory.start.R * rot_z(yaw), cfg.trajectory.start.p};
    PointCloud scan = simulate_depth_scan(pose, env, cam, cfg.noise, derive_seed(cfg.seed, stream::map, h), opt);
    if (scan.size() <= kDefaultNormalNeighbors) continue;
    scan = estimate_normals(std::move(scan));
    append_cloud(map, transform_cloud(scan, pose));
  }
  map.sensor_origin = cfg.trajectory.start.transform(cfg.camera.offset);
  if (map.empty()) throw std::runtime_error("build_map: no map points in range");
  return map;
}

inline SensorLog run_scenario(const SimConfig& cfg) {
  cfg.trajectory.validate();
  cfg.noise.validate();
  cfg.camera.validate();
  if (!(cfg.scan_rate > 0.0) || !(cfg.truth_rate > 0.0)) throw std::invalid_argument("scenario: rates must be > 0");
  SensorLog log;
  const Environment env = make_environment(cfg);
  log.truth = generate_trajectory(cfg.trajectory, cfg.truth_rate);
  log.odometry = simulate_odometry(generate_trajectory(cfg.trajectory, cfg.odometry.rate), cfg.noise,
                                   cfg.odometry, derive_seed(cfg.seed, stream::odometry));
  log.map = build_map(cfg, env);
  const std::size_t n_scans = sample_count(cfg.trajectory.duration, cfg.scan_rate);
  for (std::size_t k = 0; k < n_scans; ++k) {
    const double t = static_cast<double>(k) / cfg.scan_rate;
    ScanEvent ev{t, log.scans.size(), simulate_depth_scan(trajectory_pose(cfg.trajectory, t), env, cfg.camera, cfg.noise,
                                           derive_seed(cfg.seed, stream::scan, k))};
    if (ev.cloud.empty()) {
      ++log.empty_scans;
      continue;
    }
    log.scans.push_back(std::move(ev));
  }
  return log;
}

inline std::string scan_filename(double t) { return "scan_" + format_double(t) + ".ply"; }

namespace detail {

inline void expect_header(std::istream& in, const std::string& header, const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != header) {
    throw std::runtime_error(path + ": expected header '" + header + "'");
  }
}

inline std::vector<double> csv_row(std::string_view line, std::size_t n, const std::string& where) {
  const auto f = split(trim(line), ',');
  if (f.size() != n) throw std::runtime_error(where + ": expected " + std::to_string(n) + " fields");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = parse_double(f[i]);
  return v;
}

}  // namespace detail

inline constexpr const char* kOdometryHeader = "t,wx,wy,wz,vx,vy,vz";
inline constexpr const char* kTruthHeader = "t,r00,r01,r02,r10,r11,r12,r20,r21,r22,px,py,pz";

inline void write_odometry_csv(const std::string& path, const std::vector<OdometrySample>& odo) {
  auto out = open_output(path);
  out << kOdometryHeader << '\n';
  for (const auto& o : odo) {
    out << format_double(o.t);
    for (int i = 0; i < 3; ++i) out << ',' << format_double(o.omega(i));
    for (int i = 0; i < 3; ++i) out << ',' << format_double(o.mu(i));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<OdometrySample> read_odometry_csv(const std::string& path) {
  auto in = open_input(path);
  detail::expect_header(in, kOdometryHeader, path);
  std::vector<OdometrySample> out;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto v = detail::csv_row(line, 7, path + ":" + std::to_string(lineno));
    out.push_back({v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}});
    if (out.size() > 1 && !(out.back().t > out[out.size() - 2].t)) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": timestamps not increasing");
    }
  }
  return out;
}

inline void write_truth_csv(const std::string& path, const std::vector<TrajectorySample>& truth) {
  auto out = open_output(path);
  out << kTruthHeader << '\n';
  for (const auto& s : truth) {
    out << format_double(s.t);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << ',' << format_double(s.pose.R(r, c));
    }
    for (int i = 0; i < 3; ++i) out << ',' << format_double(s.pose.p(i));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<TrajectorySample> read_truth_csv(const std::string& path) {
  auto in = open_input(path);
  detail::expect_header(in, kTruthHeader, path);
  std::vector<TrajectorySample> out;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto v = detail::csv_row(line, 13, path + ":" + std::to_string(lineno));
    TrajectorySample s;
    s.t = v[0];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) s.pose.R(r, c) = v[1 + 3 * r + c];
    }
    s.pose.p = {v[10], v[11], v[12]};
    out.push_back(s);
  }
  return out;
}

inline void write_sensor_log(const std::string& dir, const SensorLog& log) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  write_odometry_csv((d / "odometry.csv").string(), log.odometry);
  write_truth_csv((d / "truth.csv").string(), log.truth);
  write_ply((d / "map.ply").string(), log.map);
  for (const auto& s : log.scans) write_ply((d / scan_filename(s.t)).string(), s.cloud);
}

/// Loads a directory written by write_sensor_log. Scans are ordered by time
/// and indexed by their rank.
inline SensorLog read_sensor_log(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  if (!fs::is_directory(d)) throw std::runtime_error("not a sensor log directory: " + dir);
  SensorLog log;
  log.odometry = read_odometry_csv((d / "odometry.csv").string());
  log.truth = read_truth_csv((d / "truth.csv").string());
  log.map = read_ply((d / "map.ply").string());
  if (!log.map.has_normals()) throw std::runtime_error(dir + "/map.ply: map needs normals");
  for (const auto& e : fs::directory_iterator(d)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("scan_", 0) != 0 || e.path().extension() != ".ply") continue;
    ScanEvent ev;
    ev.t = parse_double(std::string_view(name).substr(5, name.size() - 9));
    ev.cloud = read_ply(e.path().string());
    ev.cloud.normals.clear();
    ev.cloud.normal_valid.clear();
    log.scans.push_back(std::move(ev));
  }
  std::sort(log.scans.begin(), log.scans.end(), [](const ScanEvent& a, const ScanEvent& b) { return a.t < b.t; });
  for (std::size_t i = 0; i < log.scans.size(); ++i) log.scans[i].index = i;
  return log;
}

}  // namespace smloc
