#pragma once

// Scenario configuration and its flat text format.
//
// One "key = value" per line; '#' starts a comment. Keys are namespaced
// (icp.iterations = 25). Vector values are whitespace separated. Unknown
// keys and malformed values are errors. `scenario.kind` selects a preset that
// the remaining keys then override, wherever it appears in the file.

#include "smloc/filters.hpp"
#include "smloc/icp.hpp"
#include "smloc/scenario.hpp"
#include "smloc/textio.hpp"

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace smloc {

struct FilterConfig {
  Vector6 P0_diag = Vector6::Constant(1e-4);
  /// Input noise spectral densities [w; mu]. Empty means derive from the
  /// simulator's noise settings.
  std::optional<Vector6> Q_diag;
  double init_heading_error = 0.0;  // rad, applied as a world yaw on the initial estimate
  OutlierGate gate = OutlierGate::flag;
  bool joseph = false;
};

struct ScenarioConfig {
  TrajectoryKind scenario = TrajectoryKind::straight;
  SimConfig sim;
  IcpParams icp;
  RegistrationNoiseModel registration;
  FilterConfig filter;
  std::string output_dir = "out";

  /// Q from the filter section, else diag(f s_w^2, f s_w^2, s_w^2, s_v^2, f s_v^2, f s_v^2).
  Matrix6 process_noise() const {
    if (filter.Q_diag) return filter.Q_diag->asDiagonal();
    const double sw2 = sim.noise.sigma_omega_z * sim.noise.sigma_omega_z;
    const double sv2 = sim.noise.sigma_mu_x * sim.noise.sigma_mu_x;
    const double f = sim.noise.off_axis_factor;
    Vector6 d;
    d << f * sw2, f * sw2, sw2, sv2, f * sv2, f * sv2;
    return d.asDiagonal();
  }
};

/// Defaults for a scenario kind.
inline ScenarioConfig make_scenario(TrajectoryKind kind) {
  ScenarioConfig c;
  c.scenario = kind;
  c.sim.trajectory.kind = kind;
  switch (kind) {
    case TrajectoryKind::straight:
      c.sim.trajectory.speed = 0.25;
      c.sim.trajectory.duration = 8.0;
      break;
    case TrajectoryKind::circle:
      c.sim.trajectory.speed = 0.3;
      c.sim.trajectory.radius = 1.0;
      c.sim.trajectory.duration = 42.0;
      break;
    case TrajectoryKind::stationary:
      c.sim.trajectory.speed = 0.0;
      c.sim.trajectory.duration = 10.0;
      break;
  }
  return c;
}

namespace detail {

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
  return s;
}

inline std::vector<double> parse_list(std::string_view s, std::size_t n, const std::string& key) {
  const auto f = split_ws(trim(s));
  if (f.size() != n) throw std::invalid_argument(key + ": expected " + std::to_string(n) + " numbers");
  std::vector<double> v;
  for (auto x : f) v.push_back(parse_double(x));
  return v;
}

inline bool parse_bool(std::string_view s, const std::string& key) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument(key + ": expected true or false");
}

inline std::size_t parse_count(std::string_view s, const std::string& key) {
  const long long v = parse_int(s);
  if (v < 0) throw std::invalid_argument(key + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

inline std::string_view to_string(OutlierGate g) {
  switch (g) {
    case OutlierGate::off: return "off";
    case OutlierGate::flag: return "flag";
    case OutlierGate::reject: return "reject";
  }
  return "?";
}

inline OutlierGate parse_gate(std::string_view s) {
  s = trim(s);
  if (s == "off") return OutlierGate::off;
  if (s == "flag") return OutlierGate::flag;
  if (s == "reject") return OutlierGate::reject;
  throw std::invalid_argument("filter.outlier_gate: expected off, flag or reject");
}

struct Field {
  std::function<void(ScenarioConfig&, std::string_view)> set;
  std::function<std::string(const ScenarioConfig&)> get;
};

inline double deg(double rad) { return rad * 180.0 / kPi; }
inline double rad(double deg) { return deg * kPi / 180.0; }

template <class Get>
Field real(Get g, double scale = 1.0) {
  return {[g, scale](ScenarioConfig& c, std::string_view v) { g(c) = parse_double(v) / scale; },
          [g, scale](const ScenarioConfig& c) { return format_double(g(const_cast<ScenarioConfig&>(c)) * scale); }};
}

template <class Get>
Field count(Get g, const char* key) {
  return {[g, key](ScenarioConfig& c, std::string_view v) { g(c) = parse_count(v, key); },
          [g](const ScenarioConfig& c) { return std::to_string(g(const_cast<ScenarioConfig&>(c))); }};
}

template <class Get>
Field boolean(Get g, const char* key) {
  return {[g, key](ScenarioConfig& c, std::string_view v) { g(c) = parse_bool(v, key); },
          [g](const ScenarioConfig& c) { return std::string(g(const_cast<ScenarioConfig&>(c)) ? "true" : "false"); }};
}

template <class Get>
Field vec3(Get g, const char* key) {
  return {[g, key](ScenarioConfig& c, std::string_view v) {
            const auto x = parse_list(v, 3, key);
            g(c) = Vector3(x[0], x[1], x[2]);
          },
          [g](const ScenarioConfig& c) {
            const Vector3 x = g(const_cast<ScenarioConfig&>(c));
            return join({x(0), x(1), x(2)});
          }};
}

/// Start pose as "x y z yaw_deg".
inline Field start_pose() {
  return {[](ScenarioConfig& c, std::string_view v) {
            const auto x = parse_list(v, 4, "trajectory.start");
            c.sim.trajectory.start = {rot_z(rad(x[3])), {x[0], x[1], x[2]}};
          },
          [](const ScenarioConfig& c) {
            const auto& s = c.sim.trajectory.start;
            return join({s.p(0), s.p(1), s.p(2), deg(euler_zyx(s.R).yaw)});
          }};
}

inline const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ScenarioConfig;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", {[](C& c, std::string_view v) { c.sim.seed = static_cast<std::uint64_t>(parse_count(v, "seed")); },
                [](const C& c) { return std::to_string(c.sim.seed); }}},
      {"trajectory.speed", real([](C& c) -> double& { return c.sim.trajectory.speed; })},
      {"trajectory.radius", real([](C& c) -> double& { return c.sim.trajectory.radius; })},
      {"trajectory.duration", real([](C& c) -> double& { return c.sim.trajectory.duration; })},
      {"trajectory.start", start_pose()},
      {"rates.scan", real([](C& c) -> double& { return c.sim.scan_rate; })},
      {"rates.truth", real([](C& c) -> double& { return c.sim.truth_rate; })},
      {"env.x_min", real([](C& c) -> double& { return c.sim.environment.x_min; })},
      {"env.x_max", real([](C& c) -> double& { return c.sim.environment.x_max; })},
      {"env.y_min", real([](C& c) -> double& { return c.sim.environment.y_min; })},
      {"env.y_max", real([](C& c) -> double& { return c.sim.environment.y_max; })},
      {"env.floor_z", real([](C& c) -> double& { return c.sim.environment.floor_z; })},
      {"env.wall_height", real([](C& c) -> double& { return c.sim.environment.wall_height; })},
      {"env.floor", boolean([](C& c) -> bool& { return c.sim.environment.floor; }, "env.floor")},
      {"env.boxes", count([](C& c) -> std::size_t& { return c.sim.environment.n_boxes; }, "env.boxes")},
      {"env.box_min_half", real([](C& c) -> double& { return c.sim.environment.box_min_half; })},
      {"env.box_max_half", real([](C& c) -> double& { return c.sim.environment.box_max_half; })},
      {"env.box_min_height", real([](C& c) -> double& { return c.sim.environment.box_min_height; })},
      {"env.box_max_height", real([](C& c) -> double& { return c.sim.environment.box_max_height; })},
      {"env.clearance", real([](C& c) -> double& { return c.sim.environment.clearance; })},
      {"env.wall_inset", real([](C& c) -> double& { return c.sim.environment.wall_inset; })},
      {"noise.sigma_mu_x", real([](C& c) -> double& { return c.sim.noise.sigma_mu_x; })},
      {"noise.sigma_omega_z", real([](C& c) -> double& { return c.sim.noise.sigma_omega_z; })},
      {"noise.off_axis_factor", real([](C& c) -> double& { return c.sim.noise.off_axis_factor; })},
      {"noise.delta", real([](C& c) -> double& { return c.sim.noise.delta; })},
      {"noise.sigma_depth", real([](C& c) -> double& { return c.sim.noise.sigma_depth; })},
      {"noise.resolution_field", real([](C& c) -> double& { return c.sim.noise.resolution_field; })},
      {"odometry.kappa1", real([](C& c) -> double& { return c.sim.odometry.kappa1; })},
      {"odometry.kappa2", real([](C& c) -> double& { return c.sim.odometry.kappa2; })},
      {"odometry.rate", real([](C& c) -> double& { return c.sim.odometry.rate; })},
      {"camera.width", count([](C& c) -> std::size_t& { return c.sim.camera.width; }, "camera.width")},
      {"camera.height", count([](C& c) -> std::size_t& { return c.sim.camera.height; }, "camera.height")},
      {"camera.hfov_deg", real([](C& c) -> double& { return c.sim.camera.hfov; }, 180.0 / kPi)},
      {"camera.vfov_deg", real([](C& c) -> double& { return c.sim.camera.vfov; }, 180.0 / kPi)},
      {"camera.min_range", real([](C& c) -> double& { return c.sim.camera.min_range; })},
      {"camera.max_range", real([](C& c) -> double& { return c.sim.camera.max_range; })},
      {"camera.offset", vec3([](C& c) -> Vector3& { return c.sim.camera.offset; }, "camera.offset")},
      {"map.headings", count([](C& c) -> std::size_t& { return c.sim.map.headings; }, "map.headings")},
      {"map.max_range", real([](C& c) -> double& { return c.sim.map.max_range; })},
      {"map.noise", boolean([](C& c) -> bool& { return c.sim.map.noise; }, "map.noise")},
      {"icp.n_select", count([](C& c) -> std::size_t& { return c.icp.n_select; }, "icp.n_select")},
      {"icp.iterations", count([](C& c) -> std::size_t& { return c.icp.iterations; }, "icp.iterations")},
      {"icp.max_pair_distance", real([](C& c) -> double& { return c.icp.max_pair_distance; })},
      {"icp.max_normal_angle_deg", real([](C& c) -> double& { return c.icp.max_normal_angle; }, 180.0 / kPi)},
      {"icp.planarity_max", real([](C& c) -> double& { return c.icp.planarity_max; })},
      {"icp.max_condition", real([](C& c) -> double& { return c.icp.max_condition; })},
      {"icp.buckets", {[](C& c, std::string_view v) {
                         c.icp.n_buckets = parse_count(v, "icp.buckets");
                         c.registration.n_buckets = c.icp.n_buckets;
                       },
                       [](const C& c) { return std::to_string(c.icp.n_buckets); }}},
      {"icp.delta", real([](C& c) -> double& { return c.registration.delta; })},
      {"icp.sigma", real([](C& c) -> double& { return c.registration.sigma; })},
      {"icp.workers", count([](C& c) -> std::size_t& { return c.icp.workers; }, "icp.workers")},
      {"filter.P0", {[](C& c, std::string_view v) {
                       const auto x = parse_list(v, 6, "filter.P0");
                       c.filter.P0_diag = Eigen::Map<const Vector6>(x.data());
                     },
                     [](const C& c) {
                       const auto& d = c.filter.P0_diag;
                       return join({d(0), d(1), d(2), d(3), d(4), d(5)});
                     }}},
      {"filter.Q", {[](C& c, std::string_view v) {
                      if (trim(v) == "auto") {
                        c.filter.Q_diag.reset();
                        return;
                      }
                      const auto x = parse_list(v, 6, "filter.Q");
                      c.filter.Q_diag = Eigen::Map<const Vector6>(x.data());
                    },
                    [](const C& c) {
                      if (!c.filter.Q_diag) return std::string("auto");
                      const auto& d = *c.filter.Q_diag;
                      return join({d(0), d(1), d(2), d(3), d(4), d(5)});
                    }}},
      {"filter.init_heading_error_deg",
       real([](C& c) -> double& { return c.filter.init_heading_error; }, 180.0 / kPi)},
      {"filter.outlier_gate", {[](C& c, std::string_view v) { c.filter.gate = parse_gate(v); },
                               [](const C& c) { return std::string(to_string(c.filter.gate)); }}},
      {"filter.joseph", boolean([](C& c) -> bool& { return c.filter.joseph; }, "filter.joseph")},
      {"output.dir", {[](C& c, std::string_view v) { c.output_dir = std::string(trim(v)); },
                      [](const C& c) { return c.output_dir; }}},
  };
  return table;
}

inline const Field* find_field(std::string_view key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return &f;
  }
  return nullptr;
}

}  // namespace detail

/// Key/value pairs of a config text, in file order, with line numbers.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

inline std::vector<ConfigEntry> parse_config_entries(std::istream& in, const std::string& source) {
  std::vector<ConfigEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view t = line;
    if (const auto hash = t.find('#'); hash != std::string_view::npos) t = t.substr(0, hash);
    t = trim(t);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out.push_back({std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))), lineno});
  }
  return out;
}

/// Applies config entries over `base`. A scenario.kind entry, if present,
/// first resets to that preset unless `keep_kind` is set.
inline ScenarioConfig apply_config(const std::vector<ConfigEntry>& entries, ScenarioConfig base,
                                   const std::string& source, bool keep_kind = false) {
  for (const auto& e : entries) {
    if (e.key == "scenario.kind" && !keep_kind) {
      const auto seed = base.sim.seed;
      const auto out = base.output_dir;
      base = make_scenario(parse_trajectory_kind(e.value));
      base.sim.seed = seed;
      base.output_dir = out;
    }
  }
  for (const auto& e : entries) {
    if (e.key == "scenario.kind") continue;
    const auto* f = detail::find_field(e.key);
    if (!f) throw std::invalid_argument(source + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    try {
      f->set(base, e.value);
    } catch (const std::invalid_argument& err) {
      throw std::invalid_argument(source + ":" + std::to_string(e.line) + ": " + e.key + ": " + err.what());
    }
  }
  return base;
}

inline ScenarioConfig parse_config(const std::string& text, ScenarioConfig base = {},
                                   const std::string& source = "<config>") {
  std::istringstream in(text);
  return apply_config(parse_config_entries(in, source), std::move(base), source);
}

inline ScenarioConfig read_config(const std::string& path, ScenarioConfig base = {}) {
  auto in = open_input(path);
  return apply_config(parse_config_entries(in, path), std::move(base), path);
}

/// Fully populated text form; parsing it reproduces the configuration.
inline std::string format_config(const ScenarioConfig& c) {
  std::string s = "scenario.kind = " + std::string(to_string(c.scenario)) + "\n";
  for (const auto& [k, f] : detail::fields()) s += k + " = " + f.get(c) + "\n";
  return s;
}

inline void write_config(const std::string& path, const ScenarioConfig& c) {
  auto out = open_output(path);
  out << format_config(c);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace smloc
