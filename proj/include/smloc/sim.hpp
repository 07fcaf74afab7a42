#pragma once

// Deterministic sensor simulation: an environment of rectangular planar
// patches, closed-form ground-truth trajectories, differential-drive wheel
// odometry and a forward-looking depth camera.

#include "smloc/liegroup.hpp"
#include "smloc/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace smloc {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent seed for a named stream of a scenario.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

namespace stream {
inline constexpr std::uint64_t environment = 1;
inline constexpr std::uint64_t odometry = 2;
inline constexpr std::uint64_t scan = 3;
inline constexpr std::uint64_t map = 4;
inline constexpr std::uint64_t icp = 5;
}  // namespace stream

struct Patch {
  Vector3 center = Vector3::Zero();
  Vector3 normal = Vector3::UnitZ();
  Vector3 axis_u = Vector3::UnitX();
  Vector3 axis_v = Vector3::UnitY();
  double half_u = 0.5;
  double half_v = 0.5;

  void validate() const {
    const double tol = 1e-9;
    if (!(half_u > 0.0) || !(half_v > 0.0)) throw std::invalid_argument("Patch: half-extents must be positive");
    if (std::abs(axis_u.norm() - 1) > tol || std::abs(axis_v.norm() - 1) > tol ||
        std::abs(normal.norm() - 1) > tol || std::abs(axis_u.dot(axis_v)) > tol ||
        (axis_u.cross(axis_v) - normal).norm() > tol) {
      throw std::invalid_argument("Patch: axes must be a right-handed orthonormal frame");
    }
  }

  /// Ray parameter of the hit, if any. The ray is o + t d.
  std::optional<double> intersect(const Vector3& o, const Vector3& d) const {
    const double den = normal.dot(d);
    if (std::abs(den) < 1e-12) return std::nullopt;
    const double t = normal.dot(center - o) / den;
    if (!(t > 0.0)) return std::nullopt;
    const Vector3 r = o + t * d - center;
    if (std::abs(r.dot(axis_u)) > half_u || std::abs(r.dot(axis_v)) > half_v) return std::nullopt;
    return t;
  }

  double distance(const Vector3& q) const {
    const Vector3 r = q - center;
    const double du = std::max(0.0, std::abs(r.dot(axis_u)) - half_u);
    const double dv = std::max(0.0, std::abs(r.dot(axis_v)) - half_v);
    const double dn = r.dot(normal);
    return std::sqrt(du * du + dv * dv + dn * dn);
  }
};

/// Patch with the given outward normal; u is completed to a frame.
inline Patch make_patch(const Vector3& center, const Vector3& normal, const Vector3& u_hint,
                        double half_u, double half_v) {
  Patch p;
  p.center = center;
  p.normal = normal.normalized();
  p.axis_u = (u_hint - u_hint.dot(p.normal) * p.normal).normalized();
  p.axis_v = p.normal.cross(p.axis_u);
  p.half_u = half_u;
  p.half_v = half_v;
  return p;
}

struct Environment {
  std::vector<Patch> patches;

  /// Distance from q to the nearest patch.
  double distance(const Vector3& q) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : patches) best = std::min(best, p.distance(q));
    return best;
  }
};

enum class TrajectoryKind { straight, circle, stationary };

inline std::string_view to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::straight: return "straight";
    case TrajectoryKind::circle: return "circle";
    case TrajectoryKind::stationary: return "stationary";
  }
  return "?";
}

inline TrajectoryKind parse_trajectory_kind(std::string_view s) {
  if (s == "straight") return TrajectoryKind::straight;
  if (s == "circle") return TrajectoryKind::circle;
  if (s == "stationary") return TrajectoryKind::stationary;
  throw std::invalid_argument("unknown trajectory kind '" + std::string(s) + "'");
}

struct BodyVelocityTruth {
  Vector3 omega = Vector3::Zero();
  Vector3 mu = Vector3::Zero();
};

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::straight;
  double speed = 0.25;   // m/s
  double radius = 1.0;   // m, circle only; positive turns left (counter-clockwise)
  double duration = 8.0; // s
  Pose start;

  void validate() const {
    if (!(speed >= 0.0) || !std::isfinite(speed)) throw std::invalid_argument("trajectory: speed must be >= 0");
    if (kind == TrajectoryKind::circle && !(radius > 0.0)) {
      throw std::invalid_argument("trajectory: circle radius must be > 0");
    }
    if (!(duration > 0.0)) throw std::invalid_argument("trajectory: duration must be > 0");
    if (!is_rotation(start.R)) throw std::invalid_argument("trajectory: start rotation invalid");
  }

  BodyVelocityTruth velocity() const;
};

inline BodyVelocityTruth TrajectorySpec::velocity() const {
  BodyVelocityTruth v;
  switch (kind) {
    case TrajectoryKind::straight: v.mu.x() = speed; break;
    case TrajectoryKind::circle:
      v.mu.x() = speed;
      v.omega.z() = speed / radius;
      break;
    case TrajectoryKind::stationary: break;
  }
  return v;
}

/// Closed-form pose at time t.
inline Pose trajectory_pose(const TrajectorySpec& spec, double t) {
  const Pose& s = spec.start;
  switch (spec.kind) {
    case TrajectoryKind::straight: return {s.R, s.p + s.R * Vector3(spec.speed * t, 0.0, 0.0)};
    case TrajectoryKind::circle: {
      const double w = spec.speed / spec.radius;
      const double a = w * t;
      const Vector3 local(spec.radius * std::sin(a), spec.radius * (1.0 - std::cos(a)), 0.0);
      return {s.R * rot_z(a), s.p + s.R * local};
    }
    case TrajectoryKind::stationary: return s;
  }
  return s;
}

struct TrajectorySample {
  double t = 0.0;
  Pose pose;
  Vector3 omega = Vector3::Zero();
  Vector3 mu = Vector3::Zero();
};

inline std::size_t sample_count(double duration, double rate) {
  return static_cast<std::size_t>(std::llround(duration * rate));
}

/// Samples at t_k = k / rate for k < round(duration * rate).
inline std::vector<TrajectorySample> generate_trajectory(const TrajectorySpec& spec, double rate) {
  spec.validate();
  if (!(rate > 0.0)) throw std::invalid_argument("generate_trajectory: rate must be > 0");
  const auto vel = spec.velocity();
  const std::size_t n = sample_count(spec.duration, rate);
  std::vector<TrajectorySample> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    out[k] = {t, trajectory_pose(spec, t), vel.omega, vel.mu};
  }
  return out;
}

struct NoiseConfig {
  double sigma_mu_x = 0.01;      // m/s/sqrt(Hz)
  double sigma_omega_z = 0.02;   // rad/s/sqrt(Hz)
  double off_axis_factor = 0.1;  // variance ratio on undriven axes
  double delta = 0.01;           // depth quantization step, m
  double sigma_depth = 0.002;    // m
  /// Std of the per-scan smooth depth error field, in units of delta.
  double resolution_field = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    for (double v : {sigma_mu_x, sigma_omega_z, off_axis_factor, delta, sigma_depth, resolution_field}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("noise: values must be finite and >= 0");
    }
  }
};

struct OdometryConfig {
  double kappa1 = 788.0;  // encoder counts per metre; <= 0 or inf disables quantization
  double kappa2 = 0.44;   // wheel track, m
  double rate = 50.0;     // Hz

  bool quantized() const { return kappa1 > 0.0 && std::isfinite(kappa1); }
};

struct OdometrySample {
  double t = 0.0;
  Vector3 omega = Vector3::Zero();
  Vector3 mu = Vector3::Zero();
};

/// Wheel-encoder readings and their conversion back to body velocities,
/// with additive white noise. truth must be sampled at cfg.rate and each
/// sample's velocity holds over the following interval.
inline std::vector<OdometrySample> simulate_odometry(const std::vector<TrajectorySample>& truth,
                                                     const NoiseConfig& noise,
                                                     const OdometryConfig& cfg,
                                                     std::uint64_t seed) {
  noise.validate();
  if (!(cfg.kappa2 > 0.0)) throw std::invalid_argument("odometry: kappa2 must be > 0");
  if (!(cfg.rate > 0.0)) throw std::invalid_argument("odometry: rate must be > 0");
  const double dt = 1.0 / cfg.rate;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double s_mu = noise.sigma_mu_x / std::sqrt(dt);
  const double s_w = noise.sigma_omega_z / std::sqrt(dt);
  const double off = std::sqrt(noise.off_axis_factor);

  std::vector<OdometrySample> out(truth.size());
  double dist_l = 0.0, dist_r = 0.0;
  long long counts_l = 0, counts_r = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double v = truth[k].mu.x();
    const double w = truth[k].omega.z();
    double mu_x = v, omega_z = w;
    if (cfg.quantized()) {
      dist_l += (v - w * cfg.kappa2 / 2.0) * dt;
      dist_r += (v + w * cfg.kappa2 / 2.0) * dt;
      const auto cl = static_cast<long long>(std::floor(dist_l * cfg.kappa1 + 1e-9));
      const auto cr = static_cast<long long>(std::floor(dist_r * cfg.kappa1 + 1e-9));
      const double dl = static_cast<double>(cl - counts_l);
      const double dr = static_cast<double>(cr - counts_r);
      counts_l = cl;
      counts_r = cr;
      mu_x = (dl + dr) / (2.0 * cfg.kappa1 * dt);
      omega_z = (dr - dl) / (cfg.kappa1 * cfg.kappa2 * dt);
    }
    OdometrySample& o = out[k];
    o.t = truth[k].t;
    o.omega = {off * s_w * gauss(rng), off * s_w * gauss(rng), omega_z + s_w * gauss(rng)};
    o.mu = {mu_x + s_mu * gauss(rng), off * s_mu * gauss(rng), off * s_mu * gauss(rng)};
  }
  return out;
}

/// Encoder counts accumulated by each wheel, for inspection.
struct WheelCounts {
  long long left = 0;
  long long right = 0;
};

inline WheelCounts wheel_counts(double dist_left, double dist_right, double kappa1) {
  return {static_cast<long long>(std::floor(dist_left * kappa1 + 1e-9)),
          static_cast<long long>(std::floor(dist_right * kappa1 + 1e-9))};
}

struct CameraConfig {
  std::size_t width = 160;
  std::size_t height = 120;
  double hfov = 57.0 * kPi / 180.0;
  double vfov = 43.0 * kPi / 180.0;
  double min_range = 1.0;  // m, along the optical axis
  double max_range = 3.0;
  Vector3 offset = Vector3::Zero();  // camera origin in the body frame

  void validate() const {
    if (width < 2 || height < 2) throw std::invalid_argument("camera: need at least 2x2 rays");
    if (!(hfov > 0.0 && hfov < kPi) || !(vfov > 0.0 && vfov < kPi)) {
      throw std::invalid_argument("camera: field of view must be in (0, pi)");
    }
    if (!(min_range >= 0.0) || !(max_range > min_range)) throw std::invalid_argument("camera: bad range gate");
  }

  /// Unnormalized ray (1, u, v) in the body frame for pixel (i, j); the
  /// x component is 1 so the ray parameter equals depth.
  Vector3 ray(std::size_t i, std::size_t j) const {
    const double su = 1.0 - 2.0 * static_cast<double>(i) / static_cast<double>(width - 1);
    const double sv = 1.0 - 2.0 * static_cast<double>(j) / static_cast<double>(height - 1);
    return {1.0, std::tan(hfov / 2.0) * su, std::tan(vfov / 2.0) * sv};
  }
};

/// Smooth random depth error over the image plane: bilinear interpolation of
/// a 3x3 lattice of Gaussian nodes.
class ResolutionField {
 public:
  ResolutionField() = default;
  ResolutionField(double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto& v : nodes_) v = stddev * g(rng);
  }
  /// s, r in [0, 1] across the image.
  double operator()(double s, double r) const {
    const double x = std::clamp(s, 0.0, 1.0) * 2.0;
    const double y = std::clamp(r, 0.0, 1.0) * 2.0;
    const int i = std::min(1, static_cast<int>(x));
    const int j = std::min(1, static_cast<int>(y));
    const double fx = x - i, fy = y - j;
    auto at = [&](int a, int b) { return nodes_[static_cast<std::size_t>(b * 3 + a)]; };
    return (1 - fx) * (1 - fy) * at(i, j) + fx * (1 - fy) * at(i + 1, j) +
           (1 - fx) * fy * at(i, j + 1) + fx * fy * at(i + 1, j + 1);
  }

 private:
  std::array<double, 9> nodes_{};
};

struct ScanOptions {
  bool noise = true;          // Gaussian depth noise and resolution field
  bool quantize = true;       // rounding to multiples of delta
};

/// Ray-casts one depth image from `pose` (body pose in the world). Points are
/// returned in the body frame with sensor_origin = camera offset. An empty
/// cloud means nothing was in range.
inline PointCloud simulate_depth_scan(const Pose& pose, const Environment& env,
                                      const CameraConfig& cam, const NoiseConfig& noise,
                                      std::uint64_t seed, const ScanOptions& opt = {}) {
  cam.validate();
  noise.validate();
  std::mt19937_64 rng(seed);
  const ResolutionField field(opt.noise ? noise.resolution_field * noise.delta : 0.0, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PointCloud cloud;
  cloud.sensor_origin = cam.offset;
  cloud.points.reserve(cam.width * cam.height);
  const Vector3 origin = pose.transform(cam.offset);
  for (std::size_t j = 0; j < cam.height; ++j) {
    for (std::size_t i = 0; i < cam.width; ++i) {
      const Vector3 ray_b = cam.ray(i, j);
      const Vector3 ray_w = pose.R * ray_b;
      double depth = std::numeric_limits<double>::infinity();
      for (const auto& patch : env.patches) {
        if (const auto t = patch.intersect(origin, ray_w); t && *t < depth) depth = *t;
      }
      if (!std::isfinite(depth)) continue;
      double measured = depth;
      if (opt.noise) {
        measured += noise.sigma_depth * gauss(rng);
        measured += field(static_cast<double>(i) / (cam.width - 1), static_cast<double>(j) / (cam.height - 1));
      }
      if (opt.quantize && noise.delta > 0.0) measured = std::round(measured / noise.delta) * noise.delta;
      if (measured < cam.min_range || measured > cam.max_range) continue;
      cloud.points.push_back(cam.offset + measured * ray_b);
    }
  }
  return cloud;
}

struct EnvironmentSpec {
  double x_min = -1.5, x_max = 3.5;
  double y_min = -1.5, y_max = 3.5;
  double floor_z = -0.4;
  double wall_height = 2.0;
  bool floor = true;
  std::size_t n_boxes = 6;
  double box_min_half = 0.15, box_max_half = 0.3;
  double box_min_height = 0.3, box_max_height = 0.8;
  /// Minimum horizontal clearance between a box and any keep-out path.
  double clearance = 0.7;
  double wall_inset = 0.3;
  std::uint64_t seed = 1;
};

/// Axis-aligned room (floor and four inward-facing walls) plus randomly
/// placed yawed boxes kept clear of the given path points.
inline Environment make_room(const EnvironmentSpec& spec, const std::vector<Vector3>& keep_out) {
  if (!(spec.x_max > spec.x_min) || !(spec.y_max > spec.y_min) || !(spec.wall_height > 0.0)) {
    throw std::invalid_argument("environment: bad room extents");
  }
  Environment env;
  const double cx = 0.5 * (spec.x_min + spec.x_max), cy = 0.5 * (spec.y_min + spec.y_max);
  const double hx = 0.5 * (spec.x_max - spec.x_min), hy = 0.5 * (spec.y_max - spec.y_min);
  const double hz = 0.5 * spec.wall_height;
  const double zc = spec.floor_z + hz;
  const Vector3 ez = Vector3::UnitZ();
  if (spec.floor) env.patches.push_back(make_patch({cx, cy, spec.floor_z}, ez, Vector3::UnitX(), hx, hy));
  env.patches.push_back(make_patch({spec.x_min, cy, zc}, Vector3::UnitX(), ez, hz, hy));
  env.patches.push_back(make_patch({spec.x_max, cy, zc}, -Vector3::UnitX(), ez, hz, hy));
  env.patches.push_back(make_patch({cx, spec.y_min, zc}, Vector3::UnitY(), ez, hz, hx));
  env.patches.push_back(make_patch({cx, spec.y_max, zc}, -Vector3::UnitY(), ez, hz, hx));

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
  std::vector<Vector3> centers;
  std::size_t attempts = 0;
  while (centers.size() < spec.n_boxes) {
    if (++attempts > 100000) throw std::runtime_error("environment: cannot place boxes with the given clearance");
    const double a = uniform(spec.box_min_half, spec.box_max_half);
    const double b = uniform(spec.box_min_half, spec.box_max_half);
    const double h = uniform(spec.box_min_height, spec.box_max_height);
    const double yaw = uniform(-kPi, kPi);
    const double reach = std::hypot(a, b);
    const double lo_x = spec.x_min + spec.wall_inset + reach, hi_x = spec.x_max - spec.wall_inset - reach;
    const double lo_y = spec.y_min + spec.wall_inset + reach, hi_y = spec.y_max - spec.wall_inset - reach;
    if (!(hi_x > lo_x) || !(hi_y > lo_y)) continue;
    const Vector3 c(uniform(lo_x, hi_x), uniform(lo_y, hi_y), 0.0);
    bool ok = true;
    for (const auto& q : keep_out) {
      if (std::hypot(q.x() - c.x(), q.y() - c.y()) < spec.clearance + reach) ok = false;
    }
    for (const auto& o : centers) {
      if (std::hypot(o.x() - c.x(), o.y() - c.y()) < 2.0 * spec.box_max_half * std::sqrt(2.0) + 0.1) {
        ok = false;
      }
    }
    if (!ok) continue;
    centers.push_back(c);
    const Matrix3 R = rot_z(yaw);
    const Vector3 ux = R.col(0), uy = R.col(1);
    const double zmid = spec.floor_z + 0.5 * h;
    env.patches.push_back(make_patch(c + Vector3(0, 0, spec.floor_z + h), ez, ux, a, b));
    env.patches.push_back(make_patch(c + a * ux + Vector3(0, 0, zmid), ux, uy, b, 0.5 * h));
    env.patches.push_back(make_patch(c - a * ux + Vector3(0, 0, zmid), -ux, uy, b, 0.5 * h));
    env.patches.push_back(make_patch(c + b * uy + Vector3(0, 0, zmid), uy, ux, a, 0.5 * h));
    env.patches.push_back(make_patch(c - b * uy + Vector3(0, 0, zmid), -uy, ux, a, 0.5 * h));
  }
  for (const auto& p : env.patches) p.validate();
  return env;
}

}  // namespace smloc
