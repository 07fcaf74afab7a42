#pragma once

// Experiment runs: both filters over one sensor log, errors against
// interpolated ground truth, and the result/summary CSV files.

#include "smloc/config.hpp"
#include "smloc/filters.hpp"
#include "smloc/icp.hpp"
#include "smloc/parallel.hpp"
#include "smloc/scenario.hpp"
#include "smloc/textio.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace smloc {

/// Error-state indices of the planar block: x, y, yaw.
inline constexpr std::array<int, 3> kPlanarStates = {3, 4, 2};

inline Matrix3 planar_gain(const Matrix6& K) {
  Matrix3 g;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) g(i, j) = K(kPlanarStates[i], kPlanarStates[j]);
  }
  return g;
}

enum class StepFlag : int { none = 0, applied = 1, skipped = 2, outlier = 3, rejected = 4 };

struct UpdateEvent {
  double t = 0.0;
  std::size_t row = 0;
  bool measurement_valid = false;
  bool applied = false;
  bool outlier = false;
  bool degenerate = false;
  bool hard_failure = false;
  Matrix6 K = Matrix6::Zero();
  Vector6 x_icp = Vector6::Zero();
  Matrix6 R_nu = Matrix6::Zero();
  int rank = 0;
  double condition = 0.0;
  std::size_t n_pairs = 0;
  double mahalanobis = 0.0;
};

struct FilterTrack {
  FilterKind kind = FilterKind::IEKF;
  std::vector<Pose> pose;
  std::vector<Vector3> error;         // dx, dy (m, world), dpsi (rad)
  std::vector<Vector6> P_diag;
  std::vector<Vector6> icp_cov_diag;  // NaN on rows without a scan
  std::vector<Matrix3> gain;          // planar block of the latest applied K
  std::vector<StepFlag> flag;
  std::vector<UpdateEvent> updates;
  double max_asymmetry = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  std::size_t hard_failures = 0;
  std::size_t degenerate = 0;
  std::size_t applied = 0;
  std::size_t skipped = 0;
  std::size_t outliers = 0;
};

struct RunResult {
  std::vector<double> t;
  std::vector<Pose> truth;
  std::vector<FilterTrack> tracks;
  std::size_t scan_events = 0;

  const FilterTrack& track(FilterKind k) const {
    for (const auto& tr : tracks) {
      if (tr.kind == k) return tr;
    }
    throw std::out_of_range("RunResult: no track for " + std::string(to_string(k)));
  }
};

class ExperimentAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ground truth at time t: linear in position, geodesic in rotation.
inline Pose truth_at(const std::vector<TrajectorySample>& truth, double t) {
  if (truth.empty()) throw std::invalid_argument("truth_at: empty ground truth");
  if (t <= truth.front().t) return truth.front().pose;
  if (t >= truth.back().t) return truth.back().pose;
  const auto it = std::upper_bound(truth.begin(), truth.end(), t,
                                   [](double v, const TrajectorySample& s) { return v < s.t; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  return interpolate(a.pose, b.pose, (t - a.t) / (b.t - a.t));
}

/// Planar errors of an estimate: world-frame dx, dy and the yaw component of
/// log(R_truth^T R_est), wrapped to (-pi, pi].
inline Vector3 planar_error(const Pose& truth, const Pose& est) {
  const Vector3 d = est.p - truth.p;
  const Matrix3 rel = truth.R.transpose() * est.R;
  double yaw;
  try {
    yaw = log_so3(rel).z();
  } catch (const std::domain_error&) {
    yaw = std::atan2(rel(1, 0), rel(0, 0));
  }
  return {d.x(), d.y(), wrap_angle(yaw)};
}

enum class ErrorComponent { x, y, yaw, planar };

inline double compute_rms(const std::vector<Vector3>& errors, ErrorComponent c) {
  if (errors.empty()) throw std::invalid_argument("compute_rms: empty result");
  double s = 0.0;
  for (const auto& e : errors) {
    switch (c) {
      case ErrorComponent::x: s += e.x() * e.x(); break;
      case ErrorComponent::y: s += e.y() * e.y(); break;
      case ErrorComponent::yaw: s += e.z() * e.z(); break;
      case ErrorComponent::planar: s += e.x() * e.x() + e.y() * e.y(); break;
    }
  }
  return std::sqrt(s / static_cast<double>(errors.size()));
}

inline double compute_rms(const FilterTrack& track, ErrorComponent c) { return compute_rms(track.error, c); }

struct PreparedScan {
  ScanEvent const* event = nullptr;
  PointCloud cloud;  // with normals; empty if too sparse
};

/// Scans with normals, index of the map, and row lookup shared by filters.
struct PreparedLog {
  const SensorLog* log = nullptr;
  std::vector<PreparedScan> scans;
  std::vector<int> scan_at_row;  // scan index per odometry row, -1 if none
  std::unique_ptr<KdTree> map_index;
};

inline PreparedLog prepare_log(const SensorLog& log, std::size_t workers = 1) {
  if (log.odometry.size() < 2) throw std::invalid_argument("sensor log needs at least two odometry samples");
  if (!log.map.has_normals()) throw std::invalid_argument("sensor log map has no normals");
  PreparedLog p;
  p.log = &log;
  p.map_index = std::make_unique<KdTree>(log.map.points);
  p.scans.resize(log.scans.size());
  parallel_for(log.scans.size(), workers, [&](std::size_t i) {
    p.scans[i].event = &log.scans[i];
    if (log.scans[i].cloud.size() > kDefaultNormalNeighbors) {
      p.scans[i].cloud = estimate_normals(log.scans[i].cloud);
    }
  });
  p.scan_at_row.assign(log.odometry.size(), -1);
  std::size_t row = 0;
  for (std::size_t i = 0; i < log.scans.size(); ++i) {
    const double t = log.scans[i].t;
    while (row < log.odometry.size() && log.odometry[row].t < t - 1e-9) ++row;
    if (row < log.odometry.size() && std::abs(log.odometry[row].t - t) <= 1e-9) {
      p.scan_at_row[row] = static_cast<int>(i);
    } else {
      throw std::invalid_argument("scan at t=" + format_double(t) + " has no matching odometry sample");
    }
  }
  return p;
}

inline FilterState initial_state(const ScenarioConfig& cfg, const SensorLog& log) {
  FilterState s;
  const Pose start = log.truth.empty() ? cfg.sim.trajectory.start : log.truth.front().pose;
  s.pose = {rot_z(cfg.filter.init_heading_error) * start.R, start.p};
  s.P = cfg.filter.P0_diag.asDiagonal();
  s.t = log.odometry.front().t;
  return s;
}

struct MeasurementOutcome {
  PoseMeasurement meas;
  UpdateEvent event;
};

/// Registers one scan at the filter's predicted pose.
inline MeasurementOutcome measure(const ScenarioConfig& cfg, const PreparedLog& prep, const PreparedScan& scan,
                                  const Pose& predicted) {
  MeasurementOutcome out;
  out.meas.valid = false;
  out.event.t = scan.event->t;
  if (scan.cloud.empty()) {
    out.event.degenerate = true;
    return out;
  }
  IcpParams params = cfg.icp;
  params.seed = derive_seed(cfg.sim.seed, stream::icp, scan.event->index);
  try {
    IcpResult r = icp_register(scan.cloud, prep.log->map, *prep.map_index, predicted, params);
    const auto cov = covariance_resolution(r, cfg.registration);
    out.event.rank = r.rank();
    out.event.condition = r.condition();
    out.event.n_pairs = r.n_pairs();
    out.event.x_icp = r.x;
    out.event.R_nu = cov.covariance;
    if (!cov.observable) {
      out.event.degenerate = true;
      return out;
    }
    out.meas = {r.x, cov.covariance, true};
    out.event.measurement_valid = true;
  } catch (const MatchingFailure&) {
    out.event.hard_failure = true;
  } catch (const DegenerateGeometry& e) {
    out.event.degenerate = true;
    out.event.rank = e.analysis.rank;
    out.event.condition = e.analysis.condition;
    out.event.n_pairs = e.analysis.n_pairs;
  }
  return out;
}

inline void record_health(FilterTrack& tr, const Matrix6& P) {
  tr.max_asymmetry = std::max(tr.max_asymmetry, (P - P.transpose()).norm());
  tr.min_eigenvalue = std::min(tr.min_eigenvalue, min_eigenvalue(P));
}

/// One filter over the log. At each odometry row: apply the scan update if
/// a scan is stamped there, record the row, then predict to the next row.
inline FilterTrack run_filter(FilterKind kind, const ScenarioConfig& cfg, const PreparedLog& prep) {
  const SensorLog& log = *prep.log;
  const Matrix6 Q = cfg.process_noise();
  const UpdateOptions opt{cfg.filter.gate, cfg.filter.joseph};
  FilterTrack tr;
  tr.kind = kind;
  const std::size_t n = log.odometry.size();
  tr.pose.reserve(n);
  FilterState s = initial_state(cfg, log);
  record_health(tr, s.P);
  Matrix3 last_gain = Matrix3::Zero();
  const Vector6 nan6 = Vector6::Constant(std::numeric_limits<double>::quiet_NaN());

  for (std::size_t k = 0; k < n; ++k) {
    StepFlag flag = StepFlag::none;
    Vector6 icp_diag = nan6;
    if (const int si = prep.scan_at_row[k]; si >= 0) {
      auto mo = measure(cfg, prep, prep.scans[static_cast<std::size_t>(si)], s.pose);
      mo.event.row = k;
      UpdateInfo info;
      s = update(kind, s, mo.meas, opt, &info);
      mo.event.applied = info.applied;
      mo.event.outlier = info.outlier;
      mo.event.mahalanobis = info.mahalanobis;
      mo.event.K = info.K;
      if (mo.event.measurement_valid) icp_diag = mo.meas.R_nu.diagonal();
      if (mo.event.hard_failure) ++tr.hard_failures;
      if (mo.event.degenerate) ++tr.degenerate;
      if (info.applied) {
        ++tr.applied;
        last_gain = planar_gain(info.K);
        flag = info.outlier ? StepFlag::outlier : StepFlag::applied;
      } else {
        ++tr.skipped;
        flag = info.outlier ? StepFlag::rejected : StepFlag::skipped;
      }
      if (info.outlier) ++tr.outliers;
      tr.updates.push_back(mo.event);
      record_health(tr, s.P);
    }
    tr.pose.push_back(s.pose);
    tr.P_diag.push_back(s.P.diagonal());
    tr.icp_cov_diag.push_back(icp_diag);
    tr.gain.push_back(last_gain);
    tr.flag.push_back(flag);

    const auto& o = log.odometry[k];
    const double dt = k + 1 < n ? log.odometry[k + 1].t - o.t : log.odometry[k].t - log.odometry[k - 1].t;
    s = predict(s, {o.omega, o.mu}, Q, dt, kind);
    record_health(tr, s.P);
  }
  if (2 * tr.hard_failures > prep.scans.size()) {
    throw ExperimentAborted(std::string(to_string(kind)) + ": scan matching failed on " +
                            std::to_string(tr.hard_failures) + " of " + std::to_string(prep.scans.size()) +
                            " scans");
  }
  return tr;
}

inline std::vector<FilterKind> parse_filter_set(std::string_view s) {
  if (s == "both") return {FilterKind::IEKF, FilterKind::MEKF};
  return {parse_filter_kind(s)};
}

/// Runs the requested filters over the same sensor log.
inline RunResult run_experiment(const ScenarioConfig& cfg, const SensorLog& log,
                                const std::vector<FilterKind>& kinds = {FilterKind::IEKF, FilterKind::MEKF}) {
  const PreparedLog prep = prepare_log(log, cfg.icp.workers);
  RunResult res;
  res.scan_events = log.scans.size();
  res.t.reserve(log.odometry.size());
  for (const auto& o : log.odometry) {
    res.t.push_back(o.t);
    res.truth.push_back(truth_at(log.truth, o.t));
  }
  for (const auto kind : kinds) {
    FilterTrack tr = run_filter(kind, cfg, prep);
    tr.error.reserve(res.t.size());
    for (std::size_t k = 0; k < res.t.size(); ++k) tr.error.push_back(planar_error(res.truth[k], tr.pose[k]));
    res.tracks.push_back(std::move(tr));
  }
  return res;
}

inline RunResult run_experiment(const ScenarioConfig& cfg,
                                const std::vector<FilterKind>& kinds = {FilterKind::IEKF, FilterKind::MEKF}) {
  const SensorLog log = run_scenario(cfg.sim);
  return run_experiment(cfg, log, kinds);
}

struct FilterSummary {
  FilterKind kind = FilterKind::IEKF;
  double rms_x = 0, rms_y = 0, rms_planar = 0, rms_yaw = 0;
  double final_dx = 0, final_dy = 0, final_planar = 0, final_yaw = 0;
  std::size_t applied = 0, skipped = 0, outliers = 0, hard_failures = 0, degenerate = 0;
};

inline FilterSummary summarize(const FilterTrack& tr) {
  FilterSummary s;
  s.kind = tr.kind;
  s.rms_x = compute_rms(tr, ErrorComponent::x);
  s.rms_y = compute_rms(tr, ErrorComponent::y);
  s.rms_planar = compute_rms(tr, ErrorComponent::planar);
  s.rms_yaw = compute_rms(tr, ErrorComponent::yaw);
  const Vector3& e = tr.error.back();
  s.final_dx = e.x();
  s.final_dy = e.y();
  s.final_planar = std::hypot(e.x(), e.y());
  s.final_yaw = std::abs(e.z());
  s.applied = tr.applied;
  s.skipped = tr.skipped;
  s.outliers = tr.outliers;
  s.hard_failures = tr.hard_failures;
  s.degenerate = tr.degenerate;
  return s;
}

inline constexpr const char* kSummaryHeader =
    "filter,rms_x,rms_y,rms_planar,rms_yaw,final_dx,final_dy,final_planar,final_yaw,"
    "updates_applied,updates_skipped,outliers,icp_failures,degenerate";

inline std::string summary_row(const FilterSummary& s) {
  std::string r = std::string(to_string(s.kind));
  for (double v : {s.rms_x, s.rms_y, s.rms_planar, s.rms_yaw, s.final_dx, s.final_dy, s.final_planar, s.final_yaw}) {
    r += ',' + format_double(v);
  }
  for (std::size_t v : {s.applied, s.skipped, s.outliers, s.hard_failures, s.degenerate}) r += ',' + std::to_string(v);
  return r;
}

namespace detail {

inline void pose_header(std::string& h, const std::string& prefix) {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) h += "," + prefix + "r" + std::to_string(r) + std::to_string(c);
  }
  h += "," + prefix + "px," + prefix + "py," + prefix + "pz";
  h += "," + prefix + "yaw_zyx," + prefix + "pitch_zyx," + prefix + "roll_zyx";
}

inline void pose_fields(std::string& row, const Pose& p) {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) row += ',' + format_double(p.R(r, c));
  }
  for (int i = 0; i < 3; ++i) row += ',' + format_double(p.p(i));
  const auto e = euler_zyx(p.R);
  row += ',' + format_double(e.yaw) + ',' + format_double(e.pitch) + ',' + format_double(e.roll);
}

}  // namespace detail

inline constexpr std::array<const char*, 3> kPlanarNames = {"x", "y", "psi"};

/// Columns: t, truth pose, then per filter its pose, planar errors, the
/// planar gain block, P diagonal, ICP covariance diagonal and step flag.
/// Euler angles are Z-Y-X (yaw, pitch, roll) in radians.
inline std::string result_header(const RunResult& res) {
  std::string h = "t";
  detail::pose_header(h, "truth_");
  for (const auto& tr : res.tracks) {
    std::string f(to_string(tr.kind));
    std::transform(f.begin(), f.end(), f.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    f += "_";
    detail::pose_header(h, f);
    h += "," + f + "dx," + f + "dy," + f + "dpsi";
    for (auto a : kPlanarNames) {
      for (auto b : kPlanarNames) h += "," + f + "K_" + a + "_" + b;
    }
    for (int i = 0; i < 6; ++i) h += "," + f + "P" + std::to_string(i) + std::to_string(i);
    for (int i = 0; i < 6; ++i) h += "," + f + "icp_cov" + std::to_string(i) + std::to_string(i);
    h += "," + f + "flag";
  }
  return h;
}

inline void write_result_csv(const std::string& path, const RunResult& res) {
  auto out = open_output(path);
  out << result_header(res) << '\n';
  for (std::size_t k = 0; k < res.t.size(); ++k) {
    std::string row = format_double(res.t[k]);
    detail::pose_fields(row, res.truth[k]);
    for (const auto& tr : res.tracks) {
      detail::pose_fields(row, tr.pose[k]);
      for (int i = 0; i < 3; ++i) row += ',' + format_double(tr.error[k](i));
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) row += ',' + format_double(tr.gain[k](i, j));
      }
      for (int i = 0; i < 6; ++i) row += ',' + format_double(tr.P_diag[k](i));
      for (int i = 0; i < 6; ++i) row += ',' + format_double(tr.icp_cov_diag[k](i));
      row += ',' + std::to_string(static_cast<int>(tr.flag[k]));
    }
    out << row << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_summary_csv(const std::string& path, const RunResult& res) {
  auto out = open_output(path);
  out << kSummaryHeader << '\n';
  for (const auto& tr : res.tracks) out << summary_row(summarize(tr)) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double stdev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Per-entry stdev over time of the planar gain block, over applied
/// updates from index `skip` on.
inline Matrix3 gain_stdev(const FilterTrack& tr, std::size_t skip = 0) {
  Matrix3 out = Matrix3::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      std::vector<double> series;
      std::size_t seen = 0;
      for (const auto& u : tr.updates) {
        if (!u.applied) continue;
        if (seen++ < skip) continue;
        series.push_back(planar_gain(u.K)(i, j));
      }
      out(i, j) = stdev(series);
    }
  }
  return out;
}

}  // namespace smloc
