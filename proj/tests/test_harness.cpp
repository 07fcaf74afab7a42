#include "smloc/harness.hpp"
#include "smloc/report.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace smloc;

namespace {

std::size_t count_lines(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

ScenarioConfig short_straight(double duration) {
  auto cfg = make_scenario(TrajectoryKind::straight);
  cfg.sim.trajectory.duration = duration;
  cfg.sim.seed = 5;
  return cfg;
}

ScenarioConfig noiseless_stationary() {
  auto cfg = make_scenario(TrajectoryKind::stationary);
  cfg.sim.trajectory.duration = 4.0;
  auto& n = cfg.sim.noise;
  n.sigma_mu_x = n.sigma_omega_z = n.sigma_depth = n.resolution_field = n.delta = 0.0;
  cfg.sim.map.noise = false;
  return cfg;
}

}  // namespace

TEST(Rms, ConstantError) {
  const std::vector<Vector3> e(10, Vector3(0.01, 0.0, 0.0));
  EXPECT_NEAR(compute_rms(e, ErrorComponent::x), 0.01, 1e-17);
  EXPECT_NEAR(compute_rms(e, ErrorComponent::planar), 0.01, 1e-17);
  EXPECT_EQ(compute_rms(e, ErrorComponent::y), 0.0);
}

TEST(Rms, ZeroAndHandArithmetic) {
  EXPECT_EQ(compute_rms(std::vector<Vector3>(3, Vector3::Zero()), ErrorComponent::planar), 0.0);
  const std::vector<Vector3> e = {{0.003, 0, 0}, {0.004, 0, 0}};
  EXPECT_NEAR(compute_rms(e, ErrorComponent::x), std::sqrt(12.5) * 1e-3, 1e-15);
  EXPECT_THROW(compute_rms(std::vector<Vector3>{}, ErrorComponent::x), std::invalid_argument);
}

TEST(Rms, DefinitionIdentity) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<Vector3> e(1000);
  for (auto& v : e) v = Vector3(g(rng), g(rng), g(rng)) * 0.05;
  for (auto c : {ErrorComponent::x, ErrorComponent::y, ErrorComponent::yaw}) {
    const int i = c == ErrorComponent::x ? 0 : c == ErrorComponent::y ? 1 : 2;
    double sum = 0.0;
    for (const auto& v : e) sum += v(i) * v(i);
    const double r = compute_rms(e, c);
    EXPECT_NEAR(r * r * e.size(), sum, 1e-12);
  }
}

TEST(Metrics, PlanarErrorAndWrap) {
  const Pose truth = make_pose({0, 0, 3.0}, {1, 2, 0});
  const Pose est{truth.R * rot_z(0.5), truth.p + Vector3(0.1, -0.2, 0.3)};
  const Vector3 e = planar_error(truth, est);
  EXPECT_NEAR(e.x(), 0.1, 1e-15);
  EXPECT_NEAR(e.y(), -0.2, 1e-15);
  EXPECT_NEAR(e.z(), 0.5, 1e-12);
  const Vector3 half = planar_error(Pose{}, Pose{rot_z(kPi), Vector3::Zero()});
  EXPECT_NEAR(std::abs(half.z()), kPi, 1e-12);
  EXPECT_GT(half.z(), 0.0);
}

TEST(Metrics, TruthInterpolation) {
  std::vector<TrajectorySample> truth(2);
  truth[0] = {0.0, make_pose({0, 0, 0}, {0, 0, 0}), {}, {}};
  truth[1] = {1.0, make_pose({0, 0, 1}, {2, 0, 0}), {}, {}};
  const Pose m = truth_at(truth, 0.25);
  EXPECT_LT((m.p - Vector3(0.5, 0, 0)).norm(), 1e-15);
  EXPECT_LT((m.R - rot_z(0.25)).norm(), 1e-15);
  EXPECT_EQ(truth_at(truth, -1).p, truth[0].pose.p);
  EXPECT_EQ(truth_at(truth, 9).p, truth[1].pose.p);
}

TEST(Metrics, MedianAndStdev) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_NEAR(stdev({1, 2, 3, 4}), std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(stdev({7}), 0.0);
}

TEST(Harness, PlanarGainSubset) {
  Matrix6 K;
  for (int i = 0; i < 36; ++i) K.data()[i] = i;
  const Matrix3 g = planar_gain(K);
  EXPECT_EQ(g(0, 0), K(3, 3));
  EXPECT_EQ(g(0, 2), K(3, 2));
  EXPECT_EQ(g(2, 1), K(2, 4));
}

TEST(Harness, StationaryNoiselessStaysAtTruth) {
  const auto res = run_experiment(noiseless_stationary());
  ASSERT_EQ(res.tracks.size(), 2u);
  for (const auto& tr : res.tracks) {
    EXPECT_EQ(tr.applied, 4u) << to_string(tr.kind);
    const Vector3 e = tr.error.back();
    EXPECT_LT(std::hypot(e.x(), e.y()), 1e-6) << to_string(tr.kind);
    EXPECT_LT(std::abs(e.z()), 1e-6) << to_string(tr.kind);
    EXPECT_LT((tr.pose.back().p - res.truth.back().p).norm(), 1e-6);
  }
}

TEST(Harness, HeadingErrorIsCorrected) {
  auto cfg = noiseless_stationary();
  cfg.filter.init_heading_error = 3.0 * kPi / 180.0;
  cfg.filter.P0_diag(2) = std::pow(3.0 * kPi / 180.0, 2);
  const SensorLog log = run_scenario(cfg.sim);
  const FilterState s0 = initial_state(cfg, log);
  EXPECT_NEAR(std::abs(planar_error(log.truth.front().pose, s0.pose).z()), 3.0 * kPi / 180.0, 1e-12);
  const auto res = run_experiment(cfg, log);
  for (const auto& tr : res.tracks) {
    EXPECT_LT(std::abs(tr.error.back().z()), 1e-3) << to_string(tr.kind);
  }
}

TEST(Harness, ReplayFromDiskIsBitIdentical) {
  const auto cfg = short_straight(3.0);
  const SensorLog log = run_scenario(cfg.sim);
  const auto dir = (std::filesystem::temp_directory_path() / "smloc_replay").string();
  std::filesystem::remove_all(dir);
  write_sensor_log(dir, log);
  const SensorLog back = read_sensor_log(dir);
  const auto a = run_experiment(cfg, log);
  const auto b = run_experiment(cfg, back);
  ASSERT_EQ(a.t, b.t);
  for (std::size_t f = 0; f < a.tracks.size(); ++f) {
    const auto& ta = a.tracks[f];
    const auto& tb = b.tracks[f];
    ASSERT_EQ(ta.pose.size(), tb.pose.size());
    for (std::size_t k = 0; k < ta.pose.size(); ++k) {
      EXPECT_EQ(ta.pose[k].R, tb.pose[k].R);
      EXPECT_EQ(ta.pose[k].p, tb.pose[k].p);
      EXPECT_EQ(ta.P_diag[k], tb.P_diag[k]);
    }
    ASSERT_EQ(ta.updates.size(), tb.updates.size());
    for (std::size_t u = 0; u < ta.updates.size(); ++u) EXPECT_EQ(ta.updates[u].K, tb.updates[u].K);
  }
  std::filesystem::remove_all(dir);
}

TEST(Harness, FiltersShareTimestampsAndHealthyCovariance) {
  const auto res = run_experiment(short_straight(4.0));
  EXPECT_EQ(res.t.size(), 200u);
  for (const auto& tr : res.tracks) {
    EXPECT_EQ(tr.pose.size(), res.t.size());
    EXPECT_EQ(tr.updates.size(), res.scan_events);
    EXPECT_LT(tr.max_asymmetry, 1e-10);
    EXPECT_GT(tr.min_eigenvalue, -1e-9);
    EXPECT_EQ(tr.hard_failures, 0u);
    EXPECT_LT(compute_rms(tr, ErrorComponent::planar), 0.05);
  }
}

TEST(Report, TwoStepResultAndSummary) {
  RunResult res;
  res.t = {0.0, 0.02};
  res.truth = {Pose{}, make_pose({0, 0, 0.01}, {0.005, 0, 0})};
  for (auto kind : {FilterKind::IEKF, FilterKind::MEKF}) {
    FilterTrack tr;
    tr.kind = kind;
    tr.pose = res.truth;
    tr.pose[1].p.x() += 0.01;
    for (std::size_t k = 0; k < 2; ++k) {
      tr.error.push_back(planar_error(res.truth[k], tr.pose[k]));
      tr.P_diag.push_back(Vector6::Constant(1e-4));
      tr.icp_cov_diag.push_back(Vector6::Constant(std::numeric_limits<double>::quiet_NaN()));
      tr.gain.push_back(Matrix3::Zero());
      tr.flag.push_back(StepFlag::none);
    }
    res.tracks.push_back(tr);
  }
  const auto dir = (std::filesystem::temp_directory_path() / "smloc_report").string();
  std::filesystem::remove_all(dir);
  emit_report(res, make_scenario(TrajectoryKind::straight), dir);
  EXPECT_EQ(count_lines(dir + "/result.csv"), 3u);
  EXPECT_EQ(count_lines(dir + "/summary.csv"), 3u);
  std::ifstream in(dir + "/summary.csv");
  std::string header, r1, r2;
  std::getline(in, header);
  std::getline(in, r1);
  std::getline(in, r2);
  EXPECT_EQ(header, kSummaryHeader);
  EXPECT_EQ(r1.rfind("IEKF,", 0), 0u);
  EXPECT_EQ(r2.rfind("MEKF,", 0), 0u);
  for (const char* f : {"overhead.svg", "pose.svg", "gains.svg", "config.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir + "/" + f)) << f;
  }
  const auto cfg = read_config(dir + "/config.txt");
  EXPECT_EQ(cfg.scenario, TrajectoryKind::straight);
  std::filesystem::remove_all(dir);
}

TEST(Report, ResultHeaderColumns) {
  RunResult res;
  FilterTrack tr;
  tr.kind = FilterKind::MEKF;
  res.tracks.push_back(tr);
  const std::string h = result_header(res);
  EXPECT_EQ(h.rfind("t,truth_r00,", 0), 0u);
  EXPECT_NE(h.find(",mekf_K_psi_x,"), std::string::npos);
  EXPECT_NE(h.find(",mekf_icp_cov55,"), std::string::npos);
  EXPECT_EQ(std::count(h.begin(), h.end(), ','), 15 + 15 + 3 + 9 + 6 + 6 + 1);
}

TEST(Report, GainFlatnessOnSyntheticSeries) {
  FilterTrack flat, wavy;
  for (int k = 0; k < 20; ++k) {
    UpdateEvent u;
    u.applied = true;
    u.K = -0.5 * Matrix6::Identity();
    flat.updates.push_back(u);
    u.K = (0.5 + 0.1 * std::sin(0.7 * k)) * Matrix6::Identity();
    wavy.updates.push_back(u);
  }
  const Matrix3 sf = gain_stdev(flat), sw = gain_stdev(wavy);
  EXPECT_EQ(sf, Matrix3::Zero());
  EXPECT_GT(sw(0, 0), 0.05);
}
