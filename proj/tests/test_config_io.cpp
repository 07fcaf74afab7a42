#include "smloc/config.hpp"

#include <gtest/gtest.h>

using namespace smloc;

TEST(Config, DefaultsPerScenario) {
  const auto c = make_scenario(TrajectoryKind::circle);
  EXPECT_EQ(c.sim.trajectory.kind, TrajectoryKind::circle);
  EXPECT_EQ(c.icp.n_select, 3000u);
  EXPECT_EQ(c.icp.iterations, 25u);
  EXPECT_DOUBLE_EQ(c.icp.max_pair_distance, 0.25);
  EXPECT_DOUBLE_EQ(c.icp.max_normal_angle, kPi / 4);
  EXPECT_DOUBLE_EQ(c.sim.odometry.kappa1, 788.0);
  EXPECT_DOUBLE_EQ(c.sim.odometry.kappa2, 0.44);
  EXPECT_EQ(c.filter.P0_diag, Vector6::Constant(1e-4));
}

TEST(Config, ParseOverridesAndComments) {
  const auto c = parse_config(
      "# circle run\n"
      "scenario.kind = circle\n"
      "icp.iterations = 30   # more\n"
      "\n"
      "filter.init_heading_error_deg = 20\n"
      "filter.P0 = 1e-4 1e-4 0.12 1e-4 1e-4 1e-4\n"
      "trajectory.start = 0.5 0 0 90\n"
      "camera.offset = 0.1 0 0.2\n"
      "filter.outlier_gate = reject\n"
      "map.noise = false\n");
  EXPECT_EQ(c.scenario, TrajectoryKind::circle);
  EXPECT_DOUBLE_EQ(c.sim.trajectory.duration, make_scenario(TrajectoryKind::circle).sim.trajectory.duration);
  EXPECT_EQ(c.icp.iterations, 30u);
  EXPECT_NEAR(c.filter.init_heading_error, 20 * kPi / 180, 1e-15);
  EXPECT_DOUBLE_EQ(c.filter.P0_diag(2), 0.12);
  EXPECT_LT((c.sim.trajectory.start.R - rot_z(kPi / 2)).norm(), 1e-15);
  EXPECT_EQ(c.sim.trajectory.start.p, Vector3(0.5, 0, 0));
  EXPECT_EQ(c.sim.camera.offset, Vector3(0.1, 0, 0.2));
  EXPECT_EQ(c.filter.gate, OutlierGate::reject);
  EXPECT_FALSE(c.sim.map.noise);
}

TEST(Config, KindResetsRegardlessOfPosition) {
  const auto c = parse_config("icp.iterations = 7\nscenario.kind = stationary\n");
  EXPECT_EQ(c.scenario, TrajectoryKind::stationary);
  EXPECT_EQ(c.icp.iterations, 7u);
}

TEST(Config, UnknownKeyIsError) {
  try {
    parse_config("icp.iterations = 25\nicp.itterations = 25\n", {}, "run.cfg");
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("icp.itterations"), std::string::npos);
    EXPECT_NE(msg.find("run.cfg:2"), std::string::npos);
  }
}

TEST(Config, MalformedValuesAreErrors) {
  EXPECT_THROW(parse_config("icp.iterations = many\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("filter.P0 = 1 2 3\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("map.noise = maybe\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("just some text\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("scenario.kind = spiral\n"), std::invalid_argument);
}

TEST(Config, TextRoundTrip) {
  auto c = make_scenario(TrajectoryKind::circle);
  c.sim.seed = 12345;
  c.filter.init_heading_error = 20 * kPi / 180;
  c.filter.Q_diag = Vector6::Constant(1.0 / 3.0);
  c.sim.noise.delta = 0.0123456789;
  c.output_dir = "some/dir";
  const std::string text = format_config(c);
  const auto back = parse_config(text);
  EXPECT_EQ(format_config(back), text);
  EXPECT_EQ(back.sim.seed, 12345u);
  EXPECT_EQ(back.sim.noise.delta, c.sim.noise.delta);
  ASSERT_TRUE(back.filter.Q_diag.has_value());
  EXPECT_EQ(*back.filter.Q_diag, *c.filter.Q_diag);
  EXPECT_EQ(back.output_dir, "some/dir");
  EXPECT_EQ(back.scenario, TrajectoryKind::circle);
}

TEST(Config, ProcessNoiseFromSimulator) {
  const auto c = make_scenario(TrajectoryKind::straight);
  const Matrix6 Q = c.process_noise();
  EXPECT_DOUBLE_EQ(Q(2, 2), 0.02 * 0.02);
  EXPECT_DOUBLE_EQ(Q(3, 3), 0.01 * 0.01);
  EXPECT_DOUBLE_EQ(Q(0, 0), 0.1 * 0.02 * 0.02);
  EXPECT_DOUBLE_EQ(Q(5, 5), 0.1 * 0.01 * 0.01);
  EXPECT_EQ(Q(0, 1), 0.0);
}

TEST(TextIO, ShortestRoundTripDoubles) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, -0.0, 1e-17}) {
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.25), "0.25");
  EXPECT_THROW(parse_double("1.0x"), std::invalid_argument);
  EXPECT_TRUE(std::isnan(parse_double("nan")));
}

TEST(TextIO, SplitKeepsEmptyFields) {
  const auto f = split("a,,b,", ',');
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[1], "");
  EXPECT_EQ(f[3], "");
}

TEST(CsvIO, OdometryAndTruthRoundTrip) {
  std::vector<OdometrySample> odo = {{0.0, {1e-3, -2e-3, 0.3}, {0.25, 1.0 / 3.0, 0}},
                                     {0.02, {0, 0, 0.31}, {0.26, 0, -1e-9}}};
  std::vector<TrajectorySample> truth(2);
  truth[0].pose = make_pose({0.1, 0.2, 0.3}, {1, 2, 3});
  truth[1].t = 1.0 / 120.0;
  truth[1].pose = make_pose({-0.1, 0.2, 1.3}, {1, -2, 3});
  const auto dir = std::filesystem::temp_directory_path();
  const auto po = (dir / "smloc_odo.csv").string(), pt = (dir / "smloc_truth.csv").string();
  write_odometry_csv(po, odo);
  write_truth_csv(pt, truth);
  const auto o2 = read_odometry_csv(po);
  const auto t2 = read_truth_csv(pt);
  ASSERT_EQ(o2.size(), 2u);
  ASSERT_EQ(t2.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(o2[i].t, odo[i].t);
    EXPECT_EQ(o2[i].omega, odo[i].omega);
    EXPECT_EQ(o2[i].mu, odo[i].mu);
    EXPECT_EQ(t2[i].t, truth[i].t);
    EXPECT_EQ(t2[i].pose.R, truth[i].pose.R);
    EXPECT_EQ(t2[i].pose.p, truth[i].pose.p);
  }
  {
    auto in = open_input(po);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "t,wx,wy,wz,vx,vy,vz");
  }
  std::filesystem::remove(po);
  std::filesystem::remove(pt);
}

TEST(CsvIO, NonIncreasingTimestampsRejected) {
  const auto path = (std::filesystem::temp_directory_path() / "smloc_odo_bad.csv").string();
  {
    auto out = open_output(path);
    out << "t,wx,wy,wz,vx,vy,vz\n0,0,0,0,0,0,0\n0,0,0,0,0,0,0\n";
  }
  EXPECT_THROW(read_odometry_csv(path), std::runtime_error);
  std::filesystem::remove(path);
}
