#include "smloc/icp.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace smloc;

namespace {

/// Three faces of a unit cube meeting at the origin, on a regular grid,
/// with normals facing the inside.
PointCloud corner_cloud(double spacing, double lo = 0.0, double hi = 1.0) {
  PointCloud c;
  const int n = static_cast<int>(std::lround((hi - lo) / spacing));
  for (int axis = 0; axis < 3; ++axis) {
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= n; ++j) {
        Vector3 p;
        p((axis + 1) % 3) = lo + i * spacing;
        p((axis + 2) % 3) = lo + j * spacing;
        p(axis) = 0.0;
        c.points.push_back(p);
        c.normals.push_back(Vector3::Unit(axis));
        c.planarity.push_back(0.0);
        c.normal_valid.push_back(1);
      }
    }
  }
  c.sensor_origin = {1, 1, 1};
  return c;
}

PointCloud plane_cloud(double spacing, int n) {
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      c.points.emplace_back(i * spacing, j * spacing, 0.0);
      c.normals.push_back(Vector3::UnitZ());
      c.planarity.push_back(0.0);
      c.normal_valid.push_back(1);
    }
  }
  c.sensor_origin = {0, 0, 1};
  return c;
}

std::vector<Correspondence> random_correspondences(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Correspondence> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].a = Vector3(g(rng), g(rng), g(rng));
    out[i].b = out[i].a + 0.01 * Vector3(g(rng), g(rng), g(rng));
    out[i].n = Vector3(g(rng), g(rng), g(rng)).normalized();
    out[i].source_index = i;
  }
  return out;
}

Vector6 pose_delta(const Pose& from, const Pose& to) {
  Vector6 x;
  x.head<3>() = log_so3(from.R.transpose() * to.R);
  x.tail<3>() = from.R.transpose() * (to.p - from.p);
  return x;
}

}  // namespace

TEST(Matching, DistanceAndAngleGates) {
  const PointCloud target = plane_cloud(0.01, 50);
  const KdTree index(target.points);
  const std::vector<Vector3> pts = {
      {0.2, 0.2, 0.05},   // kept
      {0.2, 0.2, 0.30},   // too far
      {0.3, 0.3, -0.01},  // kept, normal 30 degrees off
      {0.1, 0.1, 0.02},   // normal 60 degrees off
  };
  const std::vector<Vector3> nrm = {
      Vector3::UnitZ(),
      Vector3::UnitZ(),
      Vector3(std::sin(kPi / 6), 0, std::cos(kPi / 6)),
      Vector3(std::sin(kPi / 3), 0, std::cos(kPi / 3)),
  };
  const auto corrs = match_correspondences(pts, nrm, index, target, 0.25, kPi / 4);
  ASSERT_EQ(corrs.size(), 2u);
  EXPECT_EQ(corrs[0].source_index, 0u);
  EXPECT_EQ(corrs[1].source_index, 2u);
  EXPECT_NEAR(point_to_plane_residual(corrs[0]), 0.05, 1e-12);
  EXPECT_NEAR(point_to_plane_residual(corrs[1]), -0.01, 1e-12);
}

TEST(Matching, NothingSurvivesThrows) {
  const PointCloud target = plane_cloud(0.01, 20);
  const KdTree index(target.points);
  const std::vector<Vector3> pts = {{0, 0, 5}};
  const std::vector<Vector3> nrm = {Vector3::UnitZ()};
  EXPECT_THROW(match_correspondences(pts, nrm, index, target, 0.25, kPi / 4), MatchingFailure);
}

TEST(Constraints, CoincidentPairsGiveZeroStep) {
  auto corrs = random_correspondences(200, 1);
  for (auto& c : corrs) c.b = c.a;
  const auto sol = solve_point_to_plane(corrs);
  EXPECT_EQ(sol.x, Vector6::Zero());
  EXPECT_EQ(sol.cost_before, 0.0);
}

TEST(Constraints, SinglePlaneHasRankThree) {
  std::vector<Correspondence> corrs;
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j) {
      const Vector3 a(0.01 * i - 0.5, 0.01 * j - 0.5, 0.02);
      corrs.push_back({a, Vector3(a.x(), a.y(), 0.0), Vector3::UnitZ(), corrs.size()});
    }
  }
  const auto an = analyze_constraints(corrs);
  EXPECT_EQ(an.rank, 3);
  ASSERT_EQ(an.null_directions.size(), 3u);
  // Null space is spanned by rotation about z and translation in x, y.
  Eigen::Matrix<double, 6, 3> expected = Eigen::Matrix<double, 6, 3>::Zero();
  expected(2, 0) = expected(3, 1) = expected(4, 2) = 1.0;
  for (const auto& d : an.null_directions) {
    EXPECT_NEAR((expected.transpose() * d).norm(), 1.0, 1e-9);
  }
  EXPECT_THROW(solve_point_to_plane(corrs), DegenerateGeometry);

  const auto est = covariance_resolution(an, RegistrationNoiseModel{}, an.n_pairs);
  EXPECT_FALSE(est.observable);
  EXPECT_EQ(est.infinite_directions.size(), 3u);
  for (const auto& d : est.infinite_directions) EXPECT_LT((est.covariance * d).norm(), 1e-12);
  EXPECT_TRUE(est.covariance.allFinite());
}

TEST(Constraints, MatchesBruteForceSums) {
  const auto corrs = random_correspondences(3001, 2);
  Matrix6 A = Matrix6::Zero();
  Vector6 b = Vector6::Zero();
  for (const auto& c : corrs) {
    Vector6 h;
    h << c.a.cross(c.n), c.n;
    A += h * h.transpose();
    b += h * c.n.dot(c.a - c.b);
  }
  const auto an = analyze_constraints(corrs);
  EXPECT_LT((an.A - A).norm(), 1e-10 * A.norm());
  EXPECT_LT((an.b - b).norm(), 1e-10 * b.norm());
  EXPECT_EQ(an.A, an.A.transpose());
}

TEST(Constraints, WorkerCountDoesNotChangeResult) {
  const auto corrs = random_correspondences(5000, 3);
  const auto one = analyze_constraints(corrs, 1e12, 1);
  const auto four = analyze_constraints(corrs, 1e12, 4);
  EXPECT_EQ(one.A, four.A);
  EXPECT_EQ(one.b, four.b);
}

TEST(Constraints, RowIsLinearizedPointToPlane) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int k = 0; k < 100; ++k) {
    Correspondence c{Vector3(g(rng), g(rng), g(rng)), Vector3(g(rng), g(rng), g(rng)),
                     Vector3(g(rng), g(rng), g(rng)).normalized(), 0};
    Vector6 x;
    for (int i = 0; i < 6; ++i) x(i) = 1e-6 * g(rng);
    const double moved = c.n.dot(exp_so3(x.head<3>()) * c.a + x.tail<3>() - c.b);
    const double linear = (constraint_row(c) * x)(0) + point_to_plane_residual(c);
    EXPECT_NEAR(moved, linear, 1e-10);
    EXPECT_NEAR(c.a.cross(c.n).dot(x.head<3>()), c.n.dot(x.head<3>().cross(c.a)), 1e-15);
  }
}

TEST(Solve, MatchesDenseLeastSquares) {
  const auto corrs = random_correspondences(1000, 5);
  Eigen::MatrixXd H(corrs.size(), 6);
  Eigen::VectorXd y(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    H.row(i) = constraint_row(corrs[i]);
    y(i) = point_to_plane_residual(corrs[i]);
  }
  const Vector6 oracle = H.colPivHouseholderQr().solve(-y);
  const auto sol = solve_point_to_plane(corrs);
  EXPECT_LT((sol.x - oracle).norm(), 1e-9 * std::max(1.0, oracle.norm()));
  // First-order optimality and descent.
  EXPECT_LT((sol.analysis.A * sol.x + sol.analysis.b).norm(), 1e-9);
  EXPECT_LE(sol.cost_after, sol.cost_before);
  EXPECT_NEAR(sol.cost_after, (H * sol.x + y).squaredNorm(), 1e-9);
}

TEST(Register, RecoversOffsetOnNoiselessCorner) {
  const PointCloud target = corner_cloud(0.02);
  const Pose truth = make_pose({0.0, 0.0, 0.3}, {-0.5, -0.4, -0.6});
  const PointCloud source = transform_cloud(corner_cloud(0.02, 0.1, 0.9), truth.inverse());

  const Pose init{truth.R * exp_so3({0.01, -0.015, 0.03}), truth.p + Vector3(0.04, -0.03, 0.02)};
  IcpParams params;
  params.seed = 7;
  const IcpResult r = icp_register(source, target, init, params);
  EXPECT_EQ(r.cost_trace.size(), params.iterations);
  EXPECT_EQ(r.rank(), 6);
  EXPECT_LT((r.x - pose_delta(init, truth)).norm(), 1e-9);
  EXPECT_LT((r.final_pose.R - truth.R).norm(), 1e-9);
  EXPECT_LT((r.final_pose.p - truth.p).norm(), 1e-9);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.cost_trace.back(), 1e-16);
  EXPECT_LT(r.analysis.residual, 1e-16);
  EXPECT_GT(r.n_pairs(), 2000u);
}

TEST(Register, IdentityRecoversZero) {
  const PointCloud target = corner_cloud(0.02);
  const PointCloud source = corner_cloud(0.02, 0.1, 0.9);
  const IcpResult r = icp_register(source, target, Pose{}, IcpParams{});
  EXPECT_LT(r.x.norm(), 1e-12);
}

TEST(Register, SameSeedSameResult) {
  const PointCloud target = corner_cloud(0.02);
  const PointCloud source = corner_cloud(0.03, 0.1, 0.9);
  const Pose init = make_pose({0.02, 0, 0.01}, {0.01, 0.02, 0});
  IcpParams p;
  p.iterations = 3;
  p.n_select = 500;
  const auto a = icp_register(source, target, init, p);
  const auto b = icp_register(source, target, init, p);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.A(), b.A());
}

TEST(Register, PlaneIsDegenerate) {
  const PointCloud target = plane_cloud(0.01, 60);
  const PointCloud source = plane_cloud(0.015, 30);
  try {
    icp_register(source, target, make_pose({0, 0, 0}, {0, 0, 0.02}), IcpParams{});
    FAIL();
  } catch (const DegenerateGeometry& e) {
    EXPECT_EQ(e.analysis.rank, 3);
    EXPECT_EQ(e.iteration, 0u);
  }
}

TEST(Register, FarTargetIsMatchingFailure) {
  const PointCloud target = corner_cloud(0.05);
  const PointCloud source = corner_cloud(0.05, 0.1, 0.9);
  EXPECT_THROW(icp_register(source, target, make_pose({0, 0, 0}, {3, 0, 0}), IcpParams{}),
               MatchingFailure);
}

TEST(Covariance, Scaling) {
  const auto corrs = random_correspondences(2000, 6);
  const auto an = analyze_constraints(corrs);
  const Matrix6 Ainv = an.A.inverse();
  RegistrationNoiseModel m;
  m.delta = 0.01;
  m.n_buckets = 3;
  const auto c1 = covariance_resolution(an, m, 2000);
  EXPECT_TRUE(c1.observable);
  EXPECT_LT((c1.covariance - 1e-4 * (2000.0 / 3.0) * Ainv).norm(), 1e-9 * c1.covariance.norm());
  m.delta = 0.02;
  const auto c2 = covariance_resolution(an, m, 2000);
  EXPECT_LT((c2.covariance - 4.0 * c1.covariance).norm(), 1e-12 * c2.covariance.norm());
  m.n_buckets = 1;
  const auto c3 = covariance_resolution(an, m, 1000);
  EXPECT_LT((c3.covariance - 1.5 * c2.covariance).norm(), 1e-12 * c3.covariance.norm());

  const Matrix6 h = covariance_hessian(an, 0.002);
  EXPECT_LT((h - 4e-6 * Ainv).norm(), 1e-9 * h.norm());
  EXPECT_EQ(h, h.transpose());

  m.delta = 0.0;
  EXPECT_THROW(covariance_resolution(an, m, 10), std::invalid_argument);
}
