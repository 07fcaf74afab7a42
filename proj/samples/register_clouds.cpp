// Registers a simulated scan against a simulated map from a perturbed
// initial pose and prints the correction with its covariance.
//
//   register_clouds [seed]

#include "smloc/smloc.hpp"

#include <iostream>
#include <string>

int main(int argc, char** argv) {
  using namespace smloc;
  SimConfig cfg;
  cfg.seed = argc > 1 ? std::stoull(argv[1]) : 1;
  const Environment env = make_environment(cfg);
  const PointCloud map = build_map(cfg, env);

  const Pose truth = trajectory_pose(cfg.trajectory, 2.0);
  PointCloud scan = simulate_depth_scan(truth, env, cfg.camera, cfg.noise, derive_seed(cfg.seed, stream::scan, 2));
  scan = estimate_normals(std::move(scan));

  const Pose predicted{truth.R * rot_z(0.02), truth.p + Vector3(0.04, -0.03, 0.0)};
  IcpResult r = icp_register(scan, map, predicted, IcpParams{});
  const auto cov = covariance_resolution(r, RegistrationNoiseModel{});

  const Pose expected_x = predicted.inverse() * truth;
  std::cout << "pairs " << r.n_pairs() << ", rank " << r.rank() << ", condition " << r.condition() << "\n";
  std::cout << "x_icp      " << r.x.transpose() << "\n";
  std::cout << "true x     " << log_so3(expected_x.R).transpose() << ' ' << expected_x.p.transpose() << "\n";
  std::cout << "std (resol.) " << cov.covariance.diagonal().cwiseSqrt().transpose() << "\n";
  std::cout << "std (hess.)  " << covariance_hessian(r, 0.002).diagonal().cwiseSqrt().transpose() << "\n";
}
