#pragma once

// Point-to-plane ICP and the covariance of its pose estimate.
//
// Each iteration selects source points by normal-space sampling, matches
// them to their nearest target points, rejects pairs by distance and normal
// angle, and solves the linearized point-to-plane problem A x = -b with
//
//   H_i = [ (a_i x n_i)^T  n_i^T ],  y_i = n_i^T (a_i - b_i),
//   A = sum H_i^T H_i,               b = sum H_i^T y_i.
//
// The linear problem is posed in the body frame of the current iterate, so
// the increment composes on the right: R <- R exp(x_R), p <- p + R x_T.

#include "smloc/liegroup.hpp"
#include "smloc/parallel.hpp"
#include "smloc/pointcloud.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace smloc {

struct Correspondence {
  Vector3 a;  // source point after alignment
  Vector3 b;  // matched target point
  Vector3 n;  // target normal at b
  std::size_t source_index = 0;
};

struct IcpParams {
  std::size_t n_select = 3000;
  std::size_t iterations = 25;
  double max_pair_distance = 0.25;       // m
  double max_normal_angle = kPi / 4.0;   // rad
  std::size_t n_buckets = 3;
  double planarity_max = kDefaultPlanarityMax;
  double max_condition = 1e12;
  double convergence_tol = 1e-8;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

/// Noise scales of the registration error model: resolution error delta,
/// independent noise sigma, and the number of normal-space buckets.
struct RegistrationNoiseModel {
  double delta = 0.01;
  double sigma = 0.01;
  std::size_t n_buckets = 3;

  void validate() const {
    if (!(delta > 0.0) || !(sigma >= 0.0) || n_buckets < 1) {
      throw std::invalid_argument("RegistrationNoiseModel: need delta > 0, sigma >= 0, n_buckets >= 1");
    }
  }
};

/// Constraint matrix of a correspondence set and its spectral diagnostics.
struct ConstraintAnalysis {
  Matrix6 A = Matrix6::Zero();
  Vector6 b = Vector6::Zero();
  double residual = 0.0;  // sum y_i^2
  std::size_t n_pairs = 0;
  int rank = 0;
  double condition = std::numeric_limits<double>::infinity();
  Vector6 eigenvalues = Vector6::Zero();  // ascending
  Matrix6 eigenvectors = Matrix6::Identity();
  /// Orthonormal basis of motions the correspondences do not constrain.
  std::vector<Vector6> null_directions;

  bool full_rank() const { return rank == 6; }
};

/// Matching produced no usable pairs.
class MatchingFailure : public std::runtime_error {
 public:
  MatchingFailure(const std::string& what, std::size_t iteration, std::vector<double> trace)
      : std::runtime_error(what), iteration(iteration), cost_trace(std::move(trace)) {}
  std::size_t iteration;
  std::vector<double> cost_trace;
};

/// The constraint matrix is rank deficient or too ill-conditioned to solve.
class DegenerateGeometry : public std::runtime_error {
 public:
  DegenerateGeometry(const std::string& what, ConstraintAnalysis analysis)
      : std::runtime_error(what), analysis(std::move(analysis)) {}
  ConstraintAnalysis analysis;
  std::size_t iteration = 0;
  std::vector<double> cost_trace;
};

/// H_i for one correspondence.
inline Eigen::Matrix<double, 1, 6> constraint_row(const Correspondence& c) {
  Eigen::Matrix<double, 1, 6> h;
  h.head<3>() = c.a.cross(c.n).transpose();
  h.tail<3>() = c.n.transpose();
  return h;
}

inline double point_to_plane_residual(const Correspondence& c) { return c.n.dot(c.a - c.b); }

inline constexpr std::size_t kAccumulateChunk = 512;

/// Assembles A, b and the spectral diagnostics. Partial sums are formed per
/// fixed-size chunk and reduced in chunk order.
inline ConstraintAnalysis analyze_constraints(std::span<const Correspondence> corrs,
                                              double max_condition = 1e12,
                                              std::size_t workers = 1) {
  const std::size_t chunks = (corrs.size() + kAccumulateChunk - 1) / kAccumulateChunk;
  std::vector<Matrix6> partial_A(chunks, Matrix6::Zero());
  std::vector<Vector6> partial_b(chunks, Vector6::Zero());
  std::vector<double> partial_r(chunks, 0.0);
  for_each_chunk(corrs.size(), kAccumulateChunk, workers,
                 [&](std::size_t c, std::size_t begin, std::size_t end) {
                   Matrix6 A = Matrix6::Zero();
                   Vector6 b = Vector6::Zero();
                   double r = 0.0;
                   for (std::size_t i = begin; i < end; ++i) {
                     const auto h = constraint_row(corrs[i]);
                     const double y = point_to_plane_residual(corrs[i]);
                     A.noalias() += h.transpose() * h;
                     b.noalias() += h.transpose() * y;
                     r += y * y;
                   }
                   partial_A[c] = A;
                   partial_b[c] = b;
                   partial_r[c] = r;
                 });

  ConstraintAnalysis out;
  for (std::size_t c = 0; c < chunks; ++c) {
    out.A += partial_A[c];
    out.b += partial_b[c];
    out.residual += partial_r[c];
  }
  out.A = 0.5 * (out.A + out.A.transpose()).eval();
  out.n_pairs = corrs.size();

  Eigen::SelfAdjointEigenSolver<Matrix6> es(out.A);
  out.eigenvalues = es.eigenvalues();
  out.eigenvectors = es.eigenvectors();
  const double lmax = out.eigenvalues(5);
  const double threshold = lmax / max_condition;
  out.rank = 0;
  for (int i = 0; i < 6; ++i) {
    if (lmax > 0.0 && out.eigenvalues(i) > threshold) {
      ++out.rank;
    } else {
      out.null_directions.push_back(out.eigenvectors.col(i));
    }
  }
  const double lmin = out.eigenvalues(0);
  out.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  return out;
}

/// Nearest-neighbor matching of aligned source points into the target,
/// dropping pairs farther than max_dist or whose normals differ by more
/// than max_angle. Throws MatchingFailure when nothing survives.
inline std::vector<Correspondence> match_correspondences(
    std::span<const Vector3> source_pts, std::span<const Vector3> source_normals,
    const KdTree& target_index, const PointCloud& target, double max_dist, double max_angle,
    std::size_t workers = 1) {
  if (!target.has_normals()) throw std::invalid_argument("match_correspondences: target has no normals");
  if (source_pts.size() != source_normals.size()) {
    throw std::invalid_argument("match_correspondences: points/normals size mismatch");
  }
  const double cos_max = std::cos(max_angle);
  std::vector<Correspondence> slots(source_pts.size());
  std::vector<std::uint8_t> keep(source_pts.size(), 0);
  for_each_chunk(source_pts.size(), kAccumulateChunk, workers,
                 [&](std::size_t, std::size_t begin, std::size_t end) {
                   for (std::size_t i = begin; i < end; ++i) {
                     const auto nb = target_index.nearest(source_pts[i]);
                     if (!(nb.distance <= max_dist)) continue;
                     if (!target.valid_normal(nb.index)) continue;
                     const Vector3& n = target.normals[nb.index];
                     if (source_normals[i].dot(n) < cos_max) continue;
                     slots[i] = {source_pts[i], target.points[nb.index], n, i};
                     keep[i] = 1;
                   }
                 });
  std::vector<Correspondence> out;
  out.reserve(source_pts.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (keep[i]) out.push_back(slots[i]);
  }
  if (out.empty()) throw MatchingFailure("no correspondences survived rejection", 0, {});
  return out;
}

struct PointToPlaneSolution {
  Vector6 x = Vector6::Zero();
  double cost_before = 0.0;  // f(0)
  double cost_after = 0.0;   // f(x) of the linearized cost
  ConstraintAnalysis analysis;
};

/// Linearized cost f(x) = sum (H_i x + y_i)^2 evaluated from A, b.
inline double linearized_cost(const ConstraintAnalysis& an, const Vector6& x) {
  return x.dot(an.A * x) + 2.0 * an.b.dot(x) + an.residual;
}

/// Solves A x = -b by Cholesky. Throws DegenerateGeometry when rank(A) < 6
/// or its condition number exceeds max_condition.
inline PointToPlaneSolution solve_point_to_plane(std::span<const Correspondence> corrs,
                                                 double max_condition = 1e12,
                                                 std::size_t workers = 1) {
  PointToPlaneSolution sol;
  sol.analysis = analyze_constraints(corrs, max_condition, workers);
  const auto& an = sol.analysis;
  if (!an.full_rank() || !(an.condition < max_condition)) {
    throw DegenerateGeometry("constraint matrix rank " + std::to_string(an.rank) +
                                 ", condition " + std::to_string(an.condition),
                             an);
  }
  Eigen::LLT<Matrix6> llt(an.A);
  if (llt.info() != Eigen::Success) {
    throw DegenerateGeometry("constraint matrix not positive definite", an);
  }
  sol.x = llt.solve(-an.b);
  sol.cost_before = an.residual;
  sol.cost_after = linearized_cost(an, sol.x);
  return sol;
}

struct IcpResult {
  /// [x_R; x_T]: final pose relative to the initial pose, in its body frame.
  Vector6 x = Vector6::Zero();
  Pose initial;
  Pose final_pose;
  /// Filled by covariance_resolution (zero until then).
  Matrix6 covariance = Matrix6::Zero();
  /// Final correspondences and constraint matrix, in the initial body frame.
  ConstraintAnalysis analysis;
  std::vector<Correspondence> correspondences;
  std::vector<double> cost_trace;  // f(0) of each iteration
  std::vector<double> step_trace;  // |increment| of each iteration
  bool converged = false;

  const Matrix6& A() const { return analysis.A; }
  int rank() const { return analysis.rank; }
  double condition() const { return analysis.condition; }
  std::size_t n_pairs() const { return analysis.n_pairs; }
};

namespace detail {

inline std::vector<Correspondence> express_in(const std::vector<Correspondence>& world,
                                              const Pose& frame) {
  std::vector<Correspondence> out(world.size());
  const Matrix3 Rt = frame.R.transpose();
  for (std::size_t i = 0; i < world.size(); ++i) {
    out[i].a = Rt * (world[i].a - frame.p);
    out[i].b = Rt * (world[i].b - frame.p);
    out[i].n = Rt * world[i].n;
    out[i].source_index = world[i].source_index;
  }
  return out;
}

}  // namespace detail

/// Registers a body-frame source cloud against a target cloud starting from
/// `init` (the predicted pose). Runs exactly params.iterations iterations.
inline IcpResult icp_register(const PointCloud& source, const PointCloud& target,
                              const KdTree& target_index, const Pose& init,
                              const IcpParams& params) {
  if (!source.has_normals() || !target.has_normals()) {
    throw std::invalid_argument("icp_register: both clouds need normals");
  }
  if (target_index.size() != target.size()) {
    throw std::invalid_argument("icp_register: target index does not match target cloud");
  }
  std::mt19937_64 rng(params.seed);
  IcpResult result;
  result.initial = init;
  Pose current = init;
  std::vector<Correspondence> world_corrs;

  for (std::size_t it = 0; it < params.iterations; ++it) {
    const auto sample =
        normal_space_sample(source, params.n_select, params.n_buckets, params.planarity_max, rng);
    std::vector<Vector3> pts(sample.indices.size());
    std::vector<Vector3> nrm(sample.indices.size());
    for (std::size_t k = 0; k < sample.indices.size(); ++k) {
      pts[k] = current.transform(source.points[sample.indices[k]]);
      nrm[k] = current.R * source.normals[sample.indices[k]];
    }
    try {
      world_corrs = match_correspondences(pts, nrm, target_index, target,
                                          params.max_pair_distance, params.max_normal_angle,
                                          params.workers);
    } catch (const MatchingFailure& e) {
      throw MatchingFailure(std::string(e.what()) + " at iteration " + std::to_string(it), it,
                            result.cost_trace);
    }
    for (auto& c : world_corrs) c.source_index = sample.indices[c.source_index];

    PointToPlaneSolution sol;
    try {
      sol = solve_point_to_plane(detail::express_in(world_corrs, current), params.max_condition,
                                 params.workers);
    } catch (DegenerateGeometry& e) {
      e.iteration = it;
      e.cost_trace = result.cost_trace;
      throw;
    }
    result.cost_trace.push_back(sol.cost_before);
    result.step_trace.push_back(sol.x.norm());

    const Vector3 step_rot = sol.x.head<3>();
    const Vector3 step_trans = sol.x.tail<3>();
    current.p += current.R * step_trans;
    current.R = renormalize_if_drifted(current.R * exp_so3(step_rot));
  }

  result.final_pose = current;
  result.x.head<3>() = log_so3(init.R.transpose() * current.R);
  result.x.tail<3>() = init.R.transpose() * (current.p - init.p);
  result.converged = !result.step_trace.empty() && result.step_trace.back() < params.convergence_tol;

  // Final pairs re-expressed with the source at its final alignment.
  for (auto& c : world_corrs) c.a = current.transform(source.points[c.source_index]);
  result.correspondences = detail::express_in(world_corrs, init);
  result.analysis = analyze_constraints(result.correspondences, params.max_condition, params.workers);
  return result;
}

/// Builds the target index and runs icp_register.
inline IcpResult icp_register(const PointCloud& source, const PointCloud& target,
                              const Pose& init, const IcpParams& params) {
  const KdTree index(target.points);
  return icp_register(source, target, index, init, params);
}

/// Classical covariance sigma^2 A^-1, which assumes independent residuals.
inline Matrix6 covariance_hessian(const ConstraintAnalysis& an, double sigma) {
  if (!an.full_rank()) throw DegenerateGeometry("covariance_hessian: rank-deficient A", an);
  Matrix6 cov = sigma * sigma * an.A.llt().solve(Matrix6::Identity());
  return 0.5 * (cov + cov.transpose());
}

inline Matrix6 covariance_hessian(const IcpResult& result, double sigma) {
  return covariance_hessian(result.analysis, sigma);
}

struct CovarianceEstimate {
  Matrix6 covariance = Matrix6::Zero();
  /// False when some motion is unobservable; the filter must skip the update.
  bool observable = false;
  /// Directions of unbounded variance (empty when observable).
  std::vector<Vector6> infinite_directions;
};

/// Resolution-limited covariance delta^2 (N / N_p) A^-1. For a rank-deficient
/// A, the pseudo-inverse over the observable subspace is returned together
/// with the unobservable directions.
inline CovarianceEstimate covariance_resolution(const ConstraintAnalysis& an,
                                                const RegistrationNoiseModel& model,
                                                std::size_t n) {
  model.validate();
  const double scale = model.delta * model.delta * static_cast<double>(n) /
                       static_cast<double>(model.n_buckets);
  CovarianceEstimate est;
  if (an.full_rank()) {
    est.covariance = scale * an.A.llt().solve(Matrix6::Identity());
    est.observable = true;
  } else {
    for (int i = 0; i < 6; ++i) {
      const Vector6 v = an.eigenvectors.col(i);
      bool null = false;
      for (const auto& d : an.null_directions) null = null || std::abs(d.dot(v)) > 0.5;
      if (!null) est.covariance += (scale / an.eigenvalues(i)) * v * v.transpose();
    }
    est.infinite_directions = an.null_directions;
  }
  est.covariance = 0.5 * (est.covariance + est.covariance.transpose()).eval();
  return est;
}

/// Computes the resolution covariance from the final correspondences and
/// stores it in result.covariance.
inline CovarianceEstimate covariance_resolution(IcpResult& result,
                                                const RegistrationNoiseModel& model) {
  auto est = covariance_resolution(result.analysis, model, result.analysis.n_pairs);
  result.covariance = est.covariance;
  return est;
}

}  // namespace smloc
