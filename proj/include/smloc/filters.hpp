#pragma once

// Invariant EKF and multiplicative EKF on the pose (R, p), driven by body
// velocities and corrected by scan-matching pose measurements.
//
// Both filters share the pose integration R <- R exp(w dt), p <- p + R mu dt
// and an Euler step of the covariance ODE  P' = A P + P A^T + Q_eff.
//
//   IEKF:  A = [ -S(w)  0 ; -S(mu)  -S(w) ],   Q_eff = Q,   C = -I
//   MEKF:  A = [ -S(w)  0 ; -R S(mu)    0 ],   Q_eff = G Q G^T,  G = diag(I, R),  C = I
//
// Error states are ordered [attitude; position]. The IEKF error lives in the
// body frame and the MEKF position error in the world frame.

#include "smloc/liegroup.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <stdexcept>
#include <string>
#include <string_view>

namespace smloc {

enum class FilterKind { IEKF, MEKF };

inline std::string_view to_string(FilterKind k) { return k == FilterKind::IEKF ? "IEKF" : "MEKF"; }

inline FilterKind parse_filter_kind(std::string_view s) {
  if (s == "iekf" || s == "IEKF") return FilterKind::IEKF;
  if (s == "mekf" || s == "MEKF") return FilterKind::MEKF;
  throw std::invalid_argument("unknown filter kind '" + std::string(s) + "'");
}

struct BodyVelocity {
  Vector3 omega = Vector3::Zero();  // rad/s
  Vector3 mu = Vector3::Zero();     // m/s
};

struct FilterState {
  Pose pose;
  Matrix6 P = Matrix6::Identity() * 1e-4;
  double t = 0.0;
};

/// Scan-matching output expressed at the predicted pose: the true pose is
/// approximately (R exp(x_R), p + R x_T).
struct PoseMeasurement {
  Vector6 x_icp = Vector6::Zero();
  Matrix6 R_nu = Matrix6::Identity();
  bool valid = true;
};

enum class OutlierGate { off, flag, reject };

inline constexpr double kChiSquare6_0999 = 22.457744484825323;
inline constexpr double kNegativeEigenTolerance = 1e-9;

struct UpdateInfo {
  bool skipped = false;
  bool outlier = false;
  bool applied = false;
  double mahalanobis = 0.0;
  Matrix6 K = Matrix6::Zero();
  Vector6 innovation = Vector6::Zero();
  Vector6 correction = Vector6::Zero();
};

inline Matrix6 block_diag(const Matrix3& a, const Matrix3& b) {
  Matrix6 m = Matrix6::Zero();
  m.topLeftCorner<3, 3>() = a;
  m.bottomRightCorner<3, 3>() = b;
  return m;
}

inline Matrix6 system_matrix(FilterKind kind, const BodyVelocity& u, const Matrix3& R_hat) {
  Matrix6 A = Matrix6::Zero();
  A.topLeftCorner<3, 3>() = -skew(u.omega);
  if (kind == FilterKind::IEKF) {
    A.bottomLeftCorner<3, 3>() = -skew(u.mu);
    A.bottomRightCorner<3, 3>() = -skew(u.omega);
  } else {
    A.bottomLeftCorner<3, 3>() = -R_hat * skew(u.mu);
  }
  return A;
}

/// Input noise covariance Q = cov[nu_w; nu_mu] mapped into the error state.
inline Matrix6 effective_process_noise(FilterKind kind, const Matrix6& Q, const Matrix3& R_hat) {
  if (kind == FilterKind::IEKF) return Q;
  const Matrix6 G = block_diag(Matrix3::Identity(), R_hat);
  return G * Q * G.transpose();
}

inline Matrix6 output_matrix(FilterKind kind) {
  return kind == FilterKind::IEKF ? Matrix6(-Matrix6::Identity()) : Matrix6(Matrix6::Identity());
}

inline Matrix6 symmetrize(const Matrix6& P) { return 0.5 * (P + P.transpose()); }

inline double min_eigenvalue(const Matrix6& P) {
  return Eigen::SelfAdjointEigenSolver<Matrix6>(symmetrize(P), Eigen::EigenvaluesOnly)
      .eigenvalues()(0);
}

/// Throws std::runtime_error when P has an eigenvalue below -1e-9.
inline void check_covariance(const Matrix6& P, std::string_view where) {
  if (!P.allFinite()) throw std::runtime_error(std::string(where) + ": covariance not finite");
  const double lmin = min_eigenvalue(P);
  if (lmin < -kNegativeEigenTolerance) {
    throw std::runtime_error(std::string(where) + ": covariance lost positive semidefiniteness "
                             "(min eigenvalue " + std::to_string(lmin) + ")");
  }
}

inline FilterState predict(const FilterState& s, const BodyVelocity& u, const Matrix6& Q, double dt,
                           FilterKind kind) {
  if (!(dt > 0.0)) throw std::invalid_argument("predict: dt must be positive");
  const Matrix6 A = system_matrix(kind, u, s.pose.R);
  const Matrix6 Qe = effective_process_noise(kind, Q, s.pose.R);
  FilterState out;
  out.t = s.t + dt;
  out.pose.R = renormalize_if_drifted(s.pose.R * exp_so3(u.omega * dt));
  out.pose.p = s.pose.p + s.pose.R * (u.mu * dt);
  out.P = symmetrize(s.P + (A * s.P + s.P * A.transpose() + Qe) * dt);
  check_covariance(out.P, "predict");
  return out;
}

namespace detail {

/// Shared discrete Kalman step: gain for output matrix C and noise Rn,
/// gating on the innovation and returning the correction delta = K e.
inline bool kalman_step(const Matrix6& P, const Matrix6& C, const Matrix6& Rn, const Vector6& e,
                        OutlierGate gate, bool joseph, UpdateInfo& info, Matrix6& P_out) {
  const Matrix6 S = symmetrize(C * P * C.transpose() + Rn);
  Eigen::LLT<Matrix6> llt(S);
  if (llt.info() != Eigen::Success) throw std::runtime_error("update: innovation covariance not positive definite");
  // Innovation of the equivalent standard filter is -e for C = -I and e for C = I;
  // the Mahalanobis distance does not depend on the sign.
  info.innovation = e;
  info.mahalanobis = e.dot(llt.solve(e));
  info.outlier = info.mahalanobis > kChiSquare6_0999;
  if (info.outlier && gate == OutlierGate::reject) {
    info.skipped = true;
    return false;
  }
  const Matrix6 K = llt.solve(C * P).transpose();  // P C^T S^-1, S symmetric
  info.K = K;
  info.correction = K * e;
  const Matrix6 IKC = Matrix6::Identity() - K * C;
  if (joseph) {
    P_out = symmetrize(IKC * P * IKC.transpose() + K * Rn * K.transpose());
  } else {
    P_out = symmetrize(IKC * P);
  }
  info.applied = true;
  return true;
}

}  // namespace detail

struct UpdateOptions {
  OutlierGate gate = OutlierGate::flag;
  bool joseph = false;
};

/// Invariant output error E = [E_R; E_p] for a measurement given at the
/// predicted pose: y_R = R exp(x_R), y_p = p + R x_T.
inline Vector6 invariant_output_error(const Vector6& x_icp) {
  const Matrix3 RtY = exp_so3(x_icp.head<3>());
  Vector6 E;
  E.head<3>() = -unskew(project_pi(RtY));
  E.tail<3>() = -x_icp.tail<3>();
  return E;
}

inline FilterState iekf_update(const FilterState& s, const PoseMeasurement& m,
                               const UpdateOptions& opt = {}, UpdateInfo* info_out = nullptr) {
  UpdateInfo info;
  if (!m.valid) {
    info.skipped = true;
    if (info_out) *info_out = info;
    return s;
  }
  const Vector6 E = invariant_output_error(m.x_icp);
  FilterState out = s;
  if (detail::kalman_step(s.P, output_matrix(FilterKind::IEKF), m.R_nu, E, opt.gate, opt.joseph,
                          info, out.P)) {
    const Vector6& d = info.correction;
    out.pose.p = s.pose.p + s.pose.R * d.tail<3>();
    out.pose.R = renormalize_if_drifted(s.pose.R * exp_so3(d.head<3>()));
    check_covariance(out.P, "iekf_update");
  }
  if (info_out) *info_out = info;
  return out;
}

inline FilterState mekf_update(const FilterState& s, const PoseMeasurement& m,
                               const UpdateOptions& opt = {}, UpdateInfo* info_out = nullptr) {
  UpdateInfo info;
  if (!m.valid) {
    info.skipped = true;
    if (info_out) *info_out = info;
    return s;
  }
  const Matrix3& Rh = s.pose.R;
  Vector6 dy;
  dy.head<3>() = unskew(project_pi(exp_so3(m.x_icp.head<3>())));
  dy.tail<3>() = Rh * m.x_icp.tail<3>();
  const Matrix6 G = block_diag(Matrix3::Identity(), Rh);
  const Matrix6 Rn = symmetrize(G * m.R_nu * G.transpose());
  FilterState out = s;
  if (detail::kalman_step(s.P, output_matrix(FilterKind::MEKF), Rn, dy, opt.gate, opt.joseph, info,
                          out.P)) {
    const Vector6& d = info.correction;
    out.pose.p = s.pose.p + d.tail<3>();
    out.pose.R = renormalize_if_drifted(Rh * exp_so3(d.head<3>()));
    check_covariance(out.P, "mekf_update");
  }
  if (info_out) *info_out = info;
  return out;
}

inline FilterState update(FilterKind kind, const FilterState& s, const PoseMeasurement& m,
                          const UpdateOptions& opt = {}, UpdateInfo* info = nullptr) {
  return kind == FilterKind::IEKF ? iekf_update(s, m, opt, info) : mekf_update(s, m, opt, info);
}

/// Gain blocks of the invariant observer, K = [L_RR L_pR; L_Rp L_pp].
struct ObserverGains {
  Matrix6 K = Matrix6::Zero();
  Matrix3 L_RR() const { return K.topLeftCorner<3, 3>(); }
  Matrix3 L_pR() const { return K.topRightCorner<3, 3>(); }
  Matrix3 L_Rp() const { return K.bottomLeftCorner<3, 3>(); }
  Matrix3 L_pp() const { return K.bottomRightCorner<3, 3>(); }
};

struct ErrorRates {
  Matrix3 eta_R_dot;
  Vector3 eta_p_dot;
};

/// Right-hand side of the invariant error flow for eta_R = R^T R_hat and
/// eta_p = R^T (p_hat - p), with noiseless outputs.
inline ErrorRates invariant_error_dynamics(const Matrix3& eta_R, const Vector3& eta_p,
                                           const Vector3& omega, const Vector3& mu,
                                           const ObserverGains& gains) {
  const Vector3 E_R = unskew(project_pi(eta_R));
  const Vector3 E_p = eta_R.transpose() * eta_p;
  const Vector3 corr_R = gains.L_RR() * E_R + gains.L_pR() * E_p;
  const Vector3 corr_p = gains.L_Rp() * E_R + gains.L_pp() * E_p;
  ErrorRates r;
  r.eta_R_dot = -skew(omega) * eta_R + eta_R * skew(omega) + eta_R * skew(corr_R);
  r.eta_p_dot = -skew(omega) * eta_p + eta_R * mu - mu + eta_R * corr_p;
  return r;
}

}  // namespace smloc
