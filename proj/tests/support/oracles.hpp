#pragma once

// Independent oracles used to derive and freeze expected values. Everything
// here recomputes results from first principles and must stay decoupled from
// the implementation paths it checks.

#include <Eigen/Dense>
#include <random>

#include "flowtrack/geometry.hpp"
#include "flowtrack/pose_ukf.hpp"
#include "flowtrack/velocity_kf.hpp"

namespace flowtrack::testing {

/// Centered finite difference of the projected pixel motion under a small
/// rigid displacement; divided by 2*eps and scaled by dt it approximates the
/// flow the jacobian row predicts.
inline Vec2 finite_difference_flow(double u, double v, double d,
                                   const CameraIntrinsics& intr, double dt,
                                   const Twist& twist, double eps = 1e-6) {
  const Vec3 p = backproject(u, v, d, intr);
  const Pose forward = twist_step(twist, eps);
  const Pose backward = twist_step(twist, -eps);
  const Vec2 plus = project(transform_point(forward, p), intr);
  const Vec2 minus = project(transform_point(backward, p), intr);
  return (plus - minus) / (2.0 * eps) * dt;
}

/// Textbook covariance-form Kalman update with the full 2n x 2n innovation
/// system; the O(n) information-form implementation must match it.
inline TwistBelief covariance_form_update(const TwistBelief& belief,
                                          const FlowMeasurement& meas, double sigma_flow) {
  const Eigen::MatrixXd& jac = meas.jacobian;
  const Eigen::MatrixXd innovation_cov =
      jac * belief.covariance * jac.transpose() +
      sigma_flow * sigma_flow *
          Eigen::MatrixXd::Identity(jac.rows(), jac.rows());
  const Eigen::MatrixXd gain =
      belief.covariance * jac.transpose() * innovation_cov.inverse();
  TwistBelief out;
  out.mean = Twist::from_vector(belief.mean.vector() +
                                gain * (meas.flow - jac * belief.mean.vector()));
  const Mat6 identity_minus = Mat6::Identity() - gain * jac;
  // Joseph form for numerical symmetry.
  Mat6 cov = identity_minus * belief.covariance * identity_minus.transpose() +
             sigma_flow * sigma_flow * gain * gain.transpose();
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

/// EKF update of the pose-velocity belief linearized at the mean, using the
/// same error-state convention (dt, dv, dtheta, domega) and measurement
/// residual layout (dt, dq, dv_o, domega) as the filter under test.
inline PoseBelief ekf_update_pose_velocity(const PoseBelief& belief, const Pose& pose_meas,
                                           const Twist& vel_meas,
                                           const PoseFilterConfig& cfg) {
  const PoseState& s = belief.mean;
  Eigen::Matrix<double, 12, 12> h = Eigen::Matrix<double, 12, 12>::Zero();
  h.block<3, 3>(0, 0) = Mat3::Identity();            // t rows
  h.block<3, 3>(3, 6) = Mat3::Identity();            // q rows (rotation vector)
  h.block<3, 3>(6, 0) = -skew(s.omega);              // v_o rows wrt t
  h.block<3, 3>(6, 3) = Mat3::Identity();            // v_o rows wrt v
  h.block<3, 3>(6, 9) = skew(s.t);                   // v_o rows wrt omega
  h.block<3, 3>(9, 9) = Mat3::Identity();            // omega rows

  Eigen::Matrix<double, 12, 12> noise = Eigen::Matrix<double, 12, 12>::Zero();
  noise.block<3, 3>(0, 0) = cfg.r_t;
  noise.block<3, 3>(3, 3) = cfg.r_q;
  noise.block<3, 3>(6, 6) = cfg.r_v;
  noise.block<3, 3>(9, 9) = cfg.r_omega;

  Eigen::Matrix<double, 12, 1> innovation;
  innovation.segment<3>(0) = pose_meas.t - s.t;
  innovation.segment<3>(3) = (pose_meas.q * s.q.conjugate()).to_rotation_vector();
  innovation.segment<3>(6) = vel_meas.v_o - (s.v + s.t.cross(s.omega));
  innovation.segment<3>(9) = vel_meas.omega - s.omega;

  const Eigen::Matrix<double, 12, 12> innovation_cov =
      h * belief.covariance * h.transpose() + noise;
  const Eigen::Matrix<double, 12, 12> gain =
      belief.covariance * h.transpose() * innovation_cov.inverse();
  const Eigen::Matrix<double, 12, 1> delta = gain * innovation;

  PoseBelief out;
  out.mean.t = s.t + delta.segment<3>(0);
  out.mean.v = s.v + delta.segment<3>(3);
  out.mean.q = UnitQuaternion::from_rotation_vector(delta.segment<3>(6)) * s.q;
  out.mean.omega = s.omega + delta.segment<3>(9);
  Mat12 cov = belief.covariance - gain * innovation_cov * gain.transpose();
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

/// Random rotation, uniform by quaternion sampling.
inline UnitQuaternion random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  return UnitQuaternion(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
}

inline Vec3 random_vector(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> gauss(0.0, scale);
  return Vec3(gauss(rng), gauss(rng), gauss(rng));
}

/// Random symmetric positive-definite matrix with eigenvalues in
/// [floor, floor + spread].
template <int N>
Eigen::Matrix<double, N, N> random_spd(std::mt19937_64& rng, double floor = 0.1,
                                       double spread = 1.0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Matrix<double, N, N> a;
  for (int r = 0; r < N; ++r)
    for (int c = 0; c < N; ++c) a(r, c) = gauss(rng);
  Eigen::HouseholderQR<Eigen::Matrix<double, N, N>> qr(a);
  const Eigen::Matrix<double, N, N> q = qr.householderQ();
  std::uniform_real_distribution<double> eig(floor, floor + spread);
  Eigen::Matrix<double, N, N> d = Eigen::Matrix<double, N, N>::Zero();
  for (int i = 0; i < N; ++i) d(i, i) = eig(rng);
  return q * d * q.transpose();
}

}  // namespace flowtrack::testing
