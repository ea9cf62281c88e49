#include "flowtrack/velocity_kf.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "flowtrack/errors.hpp"

namespace flowtrack {

void TwistFilterConfig::validate() const {
  if (!(sigma_flow > 0.0)) throw ConfigError("twist filter: sigma_flow must be positive");
  if (max_pixels < 100) throw ConfigError("twist filter: max_pixels must be >= 100");
  if (!(dt > 0.0)) throw ConfigError("twist filter: dt must be positive");
  Eigen::SelfAdjointEigenSolver<Mat3> ev(q_v);
  Eigen::SelfAdjointEigenSolver<Mat3> ew(q_omega);
  if (ev.eigenvalues().minCoeff() < -1e-12 || ew.eigenvalues().minCoeff() < -1e-12) {
    throw ConfigError("twist filter: process noise must be positive semi-definite");
  }
}

namespace velocity_kf {

TwistBelief predict(const TwistBelief& belief, const TwistFilterConfig& cfg) {
  TwistBelief out = belief;
  out.covariance.topLeftCorner<3, 3>() += cfg.q_v;
  out.covariance.bottomRightCorner<3, 3>() += cfg.q_omega;
  return out;
}

std::optional<FlowMeasurement> build_flow_measurement(const FlowField& flow,
                                                      const Mask& prev_mask,
                                                      const DepthMap& prev_depth,
                                                      const CameraIntrinsics& intr,
                                                      const TwistFilterConfig& cfg) {
  if (prev_mask.width() != flow.width || prev_mask.height() != flow.height ||
      prev_depth.width != flow.width || prev_depth.height != flow.height) {
    throw std::invalid_argument("build_flow_measurement: dimension mismatch");
  }

  // Retained pixels: mask pixels (row-major) whose previous-frame depth is valid.
  std::vector<std::array<int, 2>> retained;
  retained.reserve(prev_mask.size());
  for (const auto& px : prev_mask.pixels()) {
    if (prev_depth.valid_at(px[0], px[1])) retained.push_back(px);
  }
  if (retained.empty()) return std::nullopt;

  // Deterministic uniform stride subsampling when over the pixel cap.
  const std::size_t n_all = retained.size();
  const std::size_t cap = static_cast<std::size_t>(cfg.max_pixels);
  std::size_t stride = 1;
  if (n_all > cap) {
    stride = (n_all + cap - 1) / cap;
  }
  std::vector<std::array<int, 2>> used;
  used.reserve(n_all / stride + 1);
  for (std::size_t i = 0; i < n_all; i += stride) used.push_back(retained[i]);

  const int n = static_cast<int>(used.size());
  FlowMeasurement meas;
  meas.pixel_count = n;
  meas.flow.resize(2 * n);
  meas.jacobian.resize(2 * n, 6);
  for (int i = 0; i < n; ++i) {
    const int u = used[i][0];
    const int v = used[i][1];
    const Eigen::Vector2f f = flow.at(u, v);
    meas.flow(2 * i) = f.x();
    meas.flow(2 * i + 1) = f.y();
    meas.jacobian.middleRows<2>(2 * i) =
        flow_jacobian_row(u, v, prev_depth.at(u, v), intr, cfg.dt);
  }
  return meas;
}

TwistBelief update(const TwistBelief& belief, const FlowMeasurement& meas,
                   const TwistFilterConfig& cfg) {
  if (meas.flow.size() != meas.jacobian.rows() || meas.jacobian.cols() != 6) {
    throw std::invalid_argument("velocity update: measurement shape mismatch");
  }
  const double inv_r = 1.0 / (cfg.sigma_flow * cfg.sigma_flow);

  const Eigen::LDLT<Mat6> prior(belief.covariance);
  if (prior.info() != Eigen::Success || !prior.isPositive() ||
      !(prior.vectorD().minCoeff() > 0.0)) {
    throw NumericalError("velocity update: prior covariance not positive-definite");
  }
  const Mat6 prior_info = prior.solve(Mat6::Identity());

  const Mat6 info = prior_info + inv_r * (meas.jacobian.transpose() * meas.jacobian);
  const Vec6 rhs = prior_info * belief.mean.vector() +
                   inv_r * (meas.jacobian.transpose() * meas.flow);

  const Eigen::LDLT<Mat6> post(info);
  if (post.info() != Eigen::Success || !post.isPositive() ||
      !(post.vectorD().minCoeff() > 0.0)) {
    throw NumericalError("velocity update: singular information matrix (degenerate pixel geometry)");
  }
  TwistBelief out;
  out.mean = Twist::from_vector(post.solve(rhs));
  Mat6 cov = post.solve(Mat6::Identity());
  out.covariance = 0.5 * (cov + cov.transpose());
  if (!out.mean.vector().allFinite() || !out.covariance.allFinite()) {
    throw NumericalError("velocity update: non-finite posterior");
  }
  return out;
}

StepResult step(const TwistBelief& belief, const FlowField& flow, const Mask& prev_mask,
                const DepthMap& prev_depth, const CameraIntrinsics& intr,
                const TwistFilterConfig& cfg) {
  StepResult out;
  out.belief = predict(belief, cfg);
  const auto meas = build_flow_measurement(flow, prev_mask, prev_depth, intr, cfg);
  if (meas.has_value()) {
    out.belief = update(out.belief, *meas, cfg);
    out.updated = true;
  }
  out.measured = out.belief.mean;
  return out;
}

}  // namespace velocity_kf
}  // namespace flowtrack
