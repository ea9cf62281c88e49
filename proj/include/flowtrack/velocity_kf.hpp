#pragma once

#include <optional>

#include "flowtrack/geometry.hpp"
#include "flowtrack/image.hpp"

namespace flowtrack {

/// Gaussian belief over the object twist.
struct TwistBelief {
  Twist mean;
  Mat6 covariance = Mat6::Identity();
};

struct TwistFilterConfig {
  Mat3 q_v = 2.5e-3 * Mat3::Identity();      // per-frame linear velocity process noise
  Mat3 q_omega = 2.25e-2 * Mat3::Identity(); // per-frame angular velocity process noise
  double sigma_flow = 1.0;                   // flow noise std-dev, pixels
  int max_pixels = 3000;                     // measurement subsampling cap
  double dt = 1.0 / 30.0;                    // frame period, seconds

  void validate() const;
};

/// Stacked flow measurement: 2n flow components and the 2n x 6 jacobian.
struct FlowMeasurement {
  Eigen::VectorXd flow;
  Eigen::MatrixXd jacobian;
  int pixel_count = 0;
};

namespace velocity_kf {

/// Random-walk prediction: mean unchanged, covariance grows by diag(Q_v, Q_w).
TwistBelief predict(const TwistBelief& belief, const TwistFilterConfig& cfg);

/// Stacks one (flow, jacobian-row) pair per mask pixel with valid depth; the
/// mask and depth belong to the previous frame, the flow to the current one.
/// Pixels beyond cfg.max_pixels are thinned with a deterministic uniform
/// stride. Returns nullopt when no pixel survives (callers skip the update).
std::optional<FlowMeasurement> build_flow_measurement(const FlowField& flow,
                                                      const Mask& prev_mask,
                                                      const DepthMap& prev_depth,
                                                      const CameraIntrinsics& intr,
                                                      const TwistFilterConfig& cfg);

/// Measurement update in information form: only 6x6 systems are solved no
/// matter how many pixels are stacked. Throws NumericalError when the
/// information matrix is singular (degenerate pixel geometry).
TwistBelief update(const TwistBelief& belief, const FlowMeasurement& meas,
                   const TwistFilterConfig& cfg);

struct StepResult {
  TwistBelief belief;
  Twist measured;  // posterior mean, emitted every frame for the pose filter
  bool updated = false;
};

/// predict + update (update skipped when no pixel yields a measurement).
StepResult step(const TwistBelief& belief, const FlowField& flow, const Mask& prev_mask,
                const DepthMap& prev_depth, const CameraIntrinsics& intr,
                const TwistFilterConfig& cfg);

}  // namespace velocity_kf

}  // namespace flowtrack
