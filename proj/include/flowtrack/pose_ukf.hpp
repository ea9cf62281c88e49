#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>

#include "flowtrack/depth_render.hpp"
#include "flowtrack/geometry.hpp"
#include "flowtrack/image.hpp"

namespace flowtrack {

using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Vec13 = Eigen::Matrix<double, 13, 1>;

/// Full filter state: position, linear velocity, orientation, angular
/// velocity, all in the camera frame.
struct PoseState {
  Vec3 t = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  UnitQuaternion q;
  Vec3 omega = Vec3::Zero();

  Pose pose() const { return Pose{t, q}; }
};

/// Gaussian belief with a 12D error-state covariance ordered
/// (dt, dv, dtheta, domega); dtheta is a rotation-vector perturbation applied
/// on the left: q = exp(dtheta) * mean.q.
struct PoseBelief {
  PoseState mean;
  Mat12 covariance = Mat12::Identity();
};

struct PoseFilterConfig {
  Mat6 q_t = [] {
    Mat6 q = Mat6::Zero();
    q.topLeftCorner<3, 3>() = 1e-6 * Mat3::Identity();
    q.bottomRightCorner<3, 3>() = 2.5e-3 * Mat3::Identity();
    return q;
  }();                                        // process noise, (t, v) block, per frame
  Mat3 q_q = 2.25e-2 * Mat3::Identity();      // process noise, omega block, per frame
  Mat3 r_t = 1e-4 * Mat3::Identity();         // pose position noise (m^2)
  Mat3 r_q = 7.62e-3 * Mat3::Identity();      // pose rotation noise (rad^2)
  // Flow-based velocities carry systematic error from imperfect masks, not
  // just noise; weigh them as interpolators between pose fixes.
  Mat3 r_v = 1.6e-3 * Mat3::Identity();       // velocity v_o noise ((m/s)^2)
  Mat3 r_omega = 6.25e-2 * Mat3::Identity();  // angular velocity noise ((rad/s)^2)
  double gamma = 0.01;                        // outlier threshold on e(D) gap (m)
  int pose_delay = 6;                         // nominal N_p, frames
  double dt = 1.0 / 30.0;
  double ukf_alpha = 1.0;
  double ukf_beta = 2.0;
  double ukf_kappa = 0.0;
  int min_depth_overlap = 50;                 // pixels required for e(D)
  bool use_outlier_rejection = true;
  bool use_velocity_updates = true;

  // Seed covariance: large velocity blocks, moderate pose blocks.
  double init_var_t = 1e-4;
  double init_var_v = 0.25;
  double init_var_rot = 7.62e-3;
  double init_var_omega = 4.0;

  void validate() const;
};

/// Measurement map of the filter: [t, q, v_o, omega] with v_o = v + t x omega.
/// Returned as a 13-vector (t, q scalar-first, v_o, omega).
Vec13 predict_measurement(const PoseState& state);

namespace pose_ukf {

/// Constant-velocity prediction through the sigma-point transform; process
/// noise reaches the orientation only through the angular velocity. Throws
/// NumericalError when the covariance is not positive-definite.
PoseBelief predict(const PoseBelief& belief, const PoseFilterConfig& cfg);

/// UKF correction using only the (v_o, omega) measurement rows.
PoseBelief update_velocity(const PoseBelief& belief, const Twist& measured,
                           const PoseFilterConfig& cfg);

/// Full correction with pose and velocity rows; the quaternion residual is
/// the rotation vector of q_meas * q_pred^-1.
PoseBelief update_pose_velocity(const PoseBelief& belief, const Pose& pose,
                                const Twist& velocity, const PoseFilterConfig& cfg);

/// Correction using only the (t, q) rows (velocity stream disabled).
PoseBelief update_pose_only(const PoseBelief& belief, const Pose& pose,
                            const PoseFilterConfig& cfg);

}  // namespace pose_ukf

/// Outcome of a delayed pose measurement.
enum class PoseOutcome {
  kAccepted,         // pose fused
  kRejectedOutlier,  // pose discarded, velocity-only branch kept
  kDropped,          // delay exceeded the history capacity; nothing applied
};

/// Per-frame record enabling rewind-replay of delayed pose measurements.
/// The stored belief is the post-prediction, pre-update snapshot: rewinding
/// and re-fusing this frame's velocity reproduces the filter output exactly,
/// so a delayed pose fused here is equivalent to one fused inline and a
/// rejected pose leaves no trace.
struct HistoryRecord {
  std::int64_t frame = 0;
  PoseBelief rewind_belief;  // belief before this frame's measurement updates
  Twist velocity;            // velocity measurement fused at this frame
  bool has_velocity = false;
  std::shared_ptr<const DepthMap> depth;  // measured depth for outlier checks
};

/// Pose-velocity tracking filter with delayed-measurement synchronization:
/// velocity measurements are fused every frame; a pose measurement for a past
/// frame rewinds to the stored belief, applies a dual-candidate outlier test
/// backed by depth rendering, and replays the buffered velocity updates.
class PoseUkf {
 public:
  /// mesh may be null when outlier rejection is disabled. history_capacity
  /// should be at least max(N_s, N_p) + 2.
  PoseUkf(const PoseFilterConfig& cfg, std::size_t history_capacity,
          std::shared_ptr<const TriangleMesh> mesh, const CameraIntrinsics& intr);

  bool initialized() const { return initialized_; }
  const PoseBelief& belief() const { return belief_; }
  std::int64_t current_frame() const { return frame_; }

  /// Seeds the state from the first pose measurement: v = omega = 0 and the
  /// configured seed covariance. Records the seed frame in the history.
  void initialize(const Pose& seed, std::int64_t frame, const Twist& velocity,
                  std::shared_ptr<const DepthMap> depth);

  /// Per-frame step at `frame` (must be current_frame() + 1): predict, fuse
  /// the velocity measurement, and record the result in the history buffer.
  const PoseBelief& step(const Twist& velocity, std::int64_t frame,
                         std::shared_ptr<const DepthMap> depth);

  /// Fuses a pose measurement taken at origin_frame (<= current_frame()):
  /// rewinds to the stored belief, evaluates the pose-and-velocity update
  /// against the velocity-only update by rendering both candidate depths
  /// against the measured depth at origin_frame, keeps the winner, and
  /// replays the buffered velocity updates up to the current frame.
  PoseOutcome on_pose_measurement(const Pose& measured, std::int64_t origin_frame);

  const std::deque<HistoryRecord>& history() const { return history_; }

  /// Accumulated wall-clock time spent in outlier-rejection depth renders.
  double render_seconds() const { return render_seconds_; }

 private:
  HistoryRecord* find_record(std::int64_t frame);
  void push_record(HistoryRecord rec);

  PoseFilterConfig cfg_;
  std::size_t capacity_;
  std::shared_ptr<const TriangleMesh> mesh_;
  CameraIntrinsics intr_;
  PoseBelief belief_;
  std::deque<HistoryRecord> history_;
  std::int64_t frame_ = 0;
  bool initialized_ = false;
  double render_seconds_ = 0.0;
};

}  // namespace flowtrack
