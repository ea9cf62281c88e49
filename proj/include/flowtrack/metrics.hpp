#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowtrack/geometry.hpp"

namespace flowtrack {

/// Mean distance between the model points transformed by the estimated and by
/// the ground-truth pose, in meters. Throws std::invalid_argument on an empty
/// point set.
double add_error(const Pose& est, const Pose& gt, const std::vector<Vec3>& model_points);

/// Area under the accuracy-vs-threshold curve over [0, threshold_max],
/// in percent. Errors above threshold_max contribute nothing.
double add_auc(const std::vector<double>& errors, double threshold_max = 0.1);

struct TraceRmse {
  double e_t_cm = 0.0;       // RMSE of |t_est - t_gt|, centimeters
  double e_a_deg = 0.0;      // RMSE of the geodesic angle, degrees
  double e_v_cm_s = 0.0;     // RMSE of |v_o est - gt|, cm/s (when twists given)
  double e_omega_deg_s = 0.0;  // RMSE of |omega est - gt|, deg/s
  bool has_velocity = false;
};

/// RMSE errors of aligned pose (and optionally twist) traces. Streams must
/// have equal lengths; pass empty twist vectors to skip velocity errors.
TraceRmse rmse_traces(const std::vector<Pose>& est_poses, const std::vector<Pose>& gt_poses,
                      const std::vector<Twist>& est_twists = {},
                      const std::vector<Twist>& gt_twists = {});

/// Full evaluation summary.
struct EvalReport {
  double add_auc_percent = 0.0;
  TraceRmse rmse;
  std::vector<double> add_errors;    // per frame, meters
  std::vector<double> t_errors;      // per frame, meters
  std::vector<double> rot_errors;    // per frame, radians
  int frames = 0;

  std::string table() const;  // human-readable summary
};

EvalReport evaluate_traces(const std::vector<Pose>& est_poses,
                           const std::vector<Pose>& gt_poses,
                           const std::vector<Vec3>& model_points,
                           const std::vector<Twist>& est_twists = {},
                           const std::vector<Twist>& gt_twists = {},
                           double add_threshold = 0.1);

/// Zero-order-hold resampling of a sparse, possibly delayed pose stream onto
/// the frame clock: at frame k the estimate is the payload of the latest
/// event with availability <= k. Frames before the first event are absent.
struct TimedPose {
  std::int64_t available = 0;
  Pose pose;
};
std::vector<std::optional<Pose>> zero_order_hold(const std::vector<TimedPose>& events,
                                                 std::int64_t n_frames);

}  // namespace flowtrack
