#include "flowtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flowtrack {

namespace {
constexpr double kRadToDeg = 180.0 / M_PI;

double rms(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double sum = 0.0;
  for (double x : xs) sum += x * x;
  return std::sqrt(sum / static_cast<double>(xs.size()));
}
}  // namespace

double add_error(const Pose& est, const Pose& gt, const std::vector<Vec3>& model_points) {
  if (model_points.empty()) {
    throw std::invalid_argument("add_error: empty model point set");
  }
  double sum = 0.0;
  for (const Vec3& p : model_points) {
    sum += (transform_point(est, p) - transform_point(gt, p)).norm();
  }
  return sum / static_cast<double>(model_points.size());
}

double add_auc(const std::vector<double>& errors, double threshold_max) {
  if (errors.empty()) {
    throw std::invalid_argument("add_auc: empty error list");
  }
  if (!(threshold_max > 0.0)) {
    throw std::invalid_argument("add_auc: threshold must be positive");
  }
  // Area under the step accuracy curve: each error e contributes the measure
  // of thresholds in (e, threshold_max] for which it counts as correct.
  double area = 0.0;
  for (double e : errors) {
    area += std::max(0.0, threshold_max - e);
  }
  return 100.0 * area / (threshold_max * static_cast<double>(errors.size()));
}

TraceRmse rmse_traces(const std::vector<Pose>& est_poses, const std::vector<Pose>& gt_poses,
                      const std::vector<Twist>& est_twists,
                      const std::vector<Twist>& gt_twists) {
  if (est_poses.size() != gt_poses.size()) {
    throw std::invalid_argument("rmse_traces: pose stream length mismatch");
  }
  if (est_twists.size() != gt_twists.size()) {
    throw std::invalid_argument("rmse_traces: twist stream length mismatch");
  }
  TraceRmse out;
  std::vector<double> t_err, a_err;
  t_err.reserve(est_poses.size());
  a_err.reserve(est_poses.size());
  for (std::size_t i = 0; i < est_poses.size(); ++i) {
    t_err.push_back((est_poses[i].t - gt_poses[i].t).norm());
    a_err.push_back(geodesic_angle(est_poses[i].q, gt_poses[i].q));
  }
  out.e_t_cm = rms(t_err) * 100.0;
  out.e_a_deg = rms(a_err) * kRadToDeg;

  if (!est_twists.empty()) {
    std::vector<double> v_err, w_err;
    v_err.reserve(est_twists.size());
    w_err.reserve(est_twists.size());
    for (std::size_t i = 0; i < est_twists.size(); ++i) {
      v_err.push_back((est_twists[i].v_o - gt_twists[i].v_o).norm());
      w_err.push_back((est_twists[i].omega - gt_twists[i].omega).norm());
    }
    out.e_v_cm_s = rms(v_err) * 100.0;
    out.e_omega_deg_s = rms(w_err) * kRadToDeg;
    out.has_velocity = true;
  }
  return out;
}

EvalReport evaluate_traces(const std::vector<Pose>& est_poses,
                           const std::vector<Pose>& gt_poses,
                           const std::vector<Vec3>& model_points,
                           const std::vector<Twist>& est_twists,
                           const std::vector<Twist>& gt_twists, double add_threshold) {
  EvalReport report;
  report.rmse = rmse_traces(est_poses, gt_poses, est_twists, gt_twists);
  report.frames = static_cast<int>(est_poses.size());
  report.add_errors.reserve(est_poses.size());
  report.t_errors.reserve(est_poses.size());
  report.rot_errors.reserve(est_poses.size());
  for (std::size_t i = 0; i < est_poses.size(); ++i) {
    report.add_errors.push_back(add_error(est_poses[i], gt_poses[i], model_points));
    report.t_errors.push_back((est_poses[i].t - gt_poses[i].t).norm());
    report.rot_errors.push_back(geodesic_angle(est_poses[i].q, gt_poses[i].q));
  }
  report.add_auc_percent = add_auc(report.add_errors, add_threshold);
  return report;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed;
  os << "frames          " << frames << "\n";
  os << "ADD-AUC [%]     " << add_auc_percent << "\n";
  os << "RMSE e_t [cm]   " << rmse.e_t_cm << "\n";
  os << "RMSE e_a [deg]  " << rmse.e_a_deg << "\n";
  if (rmse.has_velocity) {
    os << "RMSE e_v [cm/s]   " << rmse.e_v_cm_s << "\n";
    os << "RMSE e_w [deg/s]  " << rmse.e_omega_deg_s << "\n";
  }
  return os.str();
}

std::vector<std::optional<Pose>> zero_order_hold(const std::vector<TimedPose>& events,
                                                 std::int64_t n_frames) {
  std::vector<TimedPose> sorted = events;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const TimedPose& a, const TimedPose& b) { return a.available < b.available; });
  std::vector<std::optional<Pose>> out(static_cast<std::size_t>(n_frames));
  std::size_t next = 0;
  std::optional<Pose> held;
  for (std::int64_t k = 0; k < n_frames; ++k) {
    while (next < sorted.size() && sorted[next].available <= k) {
      held = sorted[next].pose;
      ++next;
    }
    out[static_cast<std::size_t>(k)] = held;
  }
  return out;
}

}  // namespace flowtrack
