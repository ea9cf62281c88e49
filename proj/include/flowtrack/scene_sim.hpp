#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "flowtrack/depth_render.hpp"
#include "flowtrack/geometry.hpp"
#include "flowtrack/image.hpp"

namespace flowtrack {

/// Piecewise-constant-twist trajectory: each segment applies its camera-frame
/// twist for `duration` seconds starting from the previous segment's end.
struct TrajectorySegment {
  double duration = 0.0;  // seconds, > 0
  Twist twist;
};

struct TrajectorySpec {
  Pose initial_pose;
  std::vector<TrajectorySegment> segments;

  void validate() const;
  /// Twist active at time t (last segment extends past the spec duration).
  const Twist& twist_at(double t) const;
};

/// Degradations applied to the emitted measurement streams. Delays are in
/// frames; the ground-truth streams are never corrupted.
struct CorruptionSpec {
  int mask_delay = 6;          // N_s
  int pose_delay = 6;          // N_p
  double pose_noise_t = 0.0;   // std-dev, meters
  double pose_noise_rot = 0.0; // std-dev, radians
  double outlier_rate = 0.0;   // probability per pose (the seed pose is exempt)
  double outlier_t = 0.20;     // outlier offset magnitude, meters
  double outlier_rot = 0.7853981633974483;  // outlier rotation magnitude, radians
  double flow_noise = 0.0;     // std-dev, pixels, per component
  double depth_noise = 0.0;    // std-dev, meters
  double mask_miss_rate = 0.0; // probability a scheduled mask is never produced
  bool zero_occluded_flow = false;  // emulate flow failure on self-occluded pixels

  void validate() const;
};

struct MaskEvent {
  std::int64_t available = 0;  // frame at which the mask becomes available
  std::int64_t origin = 0;     // frame the mask was computed on
  Mask mask;
};

struct PoseEvent {
  std::int64_t available = 0;
  std::int64_t origin = 0;
  Pose pose;
  bool outlier = false;
};

/// One simulated frame: exact ground truth plus the measurement events that
/// become available at this frame.
struct SimFrame {
  std::int64_t frame = 0;
  Pose pose;    // ground truth
  Twist twist;  // ground truth, motion over (frame-1, frame]
  DepthMap depth;       // measured depth (noisy when configured)
  FlowField flow;       // flow frame-1 -> frame; zero field at frame 0
  Mask gt_mask;
  std::vector<MaskEvent> mask_events;
  std::vector<PoseEvent> pose_events;
};

struct SequenceBundle {
  CameraIntrinsics intrinsics;
  double fps = 30.0;
  TriangleMesh mesh;
  std::vector<SimFrame> frames;  // per-frame events embedded
};

/// Streaming analytic scene generator. Depth and masks come from the software
/// rasterizer at the exact pose; flow comes from exact projection
/// differencing of the rigid motion, so it contains the full nonlinear pixel
/// motion rather than its first-order twist model. Deterministic under seed.
///
/// An optional static environment mesh (camera frame, identity pose) is
/// merged into the depth stream with zero flow; it never enters the object
/// masks. Without it, stale mask pixels fall on invalid depth and silently
/// drop out of the flow measurements, which hides the cost of unsynchronized
/// masks.
class SceneSimulator {
 public:
  SceneSimulator(TrajectorySpec trajectory, CorruptionSpec corruption, TriangleMesh mesh,
                 CameraIntrinsics intr, double fps, int n_frames, std::uint64_t seed,
                 TriangleMesh environment = {});

  /// Next frame, or nullopt at the end of the sequence. When the object
  /// leaves the frustum entirely the sequence is truncated with a warning.
  std::optional<SimFrame> next();

  bool truncated() const { return truncated_; }
  int frames_total() const { return n_frames_; }
  const TriangleMesh& mesh() const { return mesh_; }
  const CameraIntrinsics& intrinsics() const { return intr_; }
  double fps() const { return fps_; }

 private:
  Pose pose_at_frame(int k) const;
  void schedule_events(std::uint64_t seed);

  TrajectorySpec trajectory_;
  CorruptionSpec corruption_;
  TriangleMesh mesh_;
  TriangleMesh environment_;
  CameraIntrinsics intr_;
  double fps_;
  double dt_;
  int n_frames_;
  int next_frame_ = 0;
  bool truncated_ = false;

  std::vector<Pose> poses_;        // exact pose per frame, precomputed
  std::vector<PoseEvent> pose_events_;           // sorted by availability
  std::vector<std::pair<std::int64_t, std::int64_t>> mask_schedule_;  // (avail, origin)
  std::vector<std::pair<std::int64_t, Mask>> pending_masks_;  // origin -> exact mask

  DepthMap prev_exact_depth_;
  DepthMap env_depth_;  // static environment render, if any
  Mask prev_mask_;
  std::mt19937_64 pixel_rng_;
};

/// Generates the whole sequence in memory.
SequenceBundle generate(const TrajectorySpec& trajectory, const CorruptionSpec& corruption,
                        const TriangleMesh& mesh, const CameraIntrinsics& intr, double fps,
                        int n_frames, std::uint64_t seed, TriangleMesh environment = {});

/// Fronto-parallel background quad at the given depth, sized to cover the
/// view frustum of typical intrinsics with margin.
TriangleMesh backplane(double depth, double half_extent = 0.0);

/// Self-validation: maximum deviation in pixels between the emitted flow and
/// the first-order jacobian prediction J * V over sampled object pixels.
double ground_truth_flow_check(const SequenceBundle& bundle, int max_samples_per_frame = 200);

// Trajectory presets used by the CLI and the test suites.

/// Screw motion about `axis_dir`: the object orbits the screw axis (placed so
/// that |v_o| = speed) while rotating at omega_rad. Bounded by construction.
/// Keep orbit_radius small so the rotation axis stays near the object; the
/// second-order terms of the true pixel motion grow with the lever arm.
TrajectorySpec orbit_trajectory(double speed = 0.3, double omega_rad = 1.5707963267948966,
                                const Vec3& axis_dir = Vec3(0, 0, 1), double depth = 1.0,
                                double orbit_radius = 0.03, double duration = 60.0,
                                const UnitQuaternion& initial_rotation =
                                    UnitQuaternion::from_rotation_vector(Vec3(0.25, -0.3, 0.1)));

/// Pure translation at the given camera-frame velocity.
TrajectorySpec drift_trajectory(const Vec3& velocity, const Vec3& start = Vec3(0, 0, 1.0),
                                double duration = 60.0);

/// Rotation in place about an axis through the object center (zero center
/// velocity; v_o = -omega x center).
TrajectorySpec spin_trajectory(const Vec3& omega, const Vec3& center = Vec3(0, 0, 1.0),
                               double duration = 60.0);

/// Stationary object.
TrajectorySpec static_trajectory(const Vec3& position = Vec3(0, 0, 1.0),
                                 double duration = 60.0);

}  // namespace flowtrack
