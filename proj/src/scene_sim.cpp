#include "flowtrack/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "flowtrack/errors.hpp"

namespace flowtrack {

void TrajectorySpec::validate() const {
  if (segments.empty()) {
    throw ConfigError("trajectory: at least one segment required");
  }
  for (const auto& s : segments) {
    if (!(s.duration > 0.0)) {
      throw ConfigError("trajectory: segment durations must be positive");
    }
    if (!s.twist.v_o.allFinite() || !s.twist.omega.allFinite()) {
      throw ConfigError("trajectory: twists must be finite");
    }
  }
}

const Twist& TrajectorySpec::twist_at(double t) const {
  double acc = 0.0;
  for (const auto& s : segments) {
    acc += s.duration;
    if (t < acc) return s.twist;
  }
  return segments.back().twist;
}

void CorruptionSpec::validate() const {
  if (mask_delay < 0 || pose_delay < 0) {
    throw ConfigError("corruption: delays must be non-negative");
  }
  const auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate_ok(outlier_rate) || !rate_ok(mask_miss_rate)) {
    throw ConfigError("corruption: rates must lie in [0, 1]");
  }
  if (pose_noise_t < 0 || pose_noise_rot < 0 || flow_noise < 0 || depth_noise < 0 ||
      outlier_t < 0 || outlier_rot < 0) {
    throw ConfigError("corruption: noise magnitudes must be non-negative");
  }
}

SceneSimulator::SceneSimulator(TrajectorySpec trajectory, CorruptionSpec corruption,
                               TriangleMesh mesh, CameraIntrinsics intr, double fps,
                               int n_frames, std::uint64_t seed, TriangleMesh environment)
    : trajectory_(std::move(trajectory)),
      corruption_(corruption),
      mesh_(std::move(mesh)),
      environment_(std::move(environment)),
      intr_(intr),
      fps_(fps),
      dt_(1.0 / fps),
      n_frames_(n_frames),
      pixel_rng_(seed ^ 0x9e3779b97f4a7c15ull) {
  trajectory_.validate();
  corruption_.validate();
  intr_.validate();
  if (!(fps > 0.0)) throw ConfigError("simulator: fps must be positive");
  if (n_frames <= 0) throw ConfigError("simulator: frame count must be positive");
  if (mesh_.triangles.empty()) throw ConfigError("simulator: mesh is empty");

  // Exact pose per frame via per-frame screw steps.
  poses_.resize(n_frames_);
  poses_[0] = trajectory_.initial_pose;
  for (int k = 1; k < n_frames_; ++k) {
    const Twist& tw = trajectory_.twist_at((k - 1) * dt_);
    poses_[k] = compose(twist_step(tw, dt_), poses_[k - 1]);
  }

  if (!environment_.triangles.empty()) {
    environment_.validate();
    env_depth_ = render_depth(environment_, Pose{}, intr_);
  }

  schedule_events(seed);
}

void SceneSimulator::schedule_events(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto random_direction = [&]() {
    Vec3 d;
    do {
      d = Vec3(gauss(rng), gauss(rng), gauss(rng));
    } while (d.norm() < 1e-9);
    return Vec3(d.normalized());
  };

  // Pose events: a seed event at frame 0 plus one delayed event per
  // detection period. Only delayed events can be outliers.
  const auto corrupt_pose = [&](const Pose& truth, bool allow_outlier) {
    PoseEvent ev;
    ev.pose = truth;
    if (corruption_.pose_noise_t > 0.0) {
      ev.pose.t += corruption_.pose_noise_t * Vec3(gauss(rng), gauss(rng), gauss(rng));
    }
    if (corruption_.pose_noise_rot > 0.0) {
      const Vec3 n = corruption_.pose_noise_rot * Vec3(gauss(rng), gauss(rng), gauss(rng));
      ev.pose.q = UnitQuaternion::from_rotation_vector(n) * ev.pose.q;
    }
    if (allow_outlier && corruption_.outlier_rate > 0.0 &&
        unit(rng) < corruption_.outlier_rate) {
      ev.outlier = true;
      ev.pose.t += corruption_.outlier_t * random_direction();
      ev.pose.q =
          UnitQuaternion::from_rotation_vector(corruption_.outlier_rot * random_direction()) *
          ev.pose.q;
    }
    return ev;
  };

  {
    PoseEvent seed_ev = corrupt_pose(poses_[0], false);
    seed_ev.available = 0;
    seed_ev.origin = 0;
    pose_events_.push_back(std::move(seed_ev));
  }
  const int np = corruption_.pose_delay;
  if (np <= 0) {
    // Full-rate, undelayed detector: one event per frame after the seed.
    for (std::int64_t origin = 1; origin < n_frames_; ++origin) {
      PoseEvent ev = corrupt_pose(poses_[static_cast<std::size_t>(origin)], true);
      ev.available = origin;
      ev.origin = origin;
      pose_events_.push_back(std::move(ev));
    }
  } else {
    for (std::int64_t origin = 0; origin + np < n_frames_; origin += np) {
      PoseEvent ev = corrupt_pose(poses_[static_cast<std::size_t>(origin)], true);
      ev.available = origin + np;
      ev.origin = origin;
      pose_events_.push_back(std::move(ev));
    }
  }

  // Mask schedule: (availability, origin) pairs; content is rendered during
  // generation. Scheduled masks after the first may be missed.
  mask_schedule_.emplace_back(0, 0);
  const int ns = corruption_.mask_delay;
  if (ns <= 0) {
    for (std::int64_t origin = 1; origin < n_frames_; ++origin) {
      if (corruption_.mask_miss_rate > 0.0 && unit(rng) < corruption_.mask_miss_rate) {
        continue;
      }
      mask_schedule_.emplace_back(origin, origin);
    }
  } else {
    for (std::int64_t origin = 0; origin + ns < n_frames_; origin += ns) {
      if (corruption_.mask_miss_rate > 0.0 && unit(rng) < corruption_.mask_miss_rate) {
        continue;  // detector produced nothing for this frame
      }
      mask_schedule_.emplace_back(origin + ns, origin);
    }
  }
}

Pose SceneSimulator::pose_at_frame(int k) const { return poses_[static_cast<std::size_t>(k)]; }

std::optional<SimFrame> SceneSimulator::next() {
  if (truncated_ || next_frame_ >= n_frames_) return std::nullopt;
  const int k = next_frame_;

  SimFrame out;
  out.frame = k;
  out.pose = pose_at_frame(k);
  out.twist = trajectory_.twist_at((std::max(k, 1) - 1) * dt_);

  DepthMap exact_depth = render_depth(mesh_, out.pose, intr_);
  out.gt_mask = Mask(intr_.width, intr_.height);
  for (int v = 0; v < intr_.height; ++v) {
    for (int u = 0; u < intr_.width; ++u) {
      if (exact_depth.valid_at(u, v)) out.gt_mask.insert(u, v);
    }
  }
  if (out.gt_mask.empty()) {
    std::cerr << "[flowtrack] warning: object left the frustum at frame " << k
              << "; sequence truncated\n";
    truncated_ = true;
    return std::nullopt;
  }

  // Exact flow by projection differencing over the previous frame's mask.
  out.flow = FlowField(intr_.width, intr_.height);
  if (k > 0) {
    const Pose delta = compose(out.pose, inverse(pose_at_frame(k - 1)));
    for (const auto& px : prev_mask_.pixels()) {
      const int u = px[0], v = px[1];
      const float d = prev_exact_depth_.at(u, v);
      if (!DepthMap::is_valid(d)) continue;
      const Vec3 p = backproject(u, v, d, intr_);
      const Vec3 moved = transform_point(delta, p);
      if (!(moved.z() > 0.0)) continue;
      const Vec2 target = project(moved, intr_);
      if (corruption_.zero_occluded_flow) {
        const int tu = static_cast<int>(std::lround(target.x()));
        const int tv = static_cast<int>(std::lround(target.y()));
        if (tu >= 0 && tu < intr_.width && tv >= 0 && tv < intr_.height) {
          const float seen = exact_depth.at(tu, tv);
          if (DepthMap::is_valid(seen) && seen < moved.z() - 1e-3) {
            continue;  // self-occluded: flow estimator would fail here
          }
        }
      }
      out.flow.set(u, v, static_cast<float>(target.x() - u),
                   static_cast<float>(target.y() - v));
    }
  }

  // Measured depth: the object merged over the static environment (the
  // environment is assumed to lie behind the object).
  out.depth = exact_depth;
  if (!env_depth_.empty()) {
    for (std::size_t i = 0; i < out.depth.data.size(); ++i) {
      const float obj = out.depth.data[i];
      const float env = env_depth_.data[i];
      if (!DepthMap::is_valid(obj) || (DepthMap::is_valid(env) && env < obj)) {
        out.depth.data[i] = env;
      }
    }
  }
  if (corruption_.depth_noise > 0.0) {
    std::normal_distribution<double> gauss(0.0, corruption_.depth_noise);
    for (auto& d : out.depth.data) {
      if (DepthMap::is_valid(d)) {
        d = static_cast<float>(std::max(1e-4, static_cast<double>(d) + gauss(pixel_rng_)));
      }
    }
  }
  if (corruption_.flow_noise > 0.0 && k > 0) {
    std::normal_distribution<double> gauss(0.0, corruption_.flow_noise);
    for (auto& f : out.flow.data) {
      f += static_cast<float>(gauss(pixel_rng_));
    }
  }

  // Stash the exact mask once if any scheduled delivery needs this origin.
  const bool stash = std::any_of(mask_schedule_.begin(), mask_schedule_.end(),
                                 [k](const auto& s) { return s.second == k; });
  if (stash) {
    pending_masks_.emplace_back(k, out.gt_mask);
  }
  // Deliver events available at this frame.
  for (const auto& [avail, origin] : mask_schedule_) {
    if (avail != k) continue;
    auto it = std::find_if(pending_masks_.begin(), pending_masks_.end(),
                           [o = origin](const auto& p) { return p.first == o; });
    if (it != pending_masks_.end()) {
      out.mask_events.push_back(MaskEvent{avail, origin, it->second});
    }
  }
  // Drop stashed masks with no remaining scheduled delivery.
  pending_masks_.erase(
      std::remove_if(pending_masks_.begin(), pending_masks_.end(),
                     [&](const auto& p) {
                       return std::none_of(mask_schedule_.begin(), mask_schedule_.end(),
                                           [&](const auto& s) {
                                             return s.second == p.first && s.first > k;
                                           });
                     }),
      pending_masks_.end());
  for (const auto& ev : pose_events_) {
    if (ev.available == k) out.pose_events.push_back(ev);
  }

  prev_exact_depth_ = std::move(exact_depth);
  prev_mask_ = out.gt_mask;
  ++next_frame_;
  return out;
}

SequenceBundle generate(const TrajectorySpec& trajectory, const CorruptionSpec& corruption,
                        const TriangleMesh& mesh, const CameraIntrinsics& intr, double fps,
                        int n_frames, std::uint64_t seed, TriangleMesh environment) {
  SceneSimulator sim(trajectory, corruption, mesh, intr, fps, n_frames, seed,
                     std::move(environment));
  SequenceBundle bundle;
  bundle.intrinsics = intr;
  bundle.fps = fps;
  bundle.mesh = mesh;
  while (auto frame = sim.next()) {
    bundle.frames.push_back(std::move(*frame));
  }
  return bundle;
}

TriangleMesh backplane(double depth, double half_extent) {
  if (half_extent <= 0.0) {
    half_extent = 0.8 * depth;
  }
  TriangleMesh plane;
  plane.vertices = {{-half_extent, -half_extent, depth},
                    {half_extent, -half_extent, depth},
                    {half_extent, half_extent, depth},
                    {-half_extent, half_extent, depth}};
  plane.triangles = {{0, 1, 2}, {0, 2, 3}};
  return plane;
}

double ground_truth_flow_check(const SequenceBundle& bundle, int max_samples_per_frame) {
  double worst = 0.0;
  const double dt = 1.0 / bundle.fps;
  for (std::size_t k = 1; k < bundle.frames.size(); ++k) {
    const SimFrame& prev = bundle.frames[k - 1];
    const SimFrame& cur = bundle.frames[k];
    const auto pixels = prev.gt_mask.pixels();
    if (pixels.empty()) continue;
    const std::size_t stride =
        std::max<std::size_t>(1, pixels.size() / static_cast<std::size_t>(max_samples_per_frame));
    const Vec6 twist = cur.twist.vector();
    for (std::size_t i = 0; i < pixels.size(); i += stride) {
      const int u = pixels[i][0], v = pixels[i][1];
      const float d = prev.depth.at(u, v);
      if (!DepthMap::is_valid(d)) continue;
      const Eigen::Vector2f f = cur.flow.at(u, v);
      const Vec2 predicted =
          flow_jacobian_row(u, v, d, bundle.intrinsics, dt) * twist;
      worst = std::max(worst, (predicted - Vec2(f.x(), f.y())).norm());
    }
  }
  return worst;
}

namespace {
Vec3 any_unit_orthogonal(const Vec3& axis) {
  const Vec3 trial = std::abs(axis.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  return axis.cross(trial).normalized();
}
}  // namespace

TrajectorySpec orbit_trajectory(double speed, double omega_rad, const Vec3& axis_dir,
                                double depth, double orbit_radius, double duration,
                                const UnitQuaternion& initial_rotation) {
  if (!(omega_rad > 0.0)) {
    throw ConfigError("orbit trajectory: omega must be positive");
  }
  const Vec3 axis = axis_dir.normalized();
  const Vec3 center(0.0, 0.0, depth);
  const Vec3 center_par = axis.dot(center) * axis;
  Vec3 radial = center - center_par;
  if (radial.norm() < 1e-9) {
    radial = any_unit_orthogonal(axis);
  } else {
    radial.normalize();
  }
  // Place the screw axis so the body point at the camera origin moves at `speed`.
  const Vec3 axis_point = center_par + (speed / omega_rad) * radial;
  const Vec3 omega = omega_rad * axis;

  TrajectorySpec spec;
  spec.initial_pose.t = axis_point - orbit_radius * radial;
  spec.initial_pose.q = initial_rotation;
  spec.segments.push_back({duration, Twist{-omega.cross(axis_point), omega}});
  return spec;
}

TrajectorySpec drift_trajectory(const Vec3& velocity, const Vec3& start, double duration) {
  TrajectorySpec spec;
  spec.initial_pose.t = start;
  spec.initial_pose.q = UnitQuaternion::from_rotation_vector(Vec3(0.25, -0.3, 0.1));
  spec.segments.push_back({duration, Twist{velocity, Vec3::Zero()}});
  return spec;
}

TrajectorySpec spin_trajectory(const Vec3& omega, const Vec3& center, double duration) {
  TrajectorySpec spec;
  spec.initial_pose.t = center;
  spec.initial_pose.q = UnitQuaternion::from_rotation_vector(Vec3(0.25, -0.3, 0.1));
  spec.segments.push_back({duration, Twist{-omega.cross(center), omega}});
  return spec;
}

TrajectorySpec static_trajectory(const Vec3& position, double duration) {
  TrajectorySpec spec;
  spec.initial_pose.t = position;
  spec.initial_pose.q = UnitQuaternion::from_rotation_vector(Vec3(0.25, -0.3, 0.1));
  spec.segments.push_back({duration, Twist{}});
  return spec;
}

}  // namespace flowtrack
