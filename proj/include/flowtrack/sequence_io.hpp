#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowtrack/depth_render.hpp"
#include "flowtrack/geometry.hpp"
#include "flowtrack/image.hpp"
#include "flowtrack/scene_sim.hpp"

namespace flowtrack {

// On-disk sequence layout (one directory per sequence):
//   camera.cfg            key=value intrinsics and fps
//   depth/%06d.pgm        16-bit PGM, millimeters, 0 = invalid
//   flow/%06d.flo         12-byte header (magic "FLW1", u32 width, u32 height,
//                         little-endian) + row-major float32 (du, dv) pairs;
//                         flow k maps frame k-1 pixels toward frame k (k >= 1)
//   mask/%06d.pgm         8-bit PGM, nonzero = object, named by origin frame
//   masks.idx             lines: <available> <origin> <relative path>
//   poses.csv             available,origin,tx,ty,tz,qw,qx,qy,qz,outlier
//   ground_truth.csv      frame,tx,ty,tz,qw,qx,qy,qz,vox,voy,voz,wx,wy,wz
//   mesh.obj              object mesh, meters (optional but required for
//                         outlier rejection and ADD evaluation)
// Quaternions are scalar-first (w, x, y, z). Malformed or missing files raise
// DataError naming the offending path.

void write_pgm16(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_pgm16(const std::filesystem::path& path);
void write_pgm8(const std::filesystem::path& path, const Mask& mask);
Mask read_pgm8(const std::filesystem::path& path);
void write_flow_file(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow_file(const std::filesystem::path& path);

/// Streams a simulated sequence to disk; returns the number of frames
/// written (fewer than requested if the object left the frustum).
int write_sequence(const std::filesystem::path& dir, SceneSimulator& sim);

struct MaskIndexEntry {
  std::int64_t available = 0;
  std::int64_t origin = 0;
  std::string file;
};

struct GroundTruthRow {
  std::int64_t frame = 0;
  Pose pose;
  Twist twist;
};

/// Validating reader over the on-disk layout. Frame files must be contiguous
/// from zero and dimensioned per camera.cfg.
class SequenceReader {
 public:
  explicit SequenceReader(const std::filesystem::path& dir);

  const CameraIntrinsics& intrinsics() const { return intr_; }
  double fps() const { return fps_; }
  int frame_count() const { return frames_; }

  DepthMap read_depth(std::int64_t frame) const;
  FlowField read_flow(std::int64_t frame) const;  // frame >= 1
  Mask read_mask(const MaskIndexEntry& entry) const;

  const std::vector<MaskIndexEntry>& mask_index() const { return mask_index_; }
  const std::vector<PoseEvent>& pose_events() const { return pose_events_; }

  bool has_ground_truth() const { return !ground_truth_.empty(); }
  const std::vector<GroundTruthRow>& ground_truth() const { return ground_truth_; }

  bool has_mesh() const;
  TriangleMesh load_mesh() const;
  std::filesystem::path root() const { return dir_; }

 private:
  std::filesystem::path dir_;
  CameraIntrinsics intr_;
  double fps_ = 30.0;
  int frames_ = 0;
  std::vector<MaskIndexEntry> mask_index_;
  std::vector<PoseEvent> pose_events_;
  std::vector<GroundTruthRow> ground_truth_;
};

/// Per-frame tracker output row.
struct EstimateRow {
  std::int64_t frame = 0;
  Vec3 t = Vec3::Zero();
  UnitQuaternion q;
  Vec3 v = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  int pose_accepted = -1;  // -1 none this frame, 1 accepted, 0 rejected
};

struct TwistRow {
  std::int64_t frame = 0;
  Twist twist;
};

void write_estimates(const std::filesystem::path& path, const std::vector<EstimateRow>& rows);
std::vector<EstimateRow> read_estimates(const std::filesystem::path& path);
void write_velocities(const std::filesystem::path& path, const std::vector<TwistRow>& rows);
std::vector<TwistRow> read_velocities(const std::filesystem::path& path);

}  // namespace flowtrack
