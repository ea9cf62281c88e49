#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "flowtrack/geometry.hpp"
#include "flowtrack/image.hpp"

namespace flowtrack {

/// Triangle mesh in the object frame, meters.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  /// Throws std::invalid_argument on out-of-range indices.
  void validate() const;

  /// Drops zero-area triangles (load-time filtering).
  void remove_degenerate(double area_eps = 1e-12);

  /// Loads a plain-text mesh with `v x y z` vertex records and `f i j k ...`
  /// face records (1-based indices, fan-triangulated, attribute suffixes
  /// after '/' ignored). Coordinates are meters. Degenerate triangles are
  /// filtered out.
  static TriangleMesh load_obj(const std::string& path);
  void save_obj(const std::string& path) const;

  /// Axis-aligned box centered at the origin with the given full extents.
  static TriangleMesh box(double sx, double sy, double sz);
  /// Z-aligned closed cylinder centered at the origin.
  static TriangleMesh cylinder(double radius, double height, int segments = 24);
};

/// Software z-buffer rasterization of the mesh at the given object-in-camera
/// pose. Every pixel covered by a triangle gets the nearest surface depth;
/// uncovered pixels stay invalid (0). Triangles are rasterized regardless of
/// winding; triangles with any vertex at or behind the camera are clipped
/// away. A mesh fully behind the camera yields an all-invalid map.
DepthMap render_depth(const TriangleMesh& mesh, const Pose& pose,
                      const CameraIntrinsics& intr);

/// Mean absolute depth difference over pixels valid in both maps. Returns
/// nullopt when fewer than min_overlap pixels are jointly valid (callers
/// treat that as an outlier verdict). Throws std::invalid_argument on
/// dimension mismatch.
std::optional<double> depth_error(const DepthMap& a, const DepthMap& b,
                                  int min_overlap = 50);

}  // namespace flowtrack
