#include "flowtrack/depth_render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowtrack {

namespace {
constexpr double kNearPlane = 1e-6;
}

void TriangleMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int idx : t) {
      if (idx < 0 || idx >= n) {
        throw std::invalid_argument("TriangleMesh: triangle index out of range");
      }
    }
  }
}

void TriangleMesh::remove_degenerate(double area_eps) {
  std::vector<std::array<int, 3>> kept;
  kept.reserve(triangles.size());
  for (const auto& t : triangles) {
    const Vec3& a = vertices[t[0]];
    const Vec3& b = vertices[t[1]];
    const Vec3& c = vertices[t[2]];
    if (0.5 * (b - a).cross(c - a).norm() > area_eps) {
      kept.push_back(t);
    }
  }
  triangles = std::move(kept);
}

TriangleMesh TriangleMesh::load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("TriangleMesh: cannot open " + path);
  }
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) {
        throw std::runtime_error("TriangleMesh: bad vertex at " + path + ":" +
                                 std::to_string(lineno));
      }
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const auto slash = tok.find('/');
        if (slash != std::string::npos) tok = tok.substr(0, slash);
        const int i = std::stoi(tok);
        // OBJ indices are 1-based; negative indices count from the end.
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(mesh.vertices.size()) + i);
      }
      if (idx.size() < 3) {
        throw std::runtime_error("TriangleMesh: face with fewer than 3 vertices at " +
                                 path + ":" + std::to_string(lineno));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
      }
    }
  }
  mesh.validate();
  mesh.remove_degenerate();
  return mesh;
}

void TriangleMesh::save_obj(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("TriangleMesh: cannot write " + path);
  }
  out << "# units: meters\n";
  out.precision(12);
  for (const auto& v : vertices) {
    out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  }
  for (const auto& t : triangles) {
    out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
}

TriangleMesh TriangleMesh::box(double sx, double sy, double sz) {
  TriangleMesh m;
  const double x = 0.5 * sx, y = 0.5 * sy, z = 0.5 * sz;
  m.vertices = {{-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z},
                {-x, -y, z},  {x, -y, z},  {x, y, z},  {-x, y, z}};
  m.triangles = {{0, 1, 2}, {0, 2, 3},   // z-
                 {4, 6, 5}, {4, 7, 6},   // z+
                 {0, 4, 5}, {0, 5, 1},   // y-
                 {3, 2, 6}, {3, 6, 7},   // y+
                 {0, 3, 7}, {0, 7, 4},   // x-
                 {1, 5, 6}, {1, 6, 2}};  // x+
  return m;
}

TriangleMesh TriangleMesh::cylinder(double radius, double height, int segments) {
  if (segments < 3) {
    throw std::invalid_argument("TriangleMesh::cylinder: need at least 3 segments");
  }
  TriangleMesh m;
  const double hz = 0.5 * height;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * M_PI * i / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), -hz);
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), hz);
  }
  const int bottom_center = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, -hz);
  const int top_center = bottom_center + 1;
  m.vertices.emplace_back(0.0, 0.0, hz);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    const int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    m.triangles.push_back({b0, b1, t1});
    m.triangles.push_back({b0, t1, t0});
    m.triangles.push_back({bottom_center, b1, b0});
    m.triangles.push_back({top_center, t0, t1});
  }
  return m;
}

DepthMap render_depth(const TriangleMesh& mesh, const Pose& pose,
                      const CameraIntrinsics& intr) {
  intr.validate();
  DepthMap depth(intr.width, intr.height);

  // Transform all vertices to the camera frame once.
  const Mat3 rot = pose.q.rotation_matrix();
  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    cam[i] = rot * mesh.vertices[i] + pose.t;
  }

  for (const auto& tri : mesh.triangles) {
    const Vec3& a = cam[tri[0]];
    const Vec3& b = cam[tri[1]];
    const Vec3& c = cam[tri[2]];
    if (a.z() <= kNearPlane || b.z() <= kNearPlane || c.z() <= kNearPlane) {
      continue;  // clipped
    }
    const Vec2 pa(intr.cx + a.x() / a.z() * intr.fx, intr.cy + a.y() / a.z() * intr.fy);
    const Vec2 pb(intr.cx + b.x() / b.z() * intr.fx, intr.cy + b.y() / b.z() * intr.fy);
    const Vec2 pc(intr.cx + c.x() / c.z() * intr.fx, intr.cy + c.y() / c.z() * intr.fy);

    const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.x(), pb.x(), pc.x()}))));
    const int u1 = std::min(intr.width - 1,
                            static_cast<int>(std::floor(std::max({pa.x(), pb.x(), pc.x()}))));
    const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.y(), pb.y(), pc.y()}))));
    const int v1 = std::min(intr.height - 1,
                            static_cast<int>(std::floor(std::max({pa.y(), pb.y(), pc.y()}))));
    if (u0 > u1 || v0 > v1) continue;

    const double area = (pb.x() - pa.x()) * (pc.y() - pa.y()) -
                        (pb.y() - pa.y()) * (pc.x() - pa.x());
    if (std::abs(area) < 1e-12) continue;  // edge-on
    const double inv_area = 1.0 / area;
    const double iza = 1.0 / a.z(), izb = 1.0 / b.z(), izc = 1.0 / c.z();

    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        // Signed edge functions; accept either winding.
        const double w0 = ((pb.x() - pa.x()) * (v - pa.y()) - (pb.y() - pa.y()) * (u - pa.x())) * inv_area;
        const double w1 = ((pc.x() - pb.x()) * (v - pb.y()) - (pc.y() - pb.y()) * (u - pb.x())) * inv_area;
        const double w2 = ((pa.x() - pc.x()) * (v - pc.y()) - (pa.y() - pc.y()) * (u - pc.x())) * inv_area;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        // Barycentric weights: w1 is opposite vertex a, w2 opposite b, w0 opposite c.
        const double iz = w1 * iza + w2 * izb + w0 * izc;
        const float z = static_cast<float>(1.0 / iz);
        const float cur = depth.at(u, v);
        if (!DepthMap::is_valid(cur) || z < cur) {
          depth.set(u, v, z);
        }
      }
    }
  }
  return depth;
}

std::optional<double> depth_error(const DepthMap& a, const DepthMap& b, int min_overlap) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("depth_error: dimension mismatch");
  }
  double sum = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const float da = a.data[i];
    const float db = b.data[i];
    if (DepthMap::is_valid(da) && DepthMap::is_valid(db)) {
      sum += std::abs(static_cast<double>(da) - static_cast<double>(db));
      ++count;
    }
  }
  if (count < min_overlap) {
    return std::nullopt;
  }
  return sum / static_cast<double>(count);
}

}  // namespace flowtrack
