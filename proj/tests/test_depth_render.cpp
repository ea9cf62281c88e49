#include <doctest.h>

#include <filesystem>
#include <random>

#include "flowtrack/depth_render.hpp"
#include "support/oracles.hpp"

using namespace flowtrack;

namespace {
const CameraIntrinsics kIntr{600.0, 600.0, 320.0, 240.0, 640, 480};

TriangleMesh single_triangle(double z) {
  TriangleMesh m;
  m.vertices = {{-0.2, -0.2, z}, {0.4, -0.2, z}, {-0.2, 0.4, z}};
  m.triangles = {{0, 1, 2}};
  return m;
}
}  // namespace

TEST_SUITE("depth_render") {

TEST_CASE("fronto-parallel triangle renders its plane depth") {
  const DepthMap d = render_depth(single_triangle(1.0), Pose{}, kIntr);
  CHECK(d.valid_at(320, 240));
  CHECK(d.at(320, 240) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("translating the mesh along +z shifts the rendered depth") {
  Pose pose;
  pose.t = Vec3(0, 0, 0.5);
  const DepthMap d = render_depth(single_triangle(1.0), pose, kIntr);
  CHECK(d.at(320, 240) == doctest::Approx(1.5).epsilon(1e-6));
}

TEST_CASE("z-buffer keeps the nearest of two overlapping triangles") {
  TriangleMesh m = single_triangle(2.0);
  const TriangleMesh front = single_triangle(1.0);
  m.vertices.insert(m.vertices.end(), front.vertices.begin(), front.vertices.end());
  m.triangles.push_back({3, 4, 5});
  const DepthMap d = render_depth(m, Pose{}, kIntr);
  CHECK(d.at(320, 240) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("mesh fully behind the camera renders all-invalid") {
  const DepthMap d = render_depth(single_triangle(-1.0), Pose{}, kIntr);
  for (const float v : d.data) CHECK_FALSE(DepthMap::is_valid(v));
}

TEST_CASE("both winding orders rasterize") {
  TriangleMesh m = single_triangle(1.0);
  std::swap(m.triangles[0][1], m.triangles[0][2]);
  const DepthMap d = render_depth(m, Pose{}, kIntr);
  CHECK(d.valid_at(320, 240));
}

TEST_CASE("tilted plane depth is interpolated exactly") {
  // plane z = 1 + 0.5 * x: depth at pixel center must match the analytic plane
  TriangleMesh m;
  m.vertices = {{-0.4, -0.4, 0.8}, {0.4, -0.4, 1.2}, {-0.4, 0.4, 0.8}};
  m.triangles = {{0, 1, 2}};
  const DepthMap d = render_depth(m, Pose{}, kIntr);
  REQUIRE(d.valid_at(300, 240));
  // u=300 -> x = -z/30, plane z = 1 + 0.5x -> z = 60/61
  CHECK(d.at(300, 240) == doctest::Approx(60.0 / 61.0).epsilon(1e-5));
  REQUIRE(d.valid_at(280, 240));
  // u=280 -> x = -z/15, plane z = 1 - z/30 -> z = 30/31
  CHECK(d.at(280, 240) == doctest::Approx(30.0 / 31.0).epsilon(1e-5));
}

TEST_CASE("box render against the analytic front face") {
  const TriangleMesh box = TriangleMesh::box(0.10, 0.16, 0.21);
  Pose pose;
  pose.t = Vec3(0, 0, 1.0);
  const DepthMap d = render_depth(box, pose, kIntr);
  // front face at z = 1 - 0.105
  const double expected = 1.0 - 0.105;
  double worst = 0.0;
  int covered = 0;
  for (int v = 240 - 40; v <= 240 + 40; ++v) {
    for (int u = 320 - 25; u <= 320 + 25; ++u) {
      REQUIRE(d.valid_at(u, v));
      worst = std::max(worst, std::abs(d.at(u, v) - expected));
      ++covered;
    }
  }
  CHECK(covered > 0);
  CHECK(worst < 2e-3);
}

TEST_CASE("degenerate triangles are filtered on load") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "flowtrack_degenerate.obj";
  {
    TriangleMesh m;
    m.vertices = {{0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {0.5, 0.5, 1}};
    m.triangles = {{0, 1, 2}, {0, 0, 1}, {3, 3, 3}};
    m.save_obj(path.string());
  }
  const TriangleMesh loaded = TriangleMesh::load_obj(path.string());
  CHECK(loaded.triangles.size() == 1);
  fs::remove(path);
}

TEST_CASE("obj save/load round trip") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "flowtrack_roundtrip.obj";
  const TriangleMesh box = TriangleMesh::box(0.1, 0.2, 0.3);
  box.save_obj(path.string());
  const TriangleMesh loaded = TriangleMesh::load_obj(path.string());
  REQUIRE(loaded.vertices.size() == box.vertices.size());
  REQUIRE(loaded.triangles.size() == box.triangles.size());
  for (std::size_t i = 0; i < box.vertices.size(); ++i) {
    CHECK((loaded.vertices[i] - box.vertices[i]).norm() < 1e-9);
  }
  fs::remove(path);
}

TEST_CASE("depth_error basics") {
  DepthMap a(100, 80), b(100, 80);
  for (int v = 10; v < 60; ++v)
    for (int u = 10; u < 60; ++u) {
      a.set(u, v, 1.0f);
      b.set(u, v, 1.1f);
    }
  const auto e = depth_error(a, b);
  REQUIRE(e.has_value());
  CHECK(*e == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(*depth_error(a, a) == doctest::Approx(0.0));
  // symmetry
  CHECK(*depth_error(b, a) == doctest::Approx(*e));
}

TEST_CASE("depth_error signals insufficient overlap") {
  DepthMap a(100, 80), b(100, 80);
  for (int u = 0; u < 20; ++u) a.set(u, 0, 1.0f);
  for (int u = 50; u < 70; ++u) b.set(u, 0, 1.0f);
  CHECK_FALSE(depth_error(a, b).has_value());
  DepthMap c(64, 48);
  CHECK_THROWS_AS(depth_error(a, c), std::invalid_argument);
}

TEST_CASE("depth_error is translation-monotone on a fronto-parallel face") {
  const TriangleMesh box = TriangleMesh::box(0.2, 0.2, 0.1);
  Pose pose;
  pose.t = Vec3(0, 0, 1.0);
  const DepthMap reference = render_depth(box, pose, kIntr);
  const double delta = 0.05;
  Pose shifted = pose;
  shifted.t.z() += delta;
  const DepthMap moved = render_depth(box, shifted, kIntr);
  const auto e = depth_error(reference, moved);
  REQUIRE(e.has_value());
  CHECK(*e == doctest::Approx(delta).epsilon(0.05));
}

}  // TEST_SUITE
