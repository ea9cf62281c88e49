#include <doctest.h>

#include <cmath>
#include <random>

#include "flowtrack/geometry.hpp"
#include "support/oracles.hpp"

using namespace flowtrack;
using flowtrack::testing::finite_difference_flow;
using flowtrack::testing::random_rotation;
using flowtrack::testing::random_vector;

namespace {
const CameraIntrinsics kIntr{600.0, 600.0, 320.0, 240.0, 640, 480};
}

TEST_SUITE("geometry") {

TEST_CASE("project maps the optical axis to the principal point") {
  const Vec2 px = project(Vec3(0, 0, 1), kIntr);
  CHECK(px.x() == doctest::Approx(320.0));
  CHECK(px.y() == doctest::Approx(240.0));
}

TEST_CASE("project offsets by f*x/d") {
  const Vec2 px = project(Vec3(0.1, 0, 1), kIntr);
  CHECK(px.x() == doctest::Approx(380.0));
  CHECK(px.y() == doctest::Approx(240.0));
}

TEST_CASE("project rejects non-positive depth") {
  CHECK_THROWS_AS(project(Vec3(0, 0, 0), kIntr), std::domain_error);
  CHECK_THROWS_AS(project(Vec3(0, 0, -1), kIntr), std::domain_error);
  CHECK_THROWS_AS(backproject(10, 10, 0.0, kIntr), std::domain_error);
}

TEST_CASE("project of backproject is the identity") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> upix(0.0, 639.0), vpix(0.0, 479.0),
      depth(0.2, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double u = upix(rng), v = vpix(rng), d = depth(rng);
    const Vec2 back = project(backproject(u, v, d, kIntr), kIntr);
    CHECK(back.x() == doctest::Approx(u).epsilon(1e-9));
    CHECK(back.y() == doctest::Approx(v).epsilon(1e-9));
  }
}

TEST_CASE("flow jacobian at the principal point") {
  const Mat26 j = flow_jacobian_row(320, 240, 1.0, kIntr, 1.0);
  Mat26 expected;
  expected << 600, 0, 0, 0, 600, 0,
              0, 600, 0, -600, 0, 0;
  CHECK((j - expected).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("flow jacobian rejects invalid depth and dt") {
  CHECK_THROWS_AS(flow_jacobian_row(10, 10, 0.0, kIntr, 1.0), std::domain_error);
  CHECK_THROWS_AS(flow_jacobian_row(10, 10, 1.0, kIntr, 0.0), std::domain_error);
}

TEST_CASE("flow jacobian matches finite differences of the projection") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> upix(20.0, 620.0), vpix(20.0, 460.0),
      depth(0.3, 3.0);
  const double dt = 1.0 / 30.0;
  for (int i = 0; i < 300; ++i) {
    const double u = upix(rng), v = vpix(rng), d = depth(rng);
    const Twist twist{random_vector(rng, 0.3), random_vector(rng, 1.0)};
    const Vec2 predicted = flow_jacobian_row(u, v, d, kIntr, dt) * twist.vector();
    const Vec2 reference = finite_difference_flow(u, v, d, kIntr, dt, twist);
    const double scale = std::max(reference.norm(), 1e-9);
    CHECK((predicted - reference).norm() / scale < 1e-5);
  }
}

TEST_CASE("quat transition: zero rate is the identity") {
  CHECK((quat_transition(Vec3::Zero(), 0.5) - Mat4::Identity()).cwiseAbs().maxCoeff() <
        1e-15);
}

TEST_CASE("quat transition: half turn about z") {
  const Mat4 a = quat_transition(Vec3(0, 0, M_PI), 1.0);
  const Vec4 q = a * Vec4(1, 0, 0, 0);  // identity quaternion, scalar first
  CHECK(q(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(q(1) == doctest::Approx(0.0));
  CHECK(q(2) == doctest::Approx(0.0));
  CHECK(q(3) == doctest::Approx(1.0));
}

TEST_CASE("quat transition preserves unit norm") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 omega = random_vector(rng, 3.0);
    const UnitQuaternion q = random_rotation(rng);
    const Vec4 rotated = quat_transition(omega, 1.0 / 30.0) * q.wxyz();
    CHECK(rotated.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("quat transition composes: n small steps equal one big step") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 omega = random_vector(rng, 2.0);
    const UnitQuaternion q0 = random_rotation(rng);
    const int n = 12;
    const double dt = 1.0 / 30.0;
    UnitQuaternion stepped = q0;
    for (int i = 0; i < n; ++i) stepped = integrate_rotation(stepped, omega, dt);
    const UnitQuaternion direct = integrate_rotation(q0, omega, n * dt);
    CHECK(geodesic_angle(stepped, direct) < 1e-9);
  }
}

TEST_CASE("geodesic angle basics") {
  std::mt19937_64 rng(9);
  const UnitQuaternion q = random_rotation(rng);
  CHECK(geodesic_angle(q, q) == doctest::Approx(0.0));
  const UnitQuaternion z90 = UnitQuaternion::from_rotation_vector(Vec3(0, 0, M_PI / 2));
  CHECK(geodesic_angle(UnitQuaternion::identity(), z90) ==
        doctest::Approx(M_PI / 2).epsilon(1e-12));
  const UnitQuaternion negated(-q.w(), -q.x(), -q.y(), -q.z());
  CHECK(geodesic_angle(q, negated) == doctest::Approx(0.0));
}

TEST_CASE("geodesic angle satisfies the triangle inequality") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const UnitQuaternion a = random_rotation(rng);
    const UnitQuaternion b = random_rotation(rng);
    const UnitQuaternion c = random_rotation(rng);
    CHECK(geodesic_angle(a, c) <= geodesic_angle(a, b) + geodesic_angle(b, c) + 1e-12);
  }
}

TEST_CASE("rotation vector round trip and rotate consistency") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 100; ++i) {
    // the log map returns the principal branch, so keep |theta| < pi
    Vec3 theta = random_vector(rng, 1.0);
    if (theta.norm() >= 3.0) theta *= 3.0 / theta.norm();
    const UnitQuaternion q = UnitQuaternion::from_rotation_vector(theta);
    CHECK((q.to_rotation_vector() - theta).norm() < 1e-12 * std::max(1.0, theta.norm()));
    const Vec3 v = random_vector(rng, 2.0);
    CHECK((q.rotate(v) - q.rotation_matrix() * v).norm() < 1e-12);
  }
}

TEST_CASE("twist step matches direct integration for pure translation") {
  const Pose step = twist_step(Twist{Vec3(0.3, -0.1, 0.05), Vec3::Zero()}, 0.1);
  CHECK((step.t - Vec3(0.03, -0.01, 0.005)).norm() < 1e-15);
  CHECK(geodesic_angle(step.q, UnitQuaternion::identity()) < 1e-15);
}

TEST_CASE("twist step leaves the screw axis fixed") {
  // v_o = -omega x a makes the line through a along omega stationary.
  const Vec3 axis_point(0.2, -0.1, 1.0);
  const Vec3 omega(0.3, 0.4, 1.2);
  const Twist twist{-omega.cross(axis_point), omega};
  const Pose step = twist_step(twist, 0.25);
  CHECK((transform_point(step, axis_point) - axis_point).norm() < 1e-12);
}

TEST_CASE("compose and inverse") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 50; ++i) {
    const Pose a{random_vector(rng, 1.0), random_rotation(rng)};
    const Pose b{random_vector(rng, 1.0), random_rotation(rng)};
    const Vec3 p = random_vector(rng, 1.0);
    CHECK((transform_point(compose(a, b), p) - transform_point(a, transform_point(b, p)))
              .norm() < 1e-12);
    const Pose id = compose(a, inverse(a));
    CHECK(id.t.norm() < 1e-12);
    CHECK(geodesic_angle(id.q, UnitQuaternion::identity()) < 1e-12);
  }
}

TEST_CASE("intrinsics validation") {
  CameraIntrinsics bad = kIntr;
  bad.fx = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = kIntr;
  bad.cx = 650;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_NOTHROW(kIntr.validate());
}

}  // TEST_SUITE
