#include "flowtrack/geometry.hpp"

#include <cmath>

namespace flowtrack {

namespace {
constexpr double kSmallAngle = 1e-8;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("camera intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("camera intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw std::invalid_argument("camera intrinsics: principal point outside image");
  }
}

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z)
    : w_(w), x_(x), y_(y), z_(z) {
  normalize();
}

void UnitQuaternion::normalize() {
  const double n = std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_);
  if (!std::isfinite(n) || n < 1e-12) {
    throw std::invalid_argument("quaternion: cannot normalize near-zero norm");
  }
  w_ /= n;
  x_ /= n;
  y_ /= n;
  z_ /= n;
}

double UnitQuaternion::norm() const {
  return std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_);
}

UnitQuaternion UnitQuaternion::from_rotation_vector(const Vec3& theta) {
  const double angle = theta.norm();
  double w = 0.0;
  double s = 0.0;  // sin(angle/2) / angle
  if (angle < kSmallAngle) {
    w = 1.0 - angle * angle / 8.0;
    s = 0.5 - angle * angle / 48.0;
  } else {
    w = std::cos(0.5 * angle);
    s = std::sin(0.5 * angle) / angle;
  }
  return UnitQuaternion(w, s * theta.x(), s * theta.y(), s * theta.z());
}

Vec3 UnitQuaternion::to_rotation_vector() const {
  // Principal branch: flip to the w >= 0 hemisphere first.
  const UnitQuaternion q = canonical();
  const Vec3 v(q.x_, q.y_, q.z_);
  const double s = v.norm();
  if (s < kSmallAngle) {
    return 2.0 / q.w_ * v;
  }
  const double angle = 2.0 * std::atan2(s, q.w_);
  return (angle / s) * v;
}

UnitQuaternion UnitQuaternion::canonical() const {
  if (w_ < 0.0) {
    return UnitQuaternion(-w_, -x_, -y_, -z_, NoNormalize{});
  }
  return *this;
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& r) const {
  return UnitQuaternion(
      w_ * r.w_ - x_ * r.x_ - y_ * r.y_ - z_ * r.z_,
      w_ * r.x_ + x_ * r.w_ + y_ * r.z_ - z_ * r.y_,
      w_ * r.y_ - x_ * r.z_ + y_ * r.w_ + z_ * r.x_,
      w_ * r.z_ + x_ * r.y_ - y_ * r.x_ + z_ * r.w_);
}

Vec3 UnitQuaternion::rotate(const Vec3& v) const {
  // v' = v + 2w (u x v) + 2 u x (u x v), u = (x, y, z)
  const Vec3 u(x_, y_, z_);
  const Vec3 uv = u.cross(v);
  return v + 2.0 * (w_ * uv + u.cross(uv));
}

Mat3 UnitQuaternion::rotation_matrix() const {
  Mat3 m;
  const double ww = w_ * w_, xx = x_ * x_, yy = y_ * y_, zz = z_ * z_;
  m << ww + xx - yy - zz, 2.0 * (x_ * y_ - w_ * z_), 2.0 * (x_ * z_ + w_ * y_),
      2.0 * (x_ * y_ + w_ * z_), ww - xx + yy - zz, 2.0 * (y_ * z_ - w_ * x_),
      2.0 * (x_ * z_ - w_ * y_), 2.0 * (y_ * z_ + w_ * x_), ww - xx - yy + zz;
  return m;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Vec2 project(const Vec3& p, const CameraIntrinsics& intr) {
  if (!(p.z() > 0.0)) {
    throw std::domain_error("project: depth must be positive");
  }
  return Vec2(intr.cx + p.x() / p.z() * intr.fx, intr.cy + p.y() / p.z() * intr.fy);
}

Vec3 backproject(double u, double v, double d, const CameraIntrinsics& intr) {
  if (!(d > 0.0)) {
    throw std::domain_error("backproject: depth must be positive");
  }
  return Vec3((u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d);
}

Mat26 flow_jacobian_row(double u, double v, double d, const CameraIntrinsics& intr,
                        double dt) {
  if (!(d > 0.0)) {
    throw std::domain_error("flow_jacobian_row: depth must be positive");
  }
  if (!(dt > 0.0)) {
    throw std::domain_error("flow_jacobian_row: dt must be positive");
  }
  const double ub = u - intr.cx;
  const double vb = v - intr.cy;
  const double fx = intr.fx;
  const double fy = intr.fy;

  Mat26 j;
  // Columns 0..2: v_o.  Columns 3..5: omega.
  j(0, 0) = fx / d;
  j(0, 1) = 0.0;
  j(0, 2) = -ub / d;
  j(0, 3) = -ub * vb / fy;
  j(0, 4) = (fx * fx + ub * ub) / fx;
  j(0, 5) = -vb * fx / fy;

  j(1, 0) = 0.0;
  j(1, 1) = fy / d;
  j(1, 2) = -vb / d;
  j(1, 3) = -(fy * fy + vb * vb) / fy;
  j(1, 4) = ub * vb / fx;
  j(1, 5) = ub * fy / fx;

  return j * dt;
}

Mat4 quat_transition(const Vec3& omega, double dt) {
  if (!(dt > 0.0)) {
    throw std::domain_error("quat_transition: dt must be positive");
  }
  const UnitQuaternion dq = UnitQuaternion::from_rotation_vector(omega * dt);
  // Left-multiplication matrix of dq on scalar-first coefficients.
  Mat4 m;
  const double w = dq.w(), x = dq.x(), y = dq.y(), z = dq.z();
  m << w, -x, -y, -z,
       x, w, -z, y,
       y, z, w, -x,
       z, -y, x, w;
  return m;
}

UnitQuaternion integrate_rotation(const UnitQuaternion& q, const Vec3& omega, double dt) {
  return UnitQuaternion::from_rotation_vector(omega * dt) * q;
}

double geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b) {
  const UnitQuaternion rel = a * b.conjugate();
  const double s = std::sqrt(rel.x() * rel.x() + rel.y() * rel.y() + rel.z() * rel.z());
  return 2.0 * std::atan2(s, std::abs(rel.w()));
}

Vec3 transform_point(const Pose& pose, const Vec3& p) {
  return pose.q.rotate(p) + pose.t;
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.q.rotate(b.t) + a.t, a.q * b.q};
}

Pose inverse(const Pose& pose) {
  const UnitQuaternion qi = pose.q.conjugate();
  return Pose{-qi.rotate(pose.t), qi};
}

Pose twist_step(const Twist& twist, double dt) {
  const Vec3 theta = twist.omega * dt;
  const Vec3 rho = twist.v_o * dt;
  const double angle = theta.norm();

  // Left jacobian of SO(3): translation part of the SE(3) exponential.
  Mat3 vmat;
  const Mat3 th = skew(theta);
  if (angle < kSmallAngle) {
    vmat = Mat3::Identity() + 0.5 * th + th * th / 6.0;
  } else {
    const double a2 = angle * angle;
    vmat = Mat3::Identity() + (1.0 - std::cos(angle)) / a2 * th +
           (angle - std::sin(angle)) / (a2 * angle) * th * th;
  }
  return Pose{vmat * rho, UnitQuaternion::from_rotation_vector(theta)};
}

}  // namespace flowtrack
