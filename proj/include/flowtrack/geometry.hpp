#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <stdexcept>

namespace flowtrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

/// Pinhole camera model: fx, fy focal lengths and (cx, cy) principal point in
/// pixels, for an image of width x height pixels.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument if fx/fy are non-positive or the principal
  /// point lies outside the image.
  void validate() const;

  /// True when the real-valued pixel lies in [0, width) x [0, height).
  bool contains(double u, double v) const {
    return u >= 0.0 && u < static_cast<double>(width) && v >= 0.0 &&
           v < static_cast<double>(height);
  }
};

/// Unit quaternion in scalar-first (w, x, y, z) storage. The constructor and
/// every operation renormalize, so |q| = 1 holds after any public call.
/// q and -q denote the same rotation.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;

  /// Builds from scalar-first components and normalizes. Throws
  /// std::invalid_argument on a (near-)zero or non-finite norm.
  UnitQuaternion(double w, double x, double y, double z);

  static UnitQuaternion identity() { return UnitQuaternion(); }

  /// Exponential map: rotation by |theta| radians about theta/|theta|.
  static UnitQuaternion from_rotation_vector(const Vec3& theta);

  /// Logarithm map, principal branch: returns the rotation vector with
  /// magnitude in [0, pi]. Inverse of from_rotation_vector for angles < pi.
  Vec3 to_rotation_vector() const;

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  /// Components as (w, x, y, z).
  Vec4 wxyz() const { return Vec4(w_, x_, y_, z_); }

  /// Hamilton product.
  UnitQuaternion operator*(const UnitQuaternion& rhs) const;

  UnitQuaternion conjugate() const { return UnitQuaternion(w_, -x_, -y_, -z_, NoNormalize{}); }

  /// Rotates a vector: q * (0, v) * q^-1.
  Vec3 rotate(const Vec3& v) const;

  Mat3 rotation_matrix() const;

  double norm() const;

  /// Returns the representative with w >= 0 (same rotation).
  UnitQuaternion canonical() const;

 private:
  struct NoNormalize {};
  UnitQuaternion(double w, double x, double y, double z, NoNormalize)
      : w_(w), x_(x), y_(y), z_(z) {}
  void normalize();

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

/// Rigid pose of the object expressed in the camera frame (object-in-camera):
/// a point p_obj maps to q.rotate(p_obj) + t.
struct Pose {
  Vec3 t = Vec3::Zero();
  UnitQuaternion q;
};

/// 6D rigid-body velocity in the camera frame. v_o is the velocity of the
/// body-fixed point instantaneously coincident with the camera origin; omega
/// is the angular velocity. The velocity field is vel(p) = v_o + omega x p.
struct Twist {
  Vec3 v_o = Vec3::Zero();
  Vec3 omega = Vec3::Zero();

  Vec6 vector() const {
    Vec6 out;
    out << v_o, omega;
    return out;
  }
  static Twist from_vector(const Vec6& x) { return Twist{x.head<3>(), x.tail<3>()}; }
};

Mat3 skew(const Vec3& v);

/// Pinhole projection of a camera-frame point (x, y, d) to real-valued pixel
/// coordinates. Throws std::domain_error when d <= 0. The result may fall
/// outside the image; callers clamp or filter.
Vec2 project(const Vec3& p, const CameraIntrinsics& intr);

/// Inverse of project at known depth d > 0.
Vec3 backproject(double u, double v, double d, const CameraIntrinsics& intr);

/// 2x6 row block of the flow measurement jacobian for one pixel: maps a twist
/// (v_o, omega) to the expected flow displacement in pixels over dt seconds.
/// Throws std::domain_error for non-positive depth or dt.
Mat26 flow_jacobian_row(double u, double v, double d, const CameraIntrinsics& intr,
                        double dt);

/// 4x4 transition matrix acting on scalar-first quaternion coefficients:
/// wxyz_k = quat_transition(omega, dt) * wxyz_{k-1} rotates by |omega|*dt
/// about omega/|omega| (closed-form exponential; identity for omega = 0).
Mat4 quat_transition(const Vec3& omega, double dt);

/// Integrates the orientation one step: exp(omega * dt) * q.
UnitQuaternion integrate_rotation(const UnitQuaternion& q, const Vec3& omega, double dt);

/// Angle of the relative rotation between two orientations, in [0, pi].
/// Symmetric and invariant to sign flips of either argument.
double geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b);

Vec3 transform_point(const Pose& pose, const Vec3& p);
Pose compose(const Pose& a, const Pose& b);  // (a*b): apply b first, then a
Pose inverse(const Pose& pose);

/// Exact SE(3) step under a constant camera-frame twist: returns the rigid
/// transform D such that a body point p moves to D(p) after dt seconds of
/// motion with velocity field v_o + omega x p.
Pose twist_step(const Twist& twist, double dt);

}  // namespace flowtrack
