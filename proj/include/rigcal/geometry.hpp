#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rigcal/error.hpp"

namespace rigcal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Skew-symmetric matrix such that hat(a) * b == a.cross(b).
Mat3 hat(const Vec3& a);

/// Element of SO(3), stored as a 3x3 matrix.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Wraps a matrix that is already a rotation (no checks).
  static Rotation from_matrix_unchecked(const Mat3& m) { return Rotation(m); }

  /// Nearest rotation in the Frobenius sense (polar decomposition). Used to
  /// remove drift after repeated composition.
  static Rotation nearest(const Mat3& m);

  /// Validates orthonormality and det = +1 within `tol` per entry; if the
  /// matrix passes, it is projected onto SO(3). Throws kNotARotation otherwise.
  static Rotation checked(const Mat3& m, double tol);

  /// Rotation by `angle` radians about a (not necessarily unit) axis.
  static Rotation axis_angle(const Vec3& axis, double angle);

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vec3 operator*(const Vec3& x) const { return m_ * x; }

  /// Geodesic angle in radians, in [0, pi].
  double angle() const;

  /// Max per-entry deviation of R^T R from identity and of det(R) from 1.
  double orthonormality_error() const;

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

/// Rigid transform x -> R x + t. Extrinsics map world to camera coordinates.
struct RigidTransform {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  Vec3 operator*(const Vec3& x) const { return apply(x); }

  RigidTransform inverse() const;
  Eigen::Matrix4d homogeneous() const;

  /// Camera center in the source frame (the point mapped to the origin).
  Vec3 center() const { return -(rotation.matrix().transpose() * translation); }
};

/// (a * b)(x) == a(b(x)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}
inline RigidTransform inverse(const RigidTransform& t) { return t.inverse(); }

/// T_ji = T_j * T_i^-1: maps camera-i coordinates to camera-j coordinates.
RigidTransform relative_transform(const RigidTransform& t_i, const RigidTransform& t_j);

/// se(3) coordinates: rotation part first, then translation part.
struct TangentVector {
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  static TangentVector from_vector(const Eigen::Matrix<double, 6, 1>& xi) {
    return {xi.head<3>(), xi.tail<3>()};
  }
  Eigen::Matrix<double, 6, 1> to_vector() const {
    Eigen::Matrix<double, 6, 1> out;
    out << omega, v;
    return out;
  }
};

inline constexpr double kSmallAngle = 1e-8;
inline constexpr double kLogAngleLimit = 3.14159265358979323846 - 1e-6;

RigidTransform exp_se3(const TangentVector& xi);

/// Throws kAngleNearPi when the rotation angle is >= pi - 1e-6.
TangentVector log_se3(const RigidTransform& t);

/// Pinhole intrinsics. Integer pixel coordinates are pixel centers.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws kInvalidArgument on fx/fy <= 0, non-positive size, or a
  /// principal point outside [0, width) x [0, height).
  void validate() const;
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

inline bool in_bounds(const Pixel& p, int width, int height) {
  return p.u >= 0.0 && p.v >= 0.0 && p.u <= width - 1 && p.v <= height - 1;
}

/// Row-major float depth grid in meters, row 0 at the top. A value is valid
/// iff it is finite and strictly positive.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  static bool is_valid(float d) { return std::isfinite(d) && d > 0.0f; }
  bool valid_at(int x, int y) const { return is_valid(at(x, y)); }
  std::size_t valid_count() const;
};

inline constexpr double kMinProjectDepth = 1e-9;

/// Throws kBehindCamera if x_cam.z <= 1e-9.
Pixel project(const CameraIntrinsics& k, const Vec3& x_cam);

/// Throws kNonPositiveDepth if depth is not a positive finite number.
Vec3 backproject(const CameraIntrinsics& k, const Pixel& u, double depth);

/// Bilinear interpolation over the four neighbouring pixel centers. Empty when
/// `u` is out of bounds or any neighbour is invalid.
std::optional<double> sample_depth(const DepthMap& d, const Pixel& u);

/// Bilinear sample plus its gradient with respect to (u, v) inside the cell.
struct DepthSample {
  double depth = 0.0;
  Vec2 gradient = Vec2::Zero();
};
std::optional<DepthSample> sample_depth_with_gradient(const DepthMap& d, const Pixel& u);

}  // namespace rigcal
