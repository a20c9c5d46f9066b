#include "rigcal/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace rigcal {

namespace {

// Below this angle the exp/log coefficients are evaluated by Taylor series.
constexpr double kSeriesAngle = 1e-2;
constexpr double kLogSeriesAngle = 1e-1;

}  // namespace

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kAngleNearPi: return "AngleNearPi";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kMalformedJson: return "MalformedJson";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kNonContiguousIds: return "NonContiguousIds";
    case ErrorCode::kNotARotation: return "NotARotation";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kCameraOutsideScene: return "CameraOutsideScene";
    case ErrorCode::kNoValidPixels: return "NoValidPixels";
    case ErrorCode::kDegenerateProblem: return "DegenerateProblem";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kSingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kEmptyVariant: return "EmptyVariant";
  }
  return "Unknown";
}

Mat3 hat(const Vec3& a) {
  Mat3 m;
  m << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return m;
}

Rotation Rotation::nearest(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return Rotation(u * v.transpose());
}

Rotation Rotation::checked(const Mat3& m, double tol) {
  if (!m.allFinite()) throw Error(ErrorCode::kNotARotation, "matrix has non-finite entries");
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (ortho > tol || std::abs(det - 1.0) > tol) {
    throw Error(ErrorCode::kNotARotation,
                "orthonormality error " + std::to_string(ortho) + ", det " + std::to_string(det));
  }
  return nearest(m);
}

Rotation Rotation::axis_angle(const Vec3& axis, double angle) {
  return exp_se3({axis.normalized() * angle, Vec3::Zero()}).rotation;
}

double Rotation::angle() const {
  const Vec3 w(m_(2, 1) - m_(1, 2), m_(0, 2) - m_(2, 0), m_(1, 0) - m_(0, 1));
  return std::atan2(0.5 * w.norm(), 0.5 * (m_.trace() - 1.0));
}

double Rotation::orthonormality_error() const {
  const double ortho = (m_.transpose() * m_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(m_.determinant() - 1.0));
}

RigidTransform RigidTransform::inverse() const {
  const Rotation rt = rotation.inverse();
  return {rt, -(rt * translation)};
}

Eigen::Matrix4d RigidTransform::homogeneous() const {
  Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
  h.topLeftCorner<3, 3>() = rotation.matrix();
  h.topRightCorner<3, 1>() = translation;
  return h;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

RigidTransform relative_transform(const RigidTransform& t_i, const RigidTransform& t_j) {
  return compose(t_j, t_i.inverse());
}

RigidTransform exp_se3(const TangentVector& xi) {
  const double theta = xi.omega.norm();
  const Mat3 w = hat(xi.omega);
  const Mat3 w2 = w * w;
  const double t2 = theta * theta;
  double a, b, c;
  if (theta < kSeriesAngle) {
    // Closed forms cancel badly here; the series are exact to double precision.
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    const double half = std::sin(0.5 * theta) / (0.5 * theta);
    a = std::sin(theta) / theta;
    b = 0.5 * half * half;
    c = (theta - std::sin(theta)) / (t2 * theta);
  }
  const Mat3 r = Mat3::Identity() + a * w + b * w2;
  const Mat3 v = Mat3::Identity() + b * w + c * w2;
  return {Rotation::from_matrix_unchecked(r), v * xi.v};
}

TangentVector log_se3(const RigidTransform& t) {
  const Mat3& r = t.rotation.matrix();
  const Vec3 axis_sin(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double theta = std::atan2(0.5 * axis_sin.norm(), 0.5 * (r.trace() - 1.0));
  if (theta >= kLogAngleLimit) {
    throw Error(ErrorCode::kAngleNearPi, "rotation angle " + std::to_string(theta) + " rad");
  }
  Vec3 omega;
  Mat3 v_inv;
  if (theta < kSmallAngle) {
    omega = 0.5 * axis_sin;
    const Mat3 w = hat(omega);
    v_inv = Mat3::Identity() - 0.5 * w + (w * w) / 12.0;
  } else {
    omega = (theta / (2.0 * std::sin(theta))) * axis_sin;
    const Mat3 w = hat(omega);
    const double t2 = theta * theta;
    const double coeff = theta < kLogSeriesAngle
                             ? 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0
                             : (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / t2;
    v_inv = Mat3::Identity() - 0.5 * w + coeff * (w * w);
  }
  return {omega, v_inv * t.translation};
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::kInvalidArgument, "principal point outside the image");
  }
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), is_valid));
}

Pixel project(const CameraIntrinsics& k, const Vec3& x) {
  if (x.z() <= kMinProjectDepth) {
    throw Error(ErrorCode::kBehindCamera, "point z = " + std::to_string(x.z()));
  }
  return {k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
}

Vec3 backproject(const CameraIntrinsics& k, const Pixel& u, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw Error(ErrorCode::kNonPositiveDepth, "depth = " + std::to_string(depth));
  }
  return {(u.u - k.cx) * depth / k.fx, (u.v - k.cy) * depth / k.fy, depth};
}

std::optional<DepthSample> sample_depth_with_gradient(const DepthMap& d, const Pixel& u) {
  if (!in_bounds(u, d.width, d.height)) return std::nullopt;
  int x0 = static_cast<int>(std::floor(u.u));
  int y0 = static_cast<int>(std::floor(u.v));
  // The last row/column is handled by the cell to its left/top with weight 1.
  if (x0 > d.width - 2) x0 = std::max(d.width - 2, 0);
  if (y0 > d.height - 2) y0 = std::max(d.height - 2, 0);
  const int x1 = std::min(x0 + 1, d.width - 1);
  const int y1 = std::min(y0 + 1, d.height - 1);
  const double a = u.u - x0;
  const double b = u.v - y0;

  const float d00 = d.at(x0, y0);
  const float d10 = d.at(x1, y0);
  const float d01 = d.at(x0, y1);
  const float d11 = d.at(x1, y1);
  if (!DepthMap::is_valid(d00) || !DepthMap::is_valid(d10) || !DepthMap::is_valid(d01) ||
      !DepthMap::is_valid(d11)) {
    return std::nullopt;
  }
  DepthSample s;
  s.depth = (1.0 - a) * (1.0 - b) * d00 + a * (1.0 - b) * d10 + (1.0 - a) * b * d01 + a * b * d11;
  s.gradient.x() = (1.0 - b) * (double(d10) - d00) + b * (double(d11) - d01);
  s.gradient.y() = (1.0 - a) * (double(d01) - d00) + a * (double(d11) - d10);
  return s;
}

std::optional<double> sample_depth(const DepthMap& d, const Pixel& u) {
  const auto s = sample_depth_with_gradient(d, u);
  if (!s) return std::nullopt;
  return s->depth;
}

}  // namespace rigcal
