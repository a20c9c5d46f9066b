#include <gtest/gtest.h>

#include <numbers>

#include "rigcal/geometry.hpp"
#include "test_support.hpp"

namespace rigcal {
namespace {

using testing::max_abs_diff;
using testing::random_transform;
using testing::random_unit;

constexpr double kPi = std::numbers::pi;

// Quaternion-based SE(3) exponential written independently of the library:
// rotation from the unit quaternion, translation V*v with V integrated by
// Simpson's rule over R(s*omega), s in [0, 1].
struct Quat {
  double w, x, y, z;
};

Quat quat_from_rotvec(const Vec3& w) {
  const double th = w.norm();
  if (th == 0.0) return {1, 0, 0, 0};
  const Vec3 a = w / th;
  return {std::cos(th / 2), a.x() * std::sin(th / 2), a.y() * std::sin(th / 2), a.z() * std::sin(th / 2)};
}

Mat3 quat_matrix(const Quat& q) {
  Mat3 m;
  m << 1 - 2 * (q.y * q.y + q.z * q.z), 2 * (q.x * q.y - q.w * q.z), 2 * (q.x * q.z + q.w * q.y),
      2 * (q.x * q.y + q.w * q.z), 1 - 2 * (q.x * q.x + q.z * q.z), 2 * (q.y * q.z - q.w * q.x),
      2 * (q.x * q.z - q.w * q.y), 2 * (q.y * q.z + q.w * q.x), 1 - 2 * (q.x * q.x + q.y * q.y);
  return m;
}

RigidTransform oracle_exp(const Vec3& omega, const Vec3& v) {
  const int n = 2000;
  Mat3 v_mat = Mat3::Zero();
  for (int i = 0; i <= n; ++i) {
    const double s = static_cast<double>(i) / n;
    const double c = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    v_mat += c * quat_matrix(quat_from_rotvec(s * omega));
  }
  v_mat /= 3.0 * n;
  return {Rotation::from_matrix_unchecked(quat_matrix(quat_from_rotvec(omega))), v_mat * v};
}

TangentVector random_xi(Rng& rng, double angle) {
  const Vec3 axis = random_unit(rng);
  return {angle * axis, testing::random_vec(rng, 1.5)};
}

TEST(ExpSe3, ZeroIsExactIdentity) {
  const RigidTransform t = exp_se3({});
  EXPECT_EQ(t.rotation.matrix(), Mat3::Identity());
  EXPECT_EQ(t.translation, Vec3::Zero());
}

TEST(ExpSe3, QuarterTurnAboutZ) {
  const RigidTransform t = exp_se3({Vec3(0, 0, kPi / 2), Vec3::Zero()});
  EXPECT_LT((t.rotation * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm(), 1e-15);
  EXPECT_LT(t.translation.norm(), 1e-15);
}

TEST(ExpSe3, MatchesQuaternionOracle) {
  Rng rng(11);
  for (int n = 0; n < 50; ++n) {
    const double angle = rng.uniform(0.0, 3.0);
    const TangentVector xi = random_xi(rng, angle);
    const RigidTransform a = exp_se3(xi);
    const RigidTransform b = oracle_exp(xi.omega, xi.v);
    EXPECT_LT(max_abs_diff(a.rotation.matrix(), b.rotation.matrix()), 1e-12);
    EXPECT_LT(max_abs_diff(a.translation, b.translation), 1e-9);
  }
}

TEST(ExpSe3, AccurateAcrossSmallAngles) {
  const Vec3 axis = Vec3(-0.2, 0.9, 0.4).normalized();
  const Vec3 v(1.0, -0.5, 0.25);
  for (double e = -10.0; e <= -0.5; e += 0.125) {
    const double angle = std::pow(10.0, e);
    const RigidTransform a = exp_se3({angle * axis, v});
    const RigidTransform b = oracle_exp(angle * axis, v);
    EXPECT_LT(max_abs_diff(a.rotation.matrix(), b.rotation.matrix()), 1e-14) << angle;
    EXPECT_LT(max_abs_diff(a.translation, b.translation), 1e-13) << angle;
    const auto back = log_se3(a).to_vector();
    EXPECT_LT((back.head<3>() - angle * axis).norm(), 1e-14 + 1e-12 * angle) << angle;
    EXPECT_LT((back.tail<3>() - v).norm(), 1e-13) << angle;
  }
}

TEST(LogSe3, IdentityIsZero) {
  const TangentVector xi = log_se3(RigidTransform::identity());
  EXPECT_EQ(xi.to_vector(), (Eigen::Matrix<double, 6, 1>::Zero()));
}

TEST(LogSe3, RoundTripAgainstOracle) {
  Rng rng(12);
  for (double angle : {0.3, 0.5}) {
    for (int n = 0; n < 50; ++n) {
      const TangentVector xi = random_xi(rng, angle);
      const TangentVector back = log_se3(oracle_exp(xi.omega, xi.v));
      EXPECT_LT(max_abs_diff(back.to_vector(), xi.to_vector()), 1e-9) << "angle " << angle;
    }
  }
}

TEST(LogSe3, RoundTripUpToThreeRadians) {
  Rng rng(13);
  for (int n = 0; n < 1000; ++n) {
    const double angle = rng.uniform(0.0, 3.0);
    const TangentVector xi = random_xi(rng, angle);
    const TangentVector back = log_se3(exp_se3(xi));
    ASSERT_LT(max_abs_diff(back.to_vector(), xi.to_vector()), 1e-9);
  }
}

TEST(LogSe3, HalfTurnIsRejected) {
  const RigidTransform t{Rotation::axis_angle(Vec3(0, 1, 0), kPi), Vec3(1, 2, 3)};
  try {
    log_se3(t);
    FAIL() << "expected AngleNearPi";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAngleNearPi);
  }
  EXPECT_NO_THROW(log_se3({Rotation::axis_angle(Vec3(0, 1, 0), kPi - 1e-3), Vec3::Zero()}));
}

TEST(Compose, IdentityAndInverse) {
  Rng rng(14);
  for (int n = 0; n < 100; ++n) {
    const RigidTransform t = random_transform(rng);
    EXPECT_LT(max_abs_diff(compose(t, RigidTransform::identity()).homogeneous(), t.homogeneous()), 1e-15);
    EXPECT_LT(max_abs_diff(compose(t, inverse(t)).homogeneous(), Eigen::Matrix4d::Identity()), 1e-9);
    EXPECT_LT(max_abs_diff(compose(inverse(t), t).homogeneous(), Eigen::Matrix4d::Identity()), 1e-9);
  }
}

TEST(Compose, MatchesHomogeneousProduct) {
  Rng rng(15);
  for (int n = 0; n < 100; ++n) {
    const RigidTransform a = random_transform(rng);
    const RigidTransform b = random_transform(rng);
    Eigen::Matrix4d ha = Eigen::Matrix4d::Identity();
    Eigen::Matrix4d hb = Eigen::Matrix4d::Identity();
    ha.topLeftCorner<3, 3>() = a.rotation.matrix();
    ha.topRightCorner<3, 1>() = a.translation;
    hb.topLeftCorner<3, 3>() = b.rotation.matrix();
    hb.topRightCorner<3, 1>() = b.translation;
    EXPECT_LT(max_abs_diff(compose(a, b).homogeneous(), ha * hb), 1e-12);
    const Vec3 x = testing::random_vec(rng, 5.0);
    EXPECT_LT((compose(a, b).apply(x) - a.apply(b.apply(x))).norm(), 1e-12);
  }
}

TEST(RelativeTransform, TrivialCases) {
  Rng rng(16);
  const RigidTransform t = random_transform(rng);
  EXPECT_LT(max_abs_diff(relative_transform(t, t).homogeneous(), Eigen::Matrix4d::Identity()), 1e-12);
  EXPECT_LT(max_abs_diff(relative_transform(RigidTransform::identity(), t).homogeneous(), t.homogeneous()), 1e-15);
}

TEST(RelativeTransform, MapsCameraIToCameraJ) {
  Rng rng(17);
  const RigidTransform ti = random_transform(rng);
  const RigidTransform tj = random_transform(rng);
  const RigidTransform tji = relative_transform(ti, tj);
  for (int n = 0; n < 100; ++n) {
    const Vec3 x = testing::random_vec(rng, 5.0);
    EXPECT_LT((tji.apply(ti.apply(x)) - tj.apply(x)).norm(), 1e-9);
  }
}

TEST(RelativeTransform, ChainIdentity) {
  Rng rng(18);
  for (int n = 0; n < 200; ++n) {
    const RigidTransform ti = random_transform(rng);
    const RigidTransform tj = random_transform(rng);
    const RigidTransform tk = random_transform(rng);
    const RigidTransform chain = compose(relative_transform(tj, tk), relative_transform(ti, tj));
    EXPECT_LT(max_abs_diff(chain.homogeneous(), relative_transform(ti, tk).homogeneous()), 1e-9);
  }
}

TEST(RotationProperty, OrthonormalAfterManyCompositions) {
  Rng rng(19);
  Rotation r;
  for (int n = 0; n < 10000; ++n) {
    const Vec3 axis = random_unit(rng);
    r = Rotation::nearest((Rotation::axis_angle(axis, rng.uniform(0.0, kPi)) * r).matrix());
  }
  const Mat3 m = r.matrix();
  EXPECT_LT(max_abs_diff(m.transpose() * m, Mat3::Identity()), 1e-6);
  EXPECT_NEAR(m.determinant(), 1.0, 1e-6);
  EXPECT_LT(r.orthonormality_error(), 1e-9);
}

TEST(RotationProperty, CheckedRejectsReflection) {
  Mat3 m = Mat3::Identity();
  m(2, 2) = -1.0;
  try {
    Rotation::checked(m, 1e-6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotARotation);
  }
}

TEST(RotationProperty, AngleMatchesAxisAngle) {
  Rng rng(20);
  for (int n = 0; n < 100; ++n) {
    const double a = rng.uniform(0.0, kPi);
    EXPECT_NEAR(Rotation::axis_angle(random_unit(rng), a).angle(), a, 1e-12);
  }
}

const CameraIntrinsics kK{500, 500, 320, 240, 640, 480};

TEST(Project, PrincipalRay) {
  const Pixel p = project(kK, Vec3(0, 0, 2));
  EXPECT_EQ(p.u, 320.0);
  EXPECT_EQ(p.v, 240.0);
}

TEST(Project, HandArithmetic) {
  // u = 500 * 0.5 / 2 + 320, v = 500 * -0.2 / 2 + 240.
  const Pixel p = project(kK, Vec3(0.5, -0.2, 2.0));
  EXPECT_NEAR(p.u, 445.0, 1e-12);
  EXPECT_NEAR(p.v, 190.0, 1e-12);
}

TEST(Project, BehindCamera) {
  for (double z : {-1.0, 0.0, 1e-10}) {
    try {
      project(kK, Vec3(0, 0, z));
      FAIL() << z;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
    }
  }
}

TEST(Backproject, Examples) {
  EXPECT_LT((backproject(kK, {320, 240}, 2.0) - Vec3(0, 0, 2)).norm(), 1e-15);
  EXPECT_LT((backproject(kK, {445, 190}, 2.0) - Vec3(0.5, -0.2, 2.0)).norm(), 1e-12);
  for (double d : {0.0, -1.0, std::nan("")}) {
    try {
      backproject(kK, {1, 1}, d);
      FAIL() << d;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kNonPositiveDepth);
    }
  }
}

TEST(Backproject, ProjectRoundTripProperty) {
  Rng rng(21);
  for (int n = 0; n < 1000; ++n) {
    CameraIntrinsics k{0, 0, 0, 0, 1280, 960};
    k.fx = rng.uniform(100, 1500);
    k.fy = rng.uniform(100, 1500);
    k.cx = rng.uniform(0, 1279);
    k.cy = rng.uniform(0, 959);
    const double z = rng.uniform(0.5, 10.0);
    const double sx = rng.uniform(-2, 2);
    const double sy = rng.uniform(-2, 2);
    const Vec3 x(sx * z, sy * z, z);
    const Vec3 back = backproject(k, project(k, x), x.z());
    ASSERT_LT((back - x).norm(), 1e-9 * x.norm());
  }
}

TEST(Intrinsics, Validate) {
  EXPECT_NO_THROW(kK.validate());
  for (CameraIntrinsics bad : {CameraIntrinsics{0, 500, 320, 240, 640, 480}, CameraIntrinsics{500, -1, 320, 240, 640, 480},
                               CameraIntrinsics{500, 500, 640, 240, 640, 480}, CameraIntrinsics{500, 500, 320, -1, 640, 480},
                               CameraIntrinsics{500, 500, 0, 0, 0, 480}}) {
    EXPECT_THROW(bad.validate(), Error);
  }
}

DepthMap two_by_two() {
  DepthMap d(2, 2);
  d.at(0, 0) = 1;
  d.at(1, 0) = 2;
  d.at(0, 1) = 3;
  d.at(1, 1) = 4;
  return d;
}

TEST(SampleDepth, Examples) {
  const DepthMap d = two_by_two();
  EXPECT_EQ(sample_depth(d, {0.5, 0.5}).value(), 2.5);
  EXPECT_EQ(sample_depth(d, {0, 0}).value(), 1.0);
  EXPECT_EQ(sample_depth(d, {1, 1}).value(), 4.0);
  EXPECT_EQ(sample_depth(d, {1, 0}).value(), 2.0);
  EXPECT_FALSE(sample_depth(d, {-0.1, 0}).has_value());
  EXPECT_FALSE(sample_depth(d, {0, 1.0001}).has_value());
}

TEST(SampleDepth, InvalidNeighbourInvalidates) {
  DepthMap d(3, 1, 2.0f);
  d.at(2, 0) = std::nanf("");
  EXPECT_TRUE(sample_depth(d, {0.5, 0}).has_value());
  EXPECT_FALSE(sample_depth(d, {1.5, 0}).has_value());
  d.at(2, 0) = 0.0f;
  EXPECT_FALSE(sample_depth(d, {1.5, 0}).has_value());
  EXPECT_FALSE(sample_depth(d, {2, 0}).has_value());
}

TEST(SampleDepth, ExactOnAffineDepth) {
  // Bilinear interpolation reproduces any affine function of (u, v) exactly.
  DepthMap d(7, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) d.at(x, y) = static_cast<float>(2.0 + 0.25 * x - 0.125 * y);
  Rng rng(22);
  for (int n = 0; n < 1000; ++n) {
    const double u = rng.uniform(0, 6);
    const Pixel p{u, rng.uniform(0, 4)};
    const auto s = sample_depth_with_gradient(d, p);
    ASSERT_TRUE(s);
    EXPECT_NEAR(s->depth, 2.0 + 0.25 * p.u - 0.125 * p.v, 1e-12);
    EXPECT_NEAR(s->gradient.x(), 0.25, 1e-12);
    EXPECT_NEAR(s->gradient.y(), -0.125, 1e-12);
    EXPECT_EQ(s->depth, sample_depth(d, p).value());
  }
}

}  // namespace
}  // namespace rigcal
