#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <numbers>

#include "rigcal/dataset.hpp"
#include "rigcal/metrics.hpp"
#include "rigcal/simulator.hpp"
#include "test_support.hpp"

namespace rigcal {
namespace {

using namespace rigcal::sim;

Scene cluttered_scene() {
  Scene s;
  s.spheres.push_back({Vec3(1.0, 0.8, 0.6), 0.5});
  s.spheres.push_back({Vec3(-1.5, -1.2, 1.8), 0.35});
  s.boxes.push_back({Vec3(-2.5, 0.5, 0.0), Vec3(-1.5, 1.5, 1.0)});
  s.boxes.push_back({Vec3(0.5, -2.0, 0.0), Vec3(1.5, -1.0, 0.7)});
  return s;
}

// Signed distance to the nearest surface, positive in free space.
double scene_sdf(const Scene& s, const Vec3& p) {
  const Vec3 to_min = p - s.room.min;
  const Vec3 to_max = s.room.max - p;
  double d = std::min(to_min.minCoeff(), to_max.minCoeff());
  for (const auto& sp : s.spheres) d = std::min(d, (p - sp.center).norm() - sp.radius);
  for (const auto& b : s.boxes) {
    const Vec3 c = 0.5 * (b.min + b.max);
    const Vec3 h = 0.5 * (b.max - b.min);
    const Vec3 q = (p - c).cwiseAbs() - h;
    const double outside = q.cwiseMax(0.0).norm();
    const double inside = std::min(q.maxCoeff(), 0.0);
    d = std::min(d, outside + inside);
  }
  return d;
}

std::optional<double> march(const Scene& s, const Vec3& o, const Vec3& dir) {
  double t = 0.0;
  for (int i = 0; i < 200000 && t < 100.0; ++i) {
    const double d = scene_sdf(s, o + t * dir);
    if (d < 1e-9) return t;
    t += d;
  }
  return std::nullopt;
}

TEST(CastRay, AxisAlignedWall) {
  const Scene s;
  const auto d = cast_ray(s, Vec3(0, 0, 1.5), Vec3(1, 0, 0));
  ASSERT_TRUE(d);
  EXPECT_NEAR(*d, 3.0, 1e-12);
  EXPECT_NEAR(cast_ray(s, Vec3(0, 0, 1.5), Vec3(0, -1, 0)).value(), 2.5, 1e-12);
  EXPECT_NEAR(cast_ray(s, Vec3(0, 0, 1.5), Vec3(0, 0, -1)).value(), 1.5, 1e-12);
}

TEST(CastRay, SphereCenterLine) {
  Scene s;
  s.spheres.push_back({Vec3(2, 0, 1.5), 0.5});
  EXPECT_NEAR(cast_ray(s, Vec3(0, 0, 1.5), Vec3(1, 0, 0)).value(), 1.5, 1e-12);
}

TEST(CastRay, BoxFace) {
  Scene s;
  s.boxes.push_back({Vec3(1, -0.5, 0), Vec3(2, 0.5, 1)});
  EXPECT_NEAR(cast_ray(s, Vec3(0, 0, 0.5), Vec3(1, 0, 0)).value(), 1.0, 1e-12);
  EXPECT_NEAR(cast_ray(s, Vec3(0, 0, 1.5), Vec3(1, 0, 0)).value(), 3.0, 1e-12);
}

TEST(CastRay, RejectsNonUnitDirection) {
  const Scene s;
  EXPECT_THROW(cast_ray(s, Vec3(0, 0, 1), Vec3(1, 0, 1e-4)), Error);
  EXPECT_NO_THROW(cast_ray(s, Vec3(0, 0, 1), Vec3(1 + 1e-12, 0, 0)));
}

TEST(CastRay, MatchesSphereMarchingOracle) {
  const Scene s = cluttered_scene();
  Rng rng(31);
  int checked = 0;
  double worst = 0.0;
  while (checked < 10000) {
    Vec3 o;
    for (int a = 0; a < 3; ++a) o(a) = rng.uniform(s.room.min(a) + 0.05, s.room.max(a) - 0.05);
    if (scene_sdf(s, o) < 0.05) continue;
    const Vec3 dir = testing::random_unit(rng);
    const auto fast = cast_ray(s, o, dir);
    const auto slow = march(s, o, dir);
    ASSERT_TRUE(fast);
    ASSERT_TRUE(slow);
    worst = std::max(worst, std::abs(*fast - *slow));
    ++checked;
  }
  EXPECT_LT(worst, 1e-4);
}

const CameraIntrinsics kCentered{160, 160, 160, 120, 321, 241};

TEST(RenderDepth, FrontalWall) {
  const Scene s;
  const RigidTransform t = look_at(Vec3(0, 0, 1.5), Vec3(1, 0, 1.5));
  const DepthMap d = render_depth(s, kCentered, t);
  // Rays within 0.5 of the axis vertically and 2.5/3 horizontally reach the
  // far wall at x = 3.
  EXPECT_NEAR(d.at(160, 120), 3.0, 1e-6);
  EXPECT_NEAR(d.at(40, 60), 3.0, 1e-6);
  EXPECT_NEAR(d.at(290, 190), 3.0, 1e-6);
  // Corner rays climb 0.75 per unit of depth and meet the ceiling 1.5 m up.
  EXPECT_NEAR(d.at(0, 0), 2.0, 1e-6);
  EXPECT_NEAR(d.at(320, 240), 2.0, 1e-6);
}

TEST(RenderDepth, CameraOutsideScene) {
  Scene s = cluttered_scene();
  try {
    render_depth(s, kCentered, look_at(Vec3(10, 0, 1), Vec3(0, 0, 1)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCameraOutsideScene);
  }
  try {
    render_depth(s, kCentered, look_at(Vec3(1.0, 0.8, 0.6), Vec3(0, 0, 1)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCameraOutsideScene);
  }
}

TEST(RenderDepth, PixelsLieOnSurfaces) {
  const Scene s = cluttered_scene();
  RigLayout layout;
  const auto poses = layout_extrinsics(layout, s);
  double worst = 0.0;
  std::size_t valid = 0;
  for (const auto& t : poses) {
    const DepthMap d = render_depth(s, layout.intrinsics, t);
    const RigidTransform inv = t.inverse();
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        if (!d.valid_at(x, y)) continue;
        ++valid;
        const Vec3 w = inv.apply(backproject(layout.intrinsics, {double(x), double(y)}, d.at(x, y)));
        worst = std::max(worst, std::abs(scene_sdf(s, w)));
      }
    }
  }
  EXPECT_EQ(valid, 4u * 320u * 240u);
  EXPECT_LT(worst, 1e-6);
}

TEST(RenderDepth, Deterministic) {
  const Scene s = cluttered_scene();
  RigLayout layout;
  const auto t = layout_extrinsics(layout, s)[1];
  const DepthMap a = render_depth(s, layout.intrinsics, t);
  const DepthMap b = render_depth(s, layout.intrinsics, t);
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)), 0);
}

TEST(LookAt, OpticalAxisAndRowsDown) {
  const Vec3 c(2, 1, 2.5);
  const Vec3 target(0, 0, 1.5);
  const RigidTransform t = look_at(c, target);
  EXPECT_LT(t.apply(c).norm(), 1e-12);
  const Vec3 p = t.apply(target);
  EXPECT_NEAR(p.x(), 0.0, 1e-12);
  EXPECT_NEAR(p.y(), 0.0, 1e-12);
  EXPECT_NEAR(p.z(), (target - c).norm(), 1e-12);
  // A point below the target appears lower in the image (larger v).
  EXPECT_GT(t.apply(target - Vec3(0, 0, 0.1)).y(), 0.0);
}

TEST(Layout, CamerasOnCircleLookingAtCenter) {
  const Scene s;
  RigLayout layout;
  const auto poses = layout_extrinsics(layout, s);
  ASSERT_EQ(poses.size(), 4u);
  const Vec3 center = 0.5 * (s.room.min + s.room.max);
  for (const auto& t : poses) {
    const Vec3 c = t.center();
    EXPECT_NEAR(std::hypot(c.x() - center.x(), c.y() - center.y()), layout.radius, 1e-12);
    EXPECT_NEAR(c.z(), layout.height, 1e-12);
    const Vec3 p = t.apply(center);
    EXPECT_NEAR(p.x(), 0.0, 1e-9);
    EXPECT_NEAR(p.y(), 0.0, 1e-9);
    EXPECT_TRUE(s.is_free(c));
  }
}

TEST(Dataset, ZeroNoiseMeansInitEqualsTruth) {
  RigLayout layout;
  layout.intrinsics = {40, 40, 39.5, 29.5, 80, 60};
  const CameraRig rig = generate_dataset(layout, Scene{}, NoiseModel{});
  for (const auto& c : rig.cameras) {
    EXPECT_EQ(c.init_extrinsic.rotation.matrix(), c.gt_extrinsic->rotation.matrix());
    EXPECT_EQ(c.init_extrinsic.translation, c.gt_extrinsic->translation);
  }
}

TEST(Dataset, GaugeCameraIsNotPerturbed) {
  RigLayout layout;
  layout.intrinsics = {40, 40, 39.5, 29.5, 80, 60};
  NoiseModel n;
  n.rot_perturb_deg = 2;
  n.trans_perturb_m = 0.05;
  n.seed = 9;
  const CameraRig rig = generate_dataset(layout, Scene{}, n);
  EXPECT_EQ(rig.cameras[0].init_extrinsic.rotation.matrix(), rig.cameras[0].gt_extrinsic->rotation.matrix());
  EXPECT_NE(rig.cameras[1].init_extrinsic.translation, rig.cameras[1].gt_extrinsic->translation);
}

TEST(Dataset, SameSeedSameBytes) {
  RigLayout layout;
  layout.intrinsics = {80, 80, 79.5, 59.5, 160, 120};
  NoiseModel n;
  n.depth_sigma_rel = 0.01;
  n.dropout_rate = 0.1;
  n.rot_perturb_deg = 2;
  n.trans_perturb_m = 0.05;
  n.seed = 123;
  const auto a = testing::scratch_dir("_a");
  const auto b = testing::scratch_dir("_b");
  save_rig(generate_dataset(layout, cluttered_scene(), n), a);
  save_rig(generate_dataset(layout, cluttered_scene(), n), b);
  for (const auto& f : {"rig.json", "depth_0.bin", "depth_1.bin", "depth_2.bin", "depth_3.bin"}) {
    EXPECT_EQ(testing::read_bytes(a / f), testing::read_bytes(b / f)) << f;
  }
  n.seed = 124;
  const auto c = testing::scratch_dir("_c");
  save_rig(generate_dataset(layout, cluttered_scene(), n), c);
  EXPECT_NE(testing::read_bytes(a / "depth_1.bin"), testing::read_bytes(c / "depth_1.bin"));
}

TEST(Dataset, DepthNoiseAndDropoutStatistics) {
  DepthMap clean(200, 200, 2.0f);
  NoiseModel n;
  n.depth_sigma_rel = 0.01;
  n.dropout_rate = 0.2;
  n.seed = 4;
  const DepthMap noisy = apply_depth_noise(clean, n, 1);
  double s1 = 0, s2 = 0;
  std::size_t valid = 0;
  for (float v : noisy.values) {
    if (!DepthMap::is_valid(v)) continue;
    ++valid;
    const double r = v / 2.0 - 1.0;
    s1 += r;
    s2 += r * r;
  }
  EXPECT_NEAR(static_cast<double>(valid) / noisy.values.size(), 0.8, 0.01);
  EXPECT_NEAR(s1 / valid, 0.0, 5e-4);
  EXPECT_NEAR(std::sqrt(s2 / valid), 0.01, 5e-4);
}

TEST(Perturbation, RotationErrorFollowsChiMean) {
  // Per-axis N(0, sigma^2) rotation noise has geodesic angle ~ sigma * chi_3,
  // whose mean is sigma * 2 * sqrt(2 / pi).
  const std::vector<RigidTransform> gt = layout_extrinsics(RigLayout{}, Scene{});
  NoiseModel n;
  n.rot_perturb_deg = 2.0;
  double sum = 0.0;
  int count = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    n.seed = seed;
    const auto init = perturb_extrinsics(gt, n);
    for (std::size_t c = 1; c < gt.size(); ++c) {
      sum += rotation_error_deg(init[c].rotation, gt[c].rotation);
      ++count;
    }
  }
  const double expected = 2.0 * 2.0 * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(sum / count, expected, 0.15 * expected);
}

TEST(Visibility, EveryDefaultPairOverlaps) {
  const CameraRig rig = generate_dataset(RigLayout{}, Scene{}, NoiseModel{});
  const auto gt = rig.gt_extrinsics();
  for (int i = 0; i < rig.size(); ++i) {
    for (int j = 0; j < rig.size(); ++j) {
      if (i == j) continue;
      EXPECT_GE(covisible_fraction(rig, gt, i, j), 0.20) << i << "->" << j;
    }
  }
}

TEST(SceneConfig, Validation) {
  Scene s;
  s.spheres.push_back({Vec3(2.9, 0, 1), 0.5});
  EXPECT_THROW(s.validate(), Error);
  Scene flat;
  flat.room.max.z() = 0.0;
  EXPECT_THROW(flat.validate(), Error);
  NoiseModel n;
  n.dropout_rate = 1.0;
  EXPECT_THROW(n.validate(), Error);
  RigLayout l;
  l.n_cameras = 1;
  EXPECT_THROW(l.validate(), Error);
}

TEST(SceneConfig, JsonRoundTripAndFieldErrors) {
  SimConfig cfg;
  cfg.scene = cluttered_scene();
  cfg.layout.n_cameras = 5;
  cfg.layout.look_at = Vec3(0.1, 0.2, 1.0);
  cfg.noise.seed = 42;
  cfg.noise.depth_sigma_rel = 0.02;
  const SimConfig back = sim_config_from_json(sim_config_to_json(cfg));
  EXPECT_EQ(sim_config_to_json(back), sim_config_to_json(cfg));

  nlohmann::json bad = {{"layout", {{"radius", "far"}}}};
  try {
    sim_config_from_json(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedJson);
    EXPECT_NE(std::string(e.what()).find("layout.radius"), std::string::npos);
  }
  nlohmann::json unknown = {{"noise", {{"sigma", 0.1}}}};
  try {
    sim_config_from_json(unknown);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("noise.sigma"), std::string::npos);
  }
}

}  // namespace
}  // namespace rigcal
