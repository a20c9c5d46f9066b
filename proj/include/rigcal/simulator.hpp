#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "rigcal/dataset.hpp"
#include "rigcal/geometry.hpp"

namespace rigcal::sim {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

/// Axis-aligned box given by its min and max corners.
struct AlignedBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Closed room (seen from inside) plus optional solid obstacles.
struct Scene {
  AlignedBox room{Vec3(-3.0, -2.5, 0.0), Vec3(3.0, 2.5, 3.0)};
  std::vector<Sphere> spheres;
  std::vector<AlignedBox> boxes;

  /// Throws kInvalidArgument if the room has non-positive extents or an
  /// obstacle pokes outside it.
  void validate() const;

  /// True iff `p` is strictly inside the room and outside every obstacle.
  bool is_free(const Vec3& p) const;
};

struct NoiseModel {
  double depth_sigma_rel = 0.0;
  double rot_perturb_deg = 0.0;
  double trans_perturb_m = 0.0;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Cameras evenly spaced on a horizontal circle, all looking at one point.
struct RigLayout {
  int n_cameras = 4;
  double radius = 2.2;
  double height = 2.7;
  /// Azimuth of camera 0, degrees.
  double start_angle_deg = 0.0;
  /// Point all cameras look at; the room center when unset.
  std::optional<Vec3> look_at;
  CameraIntrinsics intrinsics{160.0, 160.0, 159.5, 119.5, 320, 240};

  void validate() const;
};

/// Distance along `dir` to the nearest surface, or empty on a miss.
/// Throws kInvalidArgument when |dir| differs from 1 by more than 1e-9.
std::optional<double> cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir);

/// Stores the camera-frame z of each pixel center's first hit.
/// Throws kCameraOutsideScene when the camera center is not in free space.
DepthMap render_depth(const Scene& scene, const CameraIntrinsics& k, const RigidTransform& world_to_camera);

/// World-to-camera transform for a camera at `center` looking at `target`,
/// with image rows pointing along world -z as much as possible.
RigidTransform look_at(const Vec3& center, const Vec3& target);

std::vector<RigidTransform> layout_extrinsics(const RigLayout& layout, const Scene& scene);

/// init = exp(delta) * gt with delta drawn per camera from the noise model.
/// The gauge camera keeps its ground-truth pose.
std::vector<RigidTransform> perturb_extrinsics(const std::vector<RigidTransform>& gt, const NoiseModel& noise,
                                               int gauge_camera = 0);

/// Multiplicative Gaussian depth noise followed by pixel dropout (NaN).
DepthMap apply_depth_noise(const DepthMap& clean, const NoiseModel& noise, int camera_id);

/// Noise-free depth maps of every camera at its ground-truth pose.
std::vector<DepthMap> render_clean_depths(const RigLayout& layout, const Scene& scene);

CameraRig generate_dataset(const RigLayout& layout, const Scene& scene, const NoiseModel& noise);

/// Fraction of camera-i pixels whose surface point is also seen by camera j
/// (reprojects in bounds and agrees with j's depth within `rel_tol`).
double covisible_fraction(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics, int i, int j,
                          double rel_tol = 1e-2);

struct SimConfig {
  Scene scene;
  RigLayout layout;
  NoiseModel noise;
};

/// Missing fields take the defaults above. Throws kMalformedJson naming the
/// offending field.
SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json sim_config_to_json(const SimConfig& cfg);

}  // namespace rigcal::sim
